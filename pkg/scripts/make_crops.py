"""Regenerate the committed test crops under tests/data.

Pulls a handful of 128x128 grayscale crops and one 96x96 color crop out of
scikit-image's bundled sample photographs and writes them as PGM/PPM. The
test suite reads only the committed files; scikit-image is needed only when
re-running this script.

Crop choice is deliberate, not arbitrary:
  * cam_tripod / cam_legs / coins: edge-rich content where zooming has real
    geometry to recover (the zooming acceptance threshold is measured here).
  * cam_buildings / checker: straight edges at stable positions, the regime
    the two-layer deconvolution hierarchy targets.
  * astronaut_96: color protocol smoke and acceptance runs.

Usage: python3 scripts/make_crops.py [outdir]
"""

import sys
from pathlib import Path

from skimage import data

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from patchgmm.imageio import Image, write_image  # noqa: E402


def main(outdir: str | None = None) -> None:
    out = Path(outdir) if outdir else Path(__file__).resolve().parent.parent / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)

    cam = data.camera().astype(float)
    coins = data.coins().astype(float)
    checker = data.checkerboard().astype(float)
    astro = data.astronaut().astype(float)

    crops = {
        "cam_tripod.pgm": cam[320:448, 80:208],
        "cam_legs.pgm": cam[352:480, 192:320],
        "cam_buildings.pgm": cam[64:192, 0:128],
        "coins.pgm": coins[64:192, 128:256],
        "checker.pgm": checker[36:164, 36:164],
        "astronaut_96.ppm": astro[80:176, 80:176],
    }
    for name, arr in crops.items():
        write_image(Image(arr), out / name)
        print(f"wrote {out / name} {arr.shape}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
