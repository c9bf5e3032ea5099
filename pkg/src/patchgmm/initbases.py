"""Initial Gaussian models from synthetic edge geometry.

Directional models come from PCA of patches straddling a step edge at a
fixed orientation. Each family pools several blur widths and sub-pixel line
offsets: hard axis-aligned edges alone collapse to a handful of distinct
patterns (every fractional shift thresholds to the same pixels), which
starves the PCA of rank, while the pooled family yields smooth oscillatory
atoms from low to high frequency along the edge normal. The leading atom is
then replaced by the constant (DC) atom and the rest re-orthonormalized, so
every model can represent local brightness exactly. Position models refine
a direction into bands of the edge's perpendicular offset inside the patch,
which is what deconvolution needs. A zigzag-ordered DCT model covers
oscillatory texture. All models share one eigenvalue profile, taken from an
oblique-edge donor family (the generic case; axis-aligned families are
rank-deficient by the argument above), so that selection between models is
driven by the bases, not by arbitrary per-family scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gmm_core import EmConfig, GaussianModel
from .imageio import Image

_GS_TOL = 1e-10

DEFAULT_BLUR_LEVELS = (0.5, 1.0, 1.5, 2.0)
# directional families also see the sharp edge so the spectrum keeps its
# high-frequency tail; the eigenvalue donor family deliberately does not,
# a hard step inflates mid eigenvalues and over-fits smooth regions
DIRECTIONAL_BLUR_LEVELS = (0.0,) + DEFAULT_BLUR_LEVELS
_LINE_JITTERS = (0.0, 0.2, 0.4, 0.6, 0.8)
# eigenvalue donor orientation: oblique, so the family is full-rank
_DONOR_ANGLE = math.pi / 6


@dataclass
class SyntheticEdgeSpec:
    """Step edge through the image center: 255 on the side where
    cos(angle)*(r - cy) - sin(angle)*(c - cx) >= offset, else 0."""

    angle: float
    side: int = 64
    blur: float = 0.0
    offset: float = 0.0


def _edge_field(spec: SyntheticEdgeSpec) -> np.ndarray:
    cy = (spec.side - 1) / 2.0
    cx = (spec.side - 1) / 2.0
    r = np.arange(spec.side)[:, None] - cy
    c = np.arange(spec.side)[None, :] - cx
    # signed perpendicular distance to the line (unit normal)
    return math.cos(spec.angle) * r - math.sin(spec.angle) * c - spec.offset


def synthetic_edge_image(spec: SyntheticEdgeSpec) -> Image:
    """Binary 0/255 half-plane image, optionally Gaussian-smoothed."""
    data = np.where(_edge_field(spec) >= 0.0, 255.0, 0.0)
    if spec.blur > 0:
        data = ndimage.gaussian_filter(data, spec.blur, mode="reflect")
    return Image(data)


def _windows(data: np.ndarray, side: int) -> np.ndarray:
    w = np.lib.stride_tricks.sliding_window_view(data, (side, side))
    return w.reshape(-1, side * side)


def edge_patches(
    angle: float,
    patch_side: int,
    image_side: int = 64,
    blur: float = 0.0,
    offset: float = 0.0,
) -> np.ndarray:
    """Patches of one edge image that straddle the edge.

    Straddling is decided on the sharp (unblurred) rendering of the same
    line, so blurred variants keep the identical patch selection.
    """
    spec = SyntheticEdgeSpec(angle, image_side, blur=blur, offset=offset)
    sharp = np.where(_edge_field(spec) >= 0.0, 255.0, 0.0)
    sharp_vals = _windows(sharp, patch_side)
    touching = (sharp_vals.min(axis=1) == 0.0) & (sharp_vals.max(axis=1) == 255.0)
    if not np.any(touching):
        raise RuntimeError(
            f"no patches straddle the edge at angle {angle:.4f}; "
            f"image side {image_side} too small for patch side {patch_side}"
        )
    vals = _windows(synthetic_edge_image(spec).data, patch_side)
    return vals[touching]


def edge_family(
    angle: float,
    patch_side: int,
    image_side: int = 64,
    blur_levels: tuple = DIRECTIONAL_BLUR_LEVELS,
    offsets: tuple = _LINE_JITTERS,
) -> np.ndarray:
    """Pooled edge-patch family over blur widths and sub-pixel line offsets."""
    pool = [
        edge_patches(angle, patch_side, image_side, blur=b, offset=j)
        for b in blur_levels
        for j in offsets
    ]
    return np.concatenate(pool, axis=0)


def _pca(patches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(eigenvalues desc, eigenvector columns desc) of the sample covariance."""
    centered = patches - patches.mean(axis=0)
    cov = centered.T @ centered / patches.shape[0]
    w, v = np.linalg.eigh(cov)
    return w[::-1], np.ascontiguousarray(v[:, ::-1])


def dc_atom(n: int) -> np.ndarray:
    return np.full(n, 1.0 / math.sqrt(n))


def _project_out(v: np.ndarray, atoms: list[np.ndarray]) -> np.ndarray:
    # two projection passes: a single pass leaves O(eps/norm) error in the
    # direction when the residual is tiny, which breaks orthonormality
    for _ in range(2):
        for a in atoms:
            v = v - (a @ v) * a
    return v


def replace_first_with_dc(basis: np.ndarray) -> np.ndarray:
    """Force the constant atom first, re-orthonormalizing the rest.

    Remaining eigenvectors are Gram-Schmidt-projected in descending-energy
    order; one of them collapses (it was the DC-like direction) and is
    dropped. If degeneracies leave the basis short, canonical coordinate
    vectors complete it.
    """
    n = basis.shape[0]
    atoms = [dc_atom(n)]
    for j in range(basis.shape[1]):
        if len(atoms) == n:
            break
        v = _project_out(basis[:, j].copy(), atoms)
        norm = np.linalg.norm(v)
        if norm > _GS_TOL:
            atoms.append(v / norm)
    for j in range(n):
        if len(atoms) == n:
            break
        v = np.zeros(n)
        v[j] = 1.0
        v = _project_out(v, atoms)
        norm = np.linalg.norm(v)
        if norm > _GS_TOL:
            atoms.append(v / norm)
    return np.stack(atoms, axis=1)


_DONOR_CACHE: dict = {}


def shared_eigenvalues(patch_side: int, epsilon: float) -> np.ndarray:
    """Eigenvalue profile all initial models share: the PCA spectrum of one
    oblique blurred-edge donor family, plus the epsilon floor."""
    key = (patch_side, float(epsilon))
    cached = _DONOR_CACHE.get(key)
    if cached is None:
        w, _ = _pca(
            edge_family(_DONOR_ANGLE, patch_side, blur_levels=DEFAULT_BLUR_LEVELS)
        )
        cached = w + epsilon
        _DONOR_CACHE[key] = cached
    return cached.copy()


def directional_basis(angle: float, patch_side: int, epsilon: float = 30.0) -> GaussianModel:
    """Zero-mean model for one edge orientation: DC atom, then edge PCA atoms."""
    _, vectors = _pca(edge_family(angle, patch_side))
    basis = replace_first_with_dc(vectors)
    eig = shared_eigenvalues(patch_side, epsilon)
    return GaussianModel.from_basis(
        np.zeros(patch_side * patch_side), basis, eig, epsilon, kind="directional", angle=angle
    )


def _zigzag_order(side: int) -> list[tuple[int, int]]:
    """(u, v) frequency pairs in JPEG-style zigzag order."""
    order = []
    for s in range(2 * side - 1):
        pairs = [(u, s - u) for u in range(side) if 0 <= s - u < side]
        if s % 2 == 0:
            pairs.reverse()  # even antidiagonals run bottom-left to top-right
        order.extend(pairs)
    return order


def dct_basis(patch_side: int) -> np.ndarray:
    """Orthonormal 2-D DCT-II atoms as columns, zigzag (low to high) order."""
    n = patch_side
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    table = math.sqrt(2.0 / n) * np.cos(math.pi * (2 * x + 1) * k / (2 * n))
    table[0] = math.sqrt(1.0 / n)
    cols = []
    for u, v in _zigzag_order(n):
        cols.append(np.outer(table[u], table[v]).reshape(-1))
    return np.stack(cols, axis=1)


def dct_model(patch_side: int, epsilon: float = 30.0) -> GaussianModel:
    """Oscillatory-texture model: DCT atoms with the shared eigenvalue profile."""
    basis = dct_basis(patch_side)
    eig = shared_eigenvalues(patch_side, epsilon)
    return GaussianModel.from_basis(
        np.zeros(patch_side * patch_side), basis, eig, epsilon, kind="dct"
    )


def position_bases(
    angle: float,
    patch_side: int,
    n_positions: int = 12,
    epsilon: float = 30.0,
    blur_levels: tuple = DEFAULT_BLUR_LEVELS,
    image_side: int = 64,
) -> list[GaussianModel]:
    """One model per perpendicular edge offset band inside the patch.

    Training patches come from blurred step edges at several blur levels and
    sub-pixel line offsets; a patch lands in band p by the signed distance of
    its center to the line. Bands sweep [-side/2, side/2) in equal steps.

    Unlike the directional models, each band model keeps its family's
    empirical mean. Pinning the edge position moves the step shape out of
    the PCA atoms (which only span residual shift/scale wiggles) and into
    the mean; with a zero mean the model cannot reproduce an edge through
    the patch center at all, and deconvolution under it collapses.
    """
    if n_positions < 1:
        raise ValueError(f"need at least one position band, got {n_positions}")
    half = patch_side / 2.0
    band_width = patch_side / n_positions
    buckets: list[list[np.ndarray]] = [[] for _ in range(n_positions)]

    centers_1d = np.arange(image_side - patch_side + 1) + (patch_side - 1) / 2.0
    for blur in blur_levels:
        for jitter in _LINE_JITTERS:
            spec = SyntheticEdgeSpec(angle, image_side, blur=blur, offset=jitter * band_width)
            sharp = np.where(_edge_field(spec) >= 0.0, 255.0, 0.0)
            img = synthetic_edge_image(spec)
            vals = _windows(img.data, patch_side)
            sharp_vals = _windows(sharp, patch_side)
            touching = (sharp_vals.min(axis=1) == 0.0) & (sharp_vals.max(axis=1) == 255.0)
            # signed center-to-line distance, same functional as the image
            cy = (image_side - 1) / 2.0
            dr = centers_1d - cy
            delta = (
                math.cos(angle) * dr[:, None]
                - math.sin(angle) * dr[None, :]
                - spec.offset
            ).reshape(-1)
            band = np.floor((delta + half) / band_width).astype(np.int64)
            ok = touching & (band >= 0) & (band < n_positions)
            for p in range(n_positions):
                sel = ok & (band == p)
                if np.any(sel):
                    buckets[p].append(vals[sel])

    eig = shared_eigenvalues(patch_side, epsilon)
    models = []
    for p, parts in enumerate(buckets):
        if not parts:
            raise RuntimeError(
                f"no training patches for position band {p} at angle {angle:.4f}"
            )
        fam = np.concatenate(parts, axis=0)
        _, vectors = _pca(fam)
        basis = replace_first_with_dc(vectors)
        models.append(
            GaussianModel.from_basis(
                fam.mean(axis=0),
                basis,
                eig,
                epsilon,
                kind="position",
                angle=angle,
                position=p,
            )
        )
    return models


@dataclass
class ModelSet:
    """Initial mixture: directional models + DCT, plus per-direction position
    families when the task needs them (deconvolution)."""

    models: list[GaussianModel]
    position_models: list[list[GaussianModel]] | None
    angles: list[float] = field(default_factory=list)


_DIRECTIONAL_CACHE: dict = {}
_POSITION_CACHE: dict = {}


def direction_angles(n_directions: int) -> list[float]:
    """Evenly spaced orientations over [0, pi)."""
    return [k * math.pi / n_directions for k in range(n_directions)]


def init_models(task: str, config: EmConfig, model_side: int | None = None) -> ModelSet:
    """Build the initial model set for a task.

    `model_side` overrides the patch side the models live on (deconvolution
    learns models on the extended window). Tasks 'deblur' and 'zoom_deblur'
    also get position families; others only the flat directional + DCT set.
    """
    side = config.patch_side if model_side is None else model_side
    eps = config.epsilon
    angles = direction_angles(config.n_directions)

    key = (config.n_directions, side, eps)
    models = _DIRECTIONAL_CACHE.get(key)
    if models is None:
        models = [directional_basis(a, side, eps) for a in angles]
        models.append(dct_model(side, eps))
        _DIRECTIONAL_CACHE[key] = models
    models = list(models)

    position_models = None
    if task in ("deblur", "zoom_deblur"):
        pkey = (config.n_directions, side, config.n_positions, eps)
        position_models = _POSITION_CACHE.get(pkey)
        if position_models is None:
            position_models = [
                position_bases(a, side, config.n_positions, eps) for a in angles
            ]
            # the texture model has no position structure: singleton family
            position_models.append([dct_model(side, eps)])
            _POSITION_CACHE[pkey] = position_models
        position_models = list(position_models)
    elif task not in ("inpaint", "zoom", "denoise"):
        raise ValueError(f"unknown task {task!r}")
    return ModelSet(models, position_models, angles)
