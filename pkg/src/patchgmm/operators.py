"""Degradation operators and their per-patch matrix restrictions.

An operator acts on whole images (apply / degrade) and can be restricted to a
square patch window, yielding the matrix that multiplies a flattened patch.
Restrictions are what the estimators consume; grouping them by `signature`
lets the E-step factor work shared across patches.

Conventions fixed here: images degraded by convolution use spatial
correlation with a centered odd-side kernel and half-sample symmetric
("reflect") boundary; uniform subsampling keeps samples whose row and column
indices are multiples of the factor (phase (0, 0)); truncated Gaussian
kernels are renormalized to sum 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imageio import Image, read_image, write_image


@dataclass
class PatchOperatorMatrix:
    """Matrix form of an operator restricted to one patch window.

    `translation_invariant` marks matrices that do not depend on the patch
    origin at all; `signature` is equal exactly when the matrices are equal,
    which is what the estimator cache keys on. `diag` carries the diagonal
    for pointwise operators (None otherwise); for those, `matrix` may be
    left None and is materialized on first use via `dense()`.
    """

    matrix: np.ndarray | None
    translation_invariant: bool
    signature: str
    diag: np.ndarray | None = None

    def dense(self) -> np.ndarray:
        if self.matrix is None:
            self.matrix = np.diag(self.diag)
        return self.matrix


def adjoint_apply(pom: PatchOperatorMatrix, vector: np.ndarray) -> np.ndarray:
    """Apply the transpose of a patch-restricted operator."""
    return pom.dense().T @ np.asarray(vector, dtype=np.float64)


def _digest(payload: bytes) -> str:
    return hashlib.blake2b(payload, digest_size=12).hexdigest()


def _reflect_index(i: int, n: int) -> int:
    """Half-sample symmetric boundary: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ..."""
    while i < 0 or i >= n:
        if i < 0:
            i = -1 - i
        else:
            i = 2 * n - 1 - i
    return i


class DegradationOperator:
    """Base class; subclasses implement apply and restrict_to_patch."""

    noise_sigma: float = 0.0

    def apply(self, image: Image) -> Image:
        raise NotImplementedError

    def observed_bitmap(self, shape: tuple[int, int]) -> np.ndarray:
        """(h, w) array of {0, 1}: where the degraded image carries signal."""
        return np.ones(shape)

    def restrict_to_patch(self, origin: tuple[int, int], side: int) -> PatchOperatorMatrix:
        raise NotImplementedError


@dataclass
class Identity(DegradationOperator):
    noise_sigma: float = 0.0

    def apply(self, image: Image) -> Image:
        return image.copy()

    def restrict_to_patch(self, origin: tuple[int, int], side: int) -> PatchOperatorMatrix:
        n = side * side
        return PatchOperatorMatrix(np.eye(n), True, f"id:{side}", diag=np.ones(n))


@dataclass
class Mask(DegradationOperator):
    """Pointwise mask: bitmap value 1 keeps a pixel, 0 zeroes it."""

    bitmap: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        bm = np.asarray(self.bitmap)
        if bm.ndim != 2:
            raise ValueError(f"mask bitmap must be 2-D, got shape {bm.shape}")
        vals = np.unique(bm)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("mask bitmap entries must be 0 or 1")
        self.bitmap = bm.astype(np.float64)

    def apply(self, image: Image) -> Image:
        if image.data.shape[:2] != self.bitmap.shape:
            raise ValueError(
                f"mask shape {self.bitmap.shape} does not match image {image.data.shape[:2]}"
            )
        if image.channels == 1:
            return Image(image.data * self.bitmap)
        return Image(image.data * self.bitmap[:, :, None])

    def observed_bitmap(self, shape: tuple[int, int]) -> np.ndarray:
        if tuple(shape) != self.bitmap.shape:
            raise ValueError(f"mask shape {self.bitmap.shape} does not match {shape}")
        return self.bitmap

    def restrict_to_patch(self, origin: tuple[int, int], side: int) -> PatchOperatorMatrix:
        r, c = origin
        h, w = self.bitmap.shape
        if r < 0 or c < 0 or r + side > h or c + side > w:
            raise ValueError(f"patch origin {origin} side {side} exceeds mask shape {(h, w)}")
        local = self.bitmap[r : r + side, c : c + side].reshape(-1)
        # exact packed bits, not a digest: equal signature <=> equal matrix
        sig = f"mask:{side}:" + np.packbits(local.astype(np.uint8)).tobytes().hex()
        return PatchOperatorMatrix(np.diag(local), False, sig, diag=local.copy())


@dataclass
class UniformSubsample(DegradationOperator):
    """Keep pixels at row/col indices that are multiples of `factor`, zero the rest."""

    factor: int
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"subsampling factor must be >= 1, got {self.factor}")

    def apply(self, image: Image) -> Image:
        bm = self.observed_bitmap(image.data.shape[:2])
        if image.channels == 1:
            return Image(image.data * bm)
        return Image(image.data * bm[:, :, None])

    def observed_bitmap(self, shape: tuple[int, int]) -> np.ndarray:
        h, w = shape
        rows = (np.arange(h) % self.factor == 0).astype(np.float64)
        cols = (np.arange(w) % self.factor == 0).astype(np.float64)
        return np.outer(rows, cols)

    def restrict_to_patch(self, origin: tuple[int, int], side: int) -> PatchOperatorMatrix:
        r, c = origin
        s = self.factor
        rows = (np.arange(r, r + side) % s == 0).astype(np.float64)
        cols = (np.arange(c, c + side) % s == 0).astype(np.float64)
        local = np.outer(rows, cols).reshape(-1)
        sig = f"sub:{s}:{r % s}:{c % s}:{side}"
        return PatchOperatorMatrix(np.diag(local), False, sig, diag=local)


def _check_kernel(kernel: np.ndarray) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got shape {k.shape}")
    if k.shape[0] % 2 != 1:
        raise ValueError(f"kernel side must be odd, got {k.shape[0]}")
    return k


@dataclass
class Convolution(DegradationOperator):
    """Blur by spatial correlation with a centered kernel, reflect boundary."""

    kernel: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.kernel = _check_kernel(self.kernel)

    def apply(self, image: Image) -> Image:
        if image.channels == 1:
            return Image(ndimage.correlate(image.data, self.kernel, mode="reflect"))
        out = np.stack(
            [
                ndimage.correlate(image.data[:, :, ch], self.kernel, mode="reflect")
                for ch in range(3)
            ],
            axis=2,
        )
        return Image(out)

    def restrict_to_patch(self, origin: tuple[int, int], side: int) -> PatchOperatorMatrix:
        key = (side, self.kernel.tobytes())
        cached = _CONV_CACHE.get(key)
        if cached is None:
            cached = _conv_patch_matrix(self.kernel, side)
            _CONV_CACHE[key] = cached
        sig = f"conv:{_digest(self.kernel.tobytes())}:{side}"
        return PatchOperatorMatrix(cached, True, sig)


_CONV_CACHE: dict = {}


def _conv_patch_matrix(kernel: np.ndarray, side: int) -> np.ndarray:
    """Correlation of the patch with itself as a tiny image, reflect boundary."""
    radius = kernel.shape[0] // 2
    n = side * side
    mat = np.zeros((n, n))
    for xr in range(side):
        for xc in range(side):
            row = xr * side + xc
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    rr = _reflect_index(xr + dy, side)
                    cc = _reflect_index(xc + dx, side)
                    mat[row, rr * side + cc] += kernel[radius + dy, radius + dx]
    return mat


@dataclass
class MaskedConvolution(DegradationOperator):
    """Blur restricted to an extended patch: only interior rows are observed.

    The restriction acts on an extended window of side `side + 2*margin`; rows
    whose full kernel support lies inside that window (the interior side x side
    block) carry the correlation stencil, all other rows are zero. Image-level
    apply behaves like plain Convolution.
    """

    kernel: np.ndarray
    margin: int = 2
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.kernel = _check_kernel(self.kernel)
        if self.kernel.shape[0] // 2 > self.margin:
            raise ValueError(
                f"kernel radius {self.kernel.shape[0] // 2} exceeds margin {self.margin}"
            )

    def apply(self, image: Image) -> Image:
        return Convolution(self.kernel).apply(image)

    def extended_side(self, side: int) -> int:
        return side + 2 * self.margin

    def restrict_to_patch(self, origin: tuple[int, int], side: int) -> PatchOperatorMatrix:
        key = (side, self.margin, self.kernel.tobytes())
        cached = _MCONV_CACHE.get(key)
        if cached is None:
            cached = _masked_conv_matrix(self.kernel, side, self.margin)
            _MCONV_CACHE[key] = cached
        sig = f"mconv:{_digest(self.kernel.tobytes())}:{side}:{self.margin}"
        return PatchOperatorMatrix(cached, True, sig)


_MCONV_CACHE: dict = {}


def _masked_conv_matrix(kernel: np.ndarray, side: int, margin: int) -> np.ndarray:
    ext = side + 2 * margin
    radius = kernel.shape[0] // 2
    n = ext * ext
    mat = np.zeros((n, n))
    for xr in range(margin, margin + side):
        for xc in range(margin, margin + side):
            row = xr * ext + xc
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    mat[row, (xr + dy) * ext + (xc + dx)] = kernel[radius + dy, radius + dx]
    return mat


def expand_to_channels(pom: PatchOperatorMatrix, channels: int) -> PatchOperatorMatrix:
    """Block-diagonal lift for channel-major color patches (same op per channel).

    Pointwise operators stay lazy (diagonal only); dense ones get the full
    block-diagonal matrix.
    """
    if channels == 1:
        return pom
    sig = f"{pom.signature}:x{channels}"
    if pom.diag is not None:
        return PatchOperatorMatrix(
            None, pom.translation_invariant, sig, diag=np.tile(pom.diag, channels)
        )
    n_out, n_in = pom.matrix.shape
    mat = np.zeros((channels * n_out, channels * n_in))
    for ch in range(channels):
        mat[ch * n_out : (ch + 1) * n_out, ch * n_in : (ch + 1) * n_in] = pom.matrix
    return PatchOperatorMatrix(mat, pom.translation_invariant, sig, diag=None)


def apply(op: DegradationOperator, image: Image) -> Image:
    return op.apply(image)


def restrict_to_patch(
    op: DegradationOperator, origin: tuple[int, int], side: int
) -> PatchOperatorMatrix:
    return op.restrict_to_patch(origin, side)


def degrade(op: DegradationOperator, image: Image, seed: int) -> Image:
    """Apply the operator, then add white Gaussian noise on observed samples only."""
    out = op.apply(image)
    if op.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(out.data.shape) * op.noise_sigma
        bm = op.observed_bitmap(out.data.shape[:2])
        if out.channels > 1:
            bm = bm[:, :, None]
        out = Image(out.data + noise * bm)
    return out


def random_mask(shape: tuple[int, int], keep_ratio: float, seed: int) -> np.ndarray:
    """I.i.d. Bernoulli bitmap: each pixel observed with probability keep_ratio."""
    if not (0.0 < keep_ratio <= 1.0):
        raise ValueError(f"keep ratio must be in (0, 1], got {keep_ratio}")
    rng = np.random.default_rng(seed)
    return (rng.random(shape) < keep_ratio).astype(np.float64)


def gaussian_kernel(std: float, side: int = 5) -> np.ndarray:
    """Truncated isotropic Gaussian on an odd side x side grid, renormalized to sum 1."""
    if std <= 0:
        raise ValueError(f"kernel std must be positive, got {std}")
    if side % 2 != 1:
        raise ValueError(f"kernel side must be odd, got {side}")
    radius = side // 2
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * std * std))
    return g / g.sum()


def read_mask(path) -> np.ndarray:
    """Load a mask bitmap from PGM: 255 = observed (1), 0 = missing (0)."""
    img = read_image(path)
    if img.channels != 1:
        raise ValueError("mask files must be grayscale PGM")
    data = img.data
    bad = (data != 0) & (data != 255)
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"mask pixel ({r}, {c}) has value {data[r, c]:.0f}; masks must be 0 or 255"
        )
    return (data == 255).astype(np.float64)


def write_mask(bitmap: np.ndarray, path) -> None:
    bm = np.asarray(bitmap)
    write_image(Image(np.where(bm > 0, 255.0, 0.0)), path)


def read_kernel(path, normalize: bool = False) -> np.ndarray:
    """Load a kernel from text: first token is the odd side, then side*side
    row-major coefficients."""
    text = Path(path).read_text()
    tokens = text.split()
    if not tokens:
        raise ValueError(f"kernel file {path} is empty")
    try:
        side = int(tokens[0])
    except ValueError:
        raise ValueError(f"kernel file {path}: first token must be the integer side")
    expected = side * side
    if len(tokens) - 1 != expected:
        raise ValueError(
            f"kernel file {path}: expected {expected} coefficients for side {side}, "
            f"found {len(tokens) - 1}"
        )
    values = np.array([float(t) for t in tokens[1:]], dtype=np.float64).reshape(side, side)
    kernel = _check_kernel(values)
    if normalize:
        total = kernel.sum()
        if total == 0:
            raise ValueError(f"kernel file {path} sums to zero; cannot normalize")
        kernel = kernel / total
    return kernel


def write_kernel(kernel: np.ndarray, path) -> None:
    k = _check_kernel(kernel)
    lines = [str(k.shape[0])]
    for row in k:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
