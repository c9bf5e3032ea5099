"""Patch extraction, overlapped aggregation, and region tiling.

Patches are square windows flattened to 1-D vectors. Color patches are
channel-major: all red samples, then all green, then all blue, each block in
row-major order, so a color patch of side b has length 3*b*b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imageio import Image


@dataclass
class Patch:
    """One flattened patch: `values` (length side*side*channels), grid `origin`."""

    values: np.ndarray
    origin: tuple[int, int]
    side: int

    @property
    def channels(self) -> int:
        return len(self.values) // (self.side * self.side)


@dataclass
class RegionPlan:
    """Half-overlapped square tiling of an image.

    `rects` lists (row0, row1, col0, col1) with exclusive upper bounds, in
    row-major order of region origin.
    """

    image_shape: tuple[int, ...]
    region_side: int
    rects: list[tuple[int, int, int, int]] = field(default_factory=list)


def grid_offsets(extent: int, side: int, stride: int) -> np.ndarray:
    """1-D patch origins: multiples of `stride`, plus a final origin flush with
    the far border so every pixel is covered."""
    if side > extent:
        raise ValueError(f"window side {side} exceeds extent {extent}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    last = extent - side
    offs = list(range(0, last + 1, stride))
    if offs[-1] != last:
        offs.append(last)
    return np.asarray(offs, dtype=np.int64)


def extract_patches(image: Image, side: int, stride: int = 1) -> list[Patch]:
    """All square patches on the stride grid (with flush final row/column).

    Color images yield channel-major vectors of length 3*side*side.
    """
    rows = grid_offsets(image.height, side, stride)
    cols = grid_offsets(image.width, side, stride)
    data = image.data
    out: list[Patch] = []
    for r in rows:
        for c in cols:
            block = data[r : r + side, c : c + side]
            if block.ndim == 3:
                vec = block.transpose(2, 0, 1).reshape(-1)
            else:
                vec = block.reshape(-1)
            out.append(Patch(np.array(vec, dtype=np.float64), (int(r), int(c)), side))
    return out


def patch_matrix(patches: list[Patch]) -> np.ndarray:
    """Stack patch vectors into a (num_patches, dim) float64 matrix."""
    return np.stack([p.values for p in patches]).astype(np.float64, copy=False)


def extract_matrix(
    image: Image, side: int, stride: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized extraction: (values (P, dim), row_origins, col_origins).

    Row-major patch order over the origin grid, identical to extract_patches.
    """
    rows = grid_offsets(image.height, side, stride)
    cols = grid_offsets(image.width, side, stride)
    data = image.data
    if data.ndim == 2:
        windows = np.lib.stride_tricks.sliding_window_view(data, (side, side))
        vals = windows[np.ix_(rows, cols)].reshape(len(rows) * len(cols), side * side)
    else:
        windows = np.lib.stride_tricks.sliding_window_view(data, (side, side), axis=(0, 1))
        # windows: (h', w', 3, side, side) -> channel-major flatten
        vals = windows[np.ix_(rows, cols)].reshape(len(rows) * len(cols), 3 * side * side)
    return np.ascontiguousarray(vals, dtype=np.float64), rows, cols


def aggregate_grid(
    values: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    side: int,
    image_shape: tuple[int, ...],
) -> Image:
    """Average overlapping patch estimates laid out on an origin grid.

    `values` is (len(rows)*len(cols), dim) in row-major grid order. Every pixel
    of `image_shape` must be covered by at least one patch.
    """
    channels = 1 if len(image_shape) == 2 else image_shape[2]
    height, width = image_shape[0], image_shape[1]
    accum = np.zeros((channels, height, width))
    grid = values.reshape(len(rows), len(cols), channels, side, side)
    for i in range(side):
        for j in range(side):
            # one strided slab add per in-patch offset instead of per patch
            accum[:, rows[:, None] + i, cols[None, :] + j] += grid[:, :, :, i, j].transpose(
                2, 0, 1
            )
    # coverage counts are separable: count(r, c) = count_r(r) * count_c(c)
    count_r = np.zeros(height)
    count_c = np.zeros(width)
    for i in range(side):
        np.add.at(count_r, rows + i, 1.0)
        np.add.at(count_c, cols + i, 1.0)
    counts = np.outer(count_r, count_c)
    if np.any(counts == 0):
        r, c = np.argwhere(counts == 0)[0]
        raise ValueError(f"pixel ({r}, {c}) not covered by any patch")
    out = accum / counts[None, :, :]
    if channels == 1:
        return Image(out[0])
    return Image(out.transpose(1, 2, 0))


def aggregate_patches(patches: list[Patch], image_shape: tuple[int, ...]) -> Image:
    """Average overlapping patches into an image (per-pixel mean).

    Works for arbitrary patch lists; raises if any pixel is uncovered or a
    patch sticks out of the image.
    """
    channels = 1 if len(image_shape) == 2 else image_shape[2]
    height, width = image_shape[0], image_shape[1]
    accum = np.zeros((channels, height, width))
    counts = np.zeros((height, width))
    for p in patches:
        r, c = p.origin
        b = p.side
        if r < 0 or c < 0 or r + b > height or c + b > width:
            raise ValueError(f"patch at origin {p.origin} side {b} exceeds image {image_shape}")
        if p.channels != channels:
            raise ValueError(
                f"patch has {p.channels} channels, image has {channels}"
            )
        block = p.values.reshape(channels, b, b)
        accum[:, r : r + b, c : c + b] += block
        counts[r : r + b, c : c + b] += 1.0
    if np.any(counts == 0):
        r, c = np.argwhere(counts == 0)[0]
        raise ValueError(f"pixel ({r}, {c}) not covered by any patch")
    out = accum / counts[None, :, :]
    if channels == 1:
        return Image(out[0])
    return Image(out.transpose(1, 2, 0))


def plan_regions(image_shape: tuple[int, ...], region_side: int) -> RegionPlan:
    """Half-overlapped square regions covering the image.

    Region origins step by region_side // 2 with a final origin flush with the
    border; regions are clipped to the image, so edge regions may be smaller
    when the image is smaller than region_side.
    """
    height, width = image_shape[0], image_shape[1]
    if region_side < 1:
        raise ValueError(f"region side must be >= 1, got {region_side}")
    step = max(1, region_side // 2)

    def starts(extent: int) -> list[int]:
        if extent <= region_side:
            return [0]
        last = extent - region_side
        offs = list(range(0, last + 1, step))
        if offs[-1] != last:
            offs.append(last)
        return offs

    rects = []
    for r in starts(height):
        for c in starts(width):
            rects.append((r, min(r + region_side, height), c, min(c + region_side, width)))
    return RegionPlan(tuple(image_shape), region_side, rects)
