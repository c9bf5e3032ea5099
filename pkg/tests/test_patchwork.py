"""Patch grid bookkeeping: hand-worked extractions, exact inverses, tiling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchgmm.imageio import Image
from patchgmm.patchwork import (
    aggregate_grid,
    aggregate_patches,
    extract_matrix,
    extract_patches,
    grid_offsets,
    patch_matrix,
    plan_regions,
)


# --- hand-worked cases --------------------------------------------------------

def test_extract_known_4x4():
    img = Image(np.arange(16.0).reshape(4, 4))
    patches = extract_patches(img, side=2, stride=2)
    assert [p.origin for p in patches] == [(0, 0), (0, 2), (2, 0), (2, 2)]
    assert patches[0].values.tolist() == [0, 1, 4, 5]
    assert patches[3].values.tolist() == [10, 11, 14, 15]


def test_flush_final_origin_covers_border():
    # extent 5, side 2, stride 2 -> origins 0, 2, and a flush 3
    assert grid_offsets(5, 2, 2).tolist() == [0, 2, 3]
    img = Image(np.arange(25.0).reshape(5, 5))
    patches = extract_patches(img, 2, 2)
    assert len(patches) == 9
    assert patches[-1].origin == (3, 3)


def test_color_patches_channel_major():
    arr = np.zeros((2, 2, 3))
    arr[..., 0] = [[1, 2], [3, 4]]
    arr[..., 1] = [[5, 6], [7, 8]]
    arr[..., 2] = [[9, 10], [11, 12]]
    (p,) = extract_patches(Image(arr), 2, 1)
    assert p.values.tolist() == [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
    assert p.channels == 3


def test_extract_matrix_matches_list_form(rng):
    img = Image(rng.uniform(0, 255, (9, 7)))
    vals, rows, cols = extract_matrix(img, 3, 2)
    listed = patch_matrix(extract_patches(img, 3, 2))
    assert np.array_equal(vals, listed)
    assert len(vals) == len(rows) * len(cols)


def test_extract_matrix_color_matches_list_form(rng):
    img = Image(rng.uniform(0, 255, (6, 8, 3)))
    vals, rows, cols = extract_matrix(img, 3, 3)
    listed = patch_matrix(extract_patches(img, 3, 3))
    assert np.array_equal(vals, listed)


def test_aggregate_singleton_identity():
    img = Image(np.arange(12.0).reshape(3, 4))
    patches = extract_patches(img, 1, 1)
    back = aggregate_patches(patches, (3, 4))
    assert np.array_equal(back.data, img.data)


def test_aggregate_hand_average():
    # two overlapping 2x2 patches on a 2x3 canvas; middle column is covered
    # twice and must be the mean of its two contributions
    from patchgmm.patchwork import Patch

    a = Patch(np.array([1.0, 2, 5, 6]), (0, 0), 2)
    b = Patch(np.array([4.0, 3, 8, 7]), (0, 1), 2)
    out = aggregate_patches([a, b], (2, 3))
    assert out.data.tolist() == [[1, 3, 3], [5, 7, 7]]


def test_aggregate_uncovered_pixel_raises():
    from patchgmm.patchwork import Patch

    with pytest.raises(ValueError, match="not covered"):
        aggregate_patches([Patch(np.zeros(4), (0, 0), 2)], (2, 3))


def test_aggregate_out_of_bounds_raises():
    from patchgmm.patchwork import Patch

    with pytest.raises(ValueError, match="exceeds"):
        aggregate_patches([Patch(np.zeros(4), (1, 1), 2)], (2, 2))


# --- inverse property: extract then aggregate reproduces the image exactly ---

@settings(max_examples=40)
@given(
    h=st.integers(3, 12),
    w=st.integers(3, 12),
    side=st.integers(1, 3),
    stride=st.integers(1, 4),
    color=st.booleans(),
    seed=st.integers(0, 2**31),
)
def test_extract_aggregate_round_trip(h, w, side, stride, color, seed):
    side = min(side, h, w)
    stride = min(stride, side)  # coverage is promised only for stride <= side
    rnd = np.random.default_rng(seed)
    shape = (h, w, 3) if color else (h, w)
    img = Image(rnd.uniform(0, 255, shape))
    patches = extract_patches(img, side, stride)
    back = aggregate_patches(patches, shape)
    assert np.allclose(back.data, img.data, atol=1e-12)


@settings(max_examples=40)
@given(
    h=st.integers(3, 12),
    w=st.integers(3, 12),
    side=st.integers(1, 3),
    stride=st.integers(1, 4),
    color=st.booleans(),
    seed=st.integers(0, 2**31),
)
def test_grid_round_trip_matches(h, w, side, stride, color, seed):
    side = min(side, h, w)
    stride = min(stride, side)
    rnd = np.random.default_rng(seed)
    shape = (h, w, 3) if color else (h, w)
    img = Image(rnd.uniform(0, 255, shape))
    vals, rows, cols = extract_matrix(img, side, stride)
    back = aggregate_grid(vals, rows, cols, side, shape)
    assert np.allclose(back.data, img.data, atol=1e-12)


# --- region tiling -------------------------------------------------------------

def test_plan_regions_half_overlap():
    plan = plan_regions((256, 256), 128)
    # origins 0, 64, 128 on each axis
    rows = sorted({r0 for r0, _, _, _ in plan.rects})
    assert rows == [0, 64, 128]
    assert all(r1 - r0 == 128 and c1 - c0 == 128 for r0, r1, c0, c1 in plan.rects)


def test_plan_regions_covers_and_clips():
    plan = plan_regions((150, 90), 128)
    covered = np.zeros((150, 90), dtype=bool)
    for r0, r1, c0, c1 in plan.rects:
        assert 0 <= r0 < r1 <= 150 and 0 <= c0 < c1 <= 90
        covered[r0:r1, c0:c1] = True
    assert covered.all()


def test_plan_regions_small_image_single_region():
    plan = plan_regions((64, 64), 128)
    assert plan.rects == [(0, 64, 0, 64)]


@settings(max_examples=60)
@given(
    h=st.integers(1, 300),
    w=st.integers(1, 300),
    side=st.integers(1, 140),
)
def test_plan_regions_cover_property(h, w, side):
    plan = plan_regions((h, w), side)
    covered = np.zeros((h, w), dtype=bool)
    for r0, r1, c0, c1 in plan.rects:
        assert r1 - r0 <= side and c1 - c0 <= side
        covered[r0:r1, c0:c1] = True
    assert covered.all()


def test_validation_errors():
    with pytest.raises(ValueError):
        grid_offsets(4, 5, 1)
    with pytest.raises(ValueError):
        grid_offsets(4, 2, 0)
    with pytest.raises(ValueError):
        plan_regions((10, 10), 0)
