"""Synthetic-edge training geometry and the initial model zoo.

The directional claims are checked against measurable structure (oscillation
axis, spectra, mean profiles), not against stored arrays, so a regression in
the family construction shows up as a geometric failure.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchgmm.gmm_core import EmConfig, check_model_invariants
from patchgmm.initbases import (
    ModelSet,
    SyntheticEdgeSpec,
    dc_atom,
    dct_basis,
    dct_model,
    direction_angles,
    directional_basis,
    edge_family,
    edge_patches,
    init_models,
    position_bases,
    replace_first_with_dc,
    shared_eigenvalues,
    synthetic_edge_image,
)

EPS = 30.0


# --- synthetic edges -----------------------------------------------------------

def test_sharp_edge_is_binary_half_plane():
    img = synthetic_edge_image(SyntheticEdgeSpec(0.0, side=16))
    assert set(np.unique(img.data)) == {0.0, 255.0}
    # angle 0: the normal is the row axis, rows are constant
    assert np.all(img.data == img.data[:, :1])
    # both half-planes present, split near the middle
    frac = (img.data == 255.0).mean()
    assert 0.3 < frac < 0.7


def test_edge_angle_rotates_normal():
    img = synthetic_edge_image(SyntheticEdgeSpec(math.pi / 2, side=16))
    # angle pi/2: columns constant (edge runs along rows)
    assert np.all(img.data == img.data[:1, :])


def test_offset_shifts_edge_along_normal():
    a = synthetic_edge_image(SyntheticEdgeSpec(0.0, side=16, offset=0.0)).data
    b = synthetic_edge_image(SyntheticEdgeSpec(0.0, side=16, offset=2.0)).data
    ra = (a[:, 0] == 255.0).sum()
    rb = (b[:, 0] == 255.0).sum()
    assert rb == ra - 2  # the 255 half-plane recedes by the offset


def test_blur_smooths_but_preserves_halves():
    img = synthetic_edge_image(SyntheticEdgeSpec(0.3, side=32, blur=1.5)).data
    assert img.min() > -1e-9 and img.max() < 255.0 + 1e-9
    assert len(np.unique(img)) > 2  # genuinely smoothed
    # far from the line the values still saturate
    assert img.max() > 250 and img.min() < 5


def test_edge_patches_all_straddle():
    pats = edge_patches(0.7, 8)
    assert pats.shape[1] == 64
    assert len(pats) > 50
    # every selected patch sees both sides on the sharp rendering
    sharp = edge_patches(0.7, 8, blur=0.0)
    assert np.all(sharp.min(axis=1) == 0.0)
    assert np.all(sharp.max(axis=1) == 255.0)


def test_blurred_family_keeps_selection_aligned():
    sharp = edge_patches(0.4, 8, blur=0.0, offset=0.3)
    soft = edge_patches(0.4, 8, blur=2.0, offset=0.3)
    assert sharp.shape == soft.shape  # same patch grid selection


def test_edge_family_pools_blurs_and_offsets():
    fam = edge_family(0.2, 8)
    one = edge_patches(0.2, 8)
    # 5 blur levels x 5 offsets, selection size can vary slightly per offset
    assert len(fam) > 20 * len(one) // 2
    assert fam.shape[1] == 64


# --- basis structure -------------------------------------------------------------

def test_dc_atom_is_unit_constant():
    atom = dc_atom(64)
    assert np.allclose(atom, 1 / 8.0)
    assert np.linalg.norm(atom) == pytest.approx(1.0)


def test_replace_first_with_dc_keeps_orthonormality(rng):
    q, _ = np.linalg.qr(rng.standard_normal((36, 36)))
    out = replace_first_with_dc(q)
    assert np.allclose(out[:, 0], dc_atom(36))
    assert np.allclose(out.T @ out, np.eye(36), atol=1e-8)


def test_directional_basis_model_structure():
    model = directional_basis(0.5, 8, EPS)
    check_model_invariants(model)
    assert model.kind == "directional"
    assert model.angle == pytest.approx(0.5)
    assert np.allclose(model.mean, 0.0)  # directional models are zero-mean
    assert np.allclose(model.basis[:, 0], dc_atom(64))


def test_directional_atoms_oscillate_along_the_normal():
    # for a horizontal edge (angle 0) the variation axis is vertical: leading
    # non-DC atoms should vary much more across rows than across columns
    model = directional_basis(0.0, 8, EPS)
    for j in (1, 2, 3):
        atom = model.basis[:, j].reshape(8, 8)
        row_var = np.var(atom.mean(axis=1))  # profile along the normal
        col_var = np.var(atom.mean(axis=0))
        assert row_var > 5 * col_var


def test_shared_eigenvalue_profile_properties():
    eig = shared_eigenvalues(8, EPS)
    assert eig.shape == (64,)
    assert np.all(np.diff(eig) <= 1e-9)  # descending
    assert np.all(eig >= EPS)
    assert eig[0] > 1e5  # step edges carry huge energy
    # roughly patch_side significant values, then a fast decay
    assert eig[7] / eig[0] > 1e-4
    assert eig[20] / eig[0] < 1e-2


def test_all_directional_models_share_the_profile():
    eig = shared_eigenvalues(8, EPS)
    for angle in (0.0, 0.4, 1.1):
        model = directional_basis(angle, 8, EPS)
        assert np.array_equal(model.eigenvalues, eig)


def test_dct_basis_orthonormal_zigzag():
    b = dct_basis(8)
    assert np.allclose(b.T @ b, np.eye(64), atol=1e-10)
    # zigzag order: first atom is DC, second is the lowest horizontal wave
    assert np.allclose(b[:, 0], dc_atom(64))
    second = b[:, 1].reshape(8, 8)
    assert np.var(second.mean(axis=0)) > 5 * np.var(second.mean(axis=1))


def test_dct_model_tags_and_mean():
    model = dct_model(8, EPS)
    check_model_invariants(model)
    assert model.kind == "dct"
    assert np.allclose(model.mean, 0.0)


# --- position families ------------------------------------------------------------

def test_position_bases_count_and_tags():
    fams = position_bases(0.0, 8, n_positions=12, epsilon=EPS)
    assert len(fams) == 12
    for p, m in enumerate(fams):
        check_model_invariants(m)
        assert m.kind == "position"
        assert m.position == p
        assert m.angle == pytest.approx(0.0)


def test_position_means_pin_the_edge_location():
    # angle 0: each band's mean is a horizontal step whose transition row is
    # pinned by the band index; measure it as the center of mass of the
    # vertical gradient
    fams = position_bases(0.0, 8, n_positions=12, epsilon=EPS)
    crossing_rows = []
    for m in fams:
        profile = m.mean.reshape(8, 8).mean(axis=1)
        g = np.abs(np.diff(profile))
        assert g.sum() > 10.0  # the mean really is a step, not flat
        crossing_rows.append(float((np.arange(7) + 0.5) @ g / g.sum()))
    # larger band index = patch center further past the line = edge higher up
    diffs = np.diff(crossing_rows)
    assert np.all(diffs <= 1e-9)
    assert crossing_rows[0] - crossing_rows[-1] > 4.0  # sweeps most of the patch


def test_position_means_are_nonzero_and_distinct():
    fams = position_bases(0.3, 8, n_positions=6, epsilon=EPS)
    means = np.stack([m.mean for m in fams])
    assert np.all(np.linalg.norm(means, axis=1) > 1.0)
    d = np.linalg.norm(means[:, None] - means[None, :], axis=2)
    assert d[np.triu_indices(6, 1)].min() > 10.0


def test_position_models_share_eigenvalue_profile():
    eig = shared_eigenvalues(8, EPS)
    for m in position_bases(0.9, 8, n_positions=4, epsilon=EPS):
        assert np.array_equal(m.eigenvalues, eig)


def test_position_bases_validation():
    with pytest.raises(ValueError):
        position_bases(0.0, 8, n_positions=0)


# --- assembled model sets -----------------------------------------------------------

def test_direction_angles_even_coverage():
    angles = direction_angles(18)
    assert len(angles) == 18
    assert angles[0] == 0.0
    assert np.allclose(np.diff(angles), math.pi / 18)
    assert angles[-1] < math.pi


def test_init_models_inpaint_flat_set():
    ms = init_models("inpaint", EmConfig(patch_side=8))
    assert isinstance(ms, ModelSet)
    assert len(ms.models) == 19  # 18 directions + oscillatory
    assert ms.position_models is None
    kinds = [m.kind for m in ms.models]
    assert kinds[:-1] == ["directional"] * 18
    assert kinds[-1] == "dct"
    for m in ms.models:
        check_model_invariants(m)


def test_init_models_deblur_families():
    ms = init_models("deblur", EmConfig(patch_side=8, n_positions=12), model_side=12)
    assert ms.position_models is not None
    assert len(ms.position_models) == 19
    assert all(len(f) == 12 for f in ms.position_models[:-1])
    assert len(ms.position_models[-1]) == 1  # oscillatory family is a singleton
    # models live on the extended window
    assert ms.models[0].dim == 144
    assert ms.position_models[0][0].dim == 144


def test_init_models_rejects_unknown_task():
    with pytest.raises(ValueError, match="unknown task"):
        init_models("sharpen", EmConfig())


def test_init_models_deterministic():
    a = init_models("inpaint", EmConfig(patch_side=8))
    b = init_models("inpaint", EmConfig(patch_side=8))
    for ma, mb in zip(a.models, b.models):
        assert np.array_equal(ma.basis, mb.basis)
        assert np.array_equal(ma.eigenvalues, mb.eigenvalues)


@settings(max_examples=10)
@given(angle=st.floats(0.0, math.pi, exclude_max=True))
def test_any_angle_yields_valid_model(angle):
    model = directional_basis(angle, 6, EPS)
    check_model_invariants(model)


def test_color_patch_side_models_exist():
    # 6x6 color protocol needs 6x6 gray models to bootstrap
    ms = init_models("inpaint", EmConfig(patch_side=6))
    assert ms.models[0].dim == 36
