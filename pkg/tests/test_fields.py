import numpy as np
import pytest

from latreg import fields

from oracles import (
    bilinear_at,
    bspline_basis_scalar,
    bspline_dense_naive,
    compose_naive,
    warp_naive,
)


def test_identity_field_shape_and_zeros():
    f = fields.make_identity_field(5, 9)
    assert f.shape == (5, 9, 2)
    assert np.all(f == 0.0)


def test_bspline_weights_match_scalar_basis():
    us = np.linspace(0.0, 1.0, 21)
    w = fields.cubic_bspline_weights(us)
    for i, u in enumerate(us):
        for m in range(4):
            assert w[i, m] == pytest.approx(bspline_basis_scalar(float(u), m), abs=1e-12)


def test_bspline_weights_partition_of_unity():
    us = np.linspace(0.0, 1.0, 101)
    w = fields.cubic_bspline_weights(us)
    assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(w >= 0.0)


def test_n_control_examples():
    # ceil(extent / spacing) + 3
    assert fields.n_control(16, 8.0) == 5
    assert fields.n_control(17, 8.0) == 6
    assert fields.n_control(64, 16.0) == 7


def test_dense_matches_naive_sum():
    rng = np.random.default_rng(7)
    spacing = 5.0
    h, w = 16, 16
    nr = fields.n_control(h, spacing)
    nc = fields.n_control(w, spacing)
    cp = rng.uniform(-3.0, 3.0, size=(nr, nc, 2))
    grid = fields.BSplineGrid(spacing=spacing, control_points=cp, height=h, width=w)
    dense = fields.bspline_to_dense(grid, h, w)
    naive = bspline_dense_naive(cp, spacing, h, w)
    assert np.max(np.abs(dense - naive)) < 1e-9


def test_dense_of_zero_controls_is_identity():
    grid = fields.BSplineGrid(
        spacing=4.0,
        control_points=np.zeros((fields.n_control(12, 4.0), fields.n_control(12, 4.0), 2)),
        height=12,
        width=12,
    )
    dense = fields.bspline_to_dense(grid, 12, 12)
    assert np.max(np.abs(dense)) == 0.0


def test_dense_constant_controls_give_constant_field():
    # partition of unity means constant control values pass through exactly
    nr, nc = fields.n_control(10, 3.0), fields.n_control(14, 3.0)
    cp = np.zeros((nr, nc, 2))
    cp[:, :, 0] = 1.25
    cp[:, :, 1] = -0.5
    grid = fields.BSplineGrid(spacing=3.0, control_points=cp, height=10, width=14)
    dense = fields.bspline_to_dense(grid, 10, 14)
    assert np.allclose(dense[:, :, 0], 1.25, atol=1e-12)
    assert np.allclose(dense[:, :, 1], -0.5, atol=1e-12)


def test_dense_shape_mismatch_rejected():
    grid = fields.BSplineGrid(
        spacing=4.0,
        control_points=np.zeros((6, 6, 2)),
        height=12,
        width=12,
    )
    with pytest.raises(ValueError):
        fields.bspline_to_dense(grid, 13, 12)
    bad = fields.BSplineGrid(spacing=4.0, control_points=np.zeros((5, 6, 2)), height=12, width=12)
    with pytest.raises(ValueError):
        fields.bspline_to_dense(bad, 12, 12)


def test_sample_bspline_field_bounds_and_shapes():
    grid, dense = fields.sample_bspline_field(32, 48, spacing=8.0, max_disp=6.0, seed=3)
    assert dense.shape == (32, 48, 2)
    assert grid.control_points.shape == (fields.n_control(32, 8.0), fields.n_control(48, 8.0), 2)
    assert np.max(np.abs(grid.control_points)) <= 6.0
    # convex combination of bounded controls stays bounded
    assert np.max(np.abs(dense)) <= 6.0 + 1e-12


def test_sample_bspline_field_deterministic():
    g1, d1 = fields.sample_bspline_field(16, 16, spacing=4.0, max_disp=3.0, seed=11)
    g2, d2 = fields.sample_bspline_field(16, 16, spacing=4.0, max_disp=3.0, seed=11)
    assert np.array_equal(g1.control_points, g2.control_points)
    assert np.array_equal(d1, d2)
    _, d3 = fields.sample_bspline_field(16, 16, spacing=4.0, max_disp=3.0, seed=12)
    assert not np.array_equal(d1, d3)


def test_sample_bspline_field_zero_disp_is_identity():
    _, dense = fields.sample_bspline_field(8, 8, spacing=4.0, max_disp=0.0, seed=0)
    assert np.max(np.abs(dense)) == 0.0


def test_sample_bspline_field_validation():
    with pytest.raises(ValueError):
        fields.sample_bspline_field(8, 8, spacing=1.0, max_disp=2.0, seed=0)
    with pytest.raises(ValueError):
        fields.sample_bspline_field(8, 8, spacing=16.0, max_disp=2.0, seed=0)
    with pytest.raises(ValueError):
        fields.sample_bspline_field(8, 8, spacing=4.0, max_disp=-1.0, seed=0)


def test_bilinear_sample_integer_coords_exact():
    rng = np.random.default_rng(5)
    plane = rng.uniform(size=(6, 7))
    rows, cols = np.meshgrid(np.arange(6.0), np.arange(7.0), indexing="ij")
    out = fields.bilinear_sample(plane, rows, cols)
    assert np.array_equal(out, plane)


def test_bilinear_sample_matches_scalar_oracle():
    rng = np.random.default_rng(9)
    plane = rng.uniform(size=(5, 5))
    rows = rng.uniform(-2.0, 7.0, size=(4, 4))
    cols = rng.uniform(-2.0, 7.0, size=(4, 4))
    out = fields.bilinear_sample(plane, rows, cols)
    for i in range(4):
        for j in range(4):
            assert out[i, j] == pytest.approx(bilinear_at(plane, rows[i, j], cols[i, j]), abs=1e-12)


def test_warp_identity_is_exact():
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(9, 11))
    out = fields.warp(img, fields.make_identity_field(9, 11))
    assert np.array_equal(out, img)


def test_warp_integer_shift_pulls_columns():
    # dx=1 everywhere: out(r, c) = img(r, c+1), last column clamped
    img = np.tile(np.arange(4.0), (3, 1))
    field = np.zeros((3, 4, 2))
    field[:, :, 0] = 1.0
    out = fields.warp(img, field)
    expected = np.tile(np.array([1.0, 2.0, 3.0, 3.0]), (3, 1))
    assert np.allclose(out, expected, atol=1e-12)


def test_warp_half_pixel_shift_on_ramp():
    # column ramp, dx=0.5: interior values sit halfway between neighbors
    img = np.tile(np.arange(5.0), (2, 1))
    field = np.zeros((2, 5, 2))
    field[:, :, 0] = 0.5
    out = fields.warp(img, field)
    expected = np.tile(np.array([0.5, 1.5, 2.5, 3.5, 4.0]), (2, 1))
    assert np.allclose(out, expected, atol=1e-12)


def test_warp_matches_naive_on_random_field():
    rng = np.random.default_rng(13)
    img = rng.uniform(size=(12, 10))
    field = rng.uniform(-3.0, 3.0, size=(12, 10, 2))
    out = fields.warp(img, field)
    assert np.max(np.abs(out - warp_naive(img, field))) < 1e-12


def test_compose_with_identity_is_noop():
    rng = np.random.default_rng(4)
    f = rng.uniform(-2.0, 2.0, size=(8, 8, 2))
    ident = fields.make_identity_field(8, 8)
    assert np.allclose(fields.compose_fields(f, ident), f, atol=1e-12)
    assert np.allclose(fields.compose_fields(ident, f), f, atol=1e-12)


def test_compose_constant_translations_add():
    a = np.zeros((6, 6, 2))
    a[:, :, 0] = 1.0
    b = np.zeros((6, 6, 2))
    b[:, :, 1] = 2.0
    out = fields.compose_fields(a, b)
    assert np.allclose(out[:, :, 0], 1.0, atol=1e-12)
    assert np.allclose(out[:, :, 1], 2.0, atol=1e-12)


def test_compose_matches_naive():
    rng = np.random.default_rng(21)
    outer = rng.uniform(-2.0, 2.0, size=(10, 9, 2))
    inner = rng.uniform(-2.0, 2.0, size=(10, 9, 2))
    out = fields.compose_fields(outer, inner)
    assert np.max(np.abs(out - compose_naive(outer, inner))) < 1e-6


def test_compose_then_warp_matches_sequential_warp():
    # for an affine image and an affine outer field every bilinear lookup is
    # exact, so warp(img, compose(outer, inner)) == warp(warp(img, outer), inner)
    # wherever no lookup clamps at the border
    h, w = 16, 16
    rr, cc = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    img = 0.2 + 0.01 * rr + 0.03 * cc
    outer = np.zeros((h, w, 2))
    outer[:, :, 0] = 0.5 + 0.05 * rr - 0.02 * cc
    outer[:, :, 1] = -0.3 + 0.01 * rr + 0.04 * cc
    rng = np.random.default_rng(6)
    inner = rng.uniform(-1.5, 1.5, size=(h, w, 2))
    combined = fields.warp(img, fields.compose_fields(outer, inner))
    sequential = fields.warp(fields.warp(img, outer), inner)
    core = (slice(4, 12), slice(4, 12))
    assert np.max(np.abs(combined[core] - sequential[core])) < 1e-9


def test_field_mse_norm_zero_for_equal():
    f = np.ones((4, 4, 2))
    assert fields.field_mse_norm(f, f) == 0.0


def test_field_mse_norm_quarter_case():
    # constant difference of max_disp: mse = max_disp^2, norm = 1/4
    a = np.zeros((3, 3, 2))
    b = np.full((3, 3, 2), 20.0)
    assert fields.field_mse_norm(a, b, max_disp=20.0) == pytest.approx(0.25)


def test_field_mse_norm_clips_to_one():
    a = np.zeros((2, 2, 2))
    b = np.full((2, 2, 2), 100.0)
    assert fields.field_mse_norm(a, b, max_disp=20.0) == 1.0


def test_field_mse_norm_matches_direct_formula():
    rng = np.random.default_rng(17)
    a = rng.uniform(-5.0, 5.0, size=(6, 5, 2))
    b = rng.uniform(-5.0, 5.0, size=(6, 5, 2))
    expected = float(np.mean((a - b) ** 2)) / (2.0 * 20.0) ** 2
    assert fields.field_mse_norm(a, b, max_disp=20.0) == pytest.approx(expected, abs=1e-15)
