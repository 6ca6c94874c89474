import numpy as np
import pytest
import scipy.sparse as sp

from smoothadv import (
    NumericalError,
    build_smoothing_operator,
    cg_solve,
    laplacian_for_image,
    smooth,
    smooth_adjoint,
    smooth_normalized,
    smoothness_energy,
)


def test_cg_matches_dense_solve():
    rng = np.random.default_rng(20)
    for _ in range(5):
        img = rng.uniform(size=(7, 6, 1))
        _, _, lap = laplacian_for_image(img, 0.9)
        b = rng.normal(size=42)
        x, iters = cg_solve(lap, b)
        ref = np.linalg.solve(lap.matrix.toarray(), b)
        assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-5
        assert 0 < iters <= 50


def test_cg_zero_rhs():
    rng = np.random.default_rng(21)
    _, _, lap = laplacian_for_image(rng.uniform(size=(4, 4, 1)), 0.9)
    x, iters = cg_solve(lap, np.zeros(16))
    assert iters == 0
    np.testing.assert_array_equal(x, np.zeros(16))


def test_cg_multicolumn_matches_per_column():
    rng = np.random.default_rng(22)
    _, _, lap = laplacian_for_image(rng.uniform(size=(5, 5, 1)), 0.9)
    b = rng.normal(size=(25, 3))
    x, _ = cg_solve(lap, b)
    for j in range(3):
        xj, _ = cg_solve(lap, b[:, j])
        np.testing.assert_array_equal(x[:, j], xj)


def test_cg_rejects_indefinite_matrix():
    mat = sp.csr_array(-np.eye(5))
    with pytest.raises(NumericalError):
        cg_solve(mat, np.ones(5))


def test_operator_modes_agree():
    rng = np.random.default_rng(23)
    img = rng.uniform(size=(9, 8, 3))
    direct = build_smoothing_operator(img, 0.95, mode="direct")
    cg = build_smoothing_operator(img, 0.95, mode="cg")
    z = rng.normal(size=(72, 3))
    a, b = smooth_normalized(direct, z), smooth_normalized(cg, z)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) <= 1e-5


def test_auto_mode_picks_backend_by_size():
    rng = np.random.default_rng(24)
    small = build_smoothing_operator(rng.uniform(size=(8, 8, 1)), 0.9)
    assert small.mode == "direct"
    big = build_smoothing_operator(rng.uniform(size=(65, 64, 1)), 0.9)
    assert big.mode == "cg"


def test_ones_is_fixed_point_of_normalized_smoothing():
    rng = np.random.default_rng(25)
    for mode in ("direct", "cg"):
        op = build_smoothing_operator(rng.uniform(size=(10, 9, 1)), 0.95, mode=mode)
        out = smooth_normalized(op, np.ones(90))
        assert np.abs(out - 1.0).max() <= 1e-8


def test_solve_inverts_laplacian():
    rng = np.random.default_rng(26)
    img = rng.uniform(size=(6, 6, 1))
    op = build_smoothing_operator(img, 0.95)
    z = rng.normal(size=36)
    np.testing.assert_allclose(op.laplacian.matrix @ smooth(op, z), z, atol=1e-10)


def test_normalized_is_smooth_divided_by_norm_diag():
    rng = np.random.default_rng(27)
    op = build_smoothing_operator(rng.uniform(size=(5, 7, 3)), 0.9)
    z = rng.normal(size=(35, 3))
    np.testing.assert_allclose(smooth_normalized(op, z), smooth(op, z) / op.norm_diag[:, None], atol=0)


def test_adjoint_inner_product_identity():
    # exact solves satisfy the identity to rounding; iterative solves only
    # to their stopping tolerance
    rng = np.random.default_rng(28)
    for mode, tol in (("direct", 1e-10), ("cg", 1e-4)):
        op = build_smoothing_operator(rng.uniform(size=(8, 7, 1)), 0.95, mode=mode)
        for _ in range(10):
            a = rng.normal(size=(56, 2))
            b = rng.normal(size=(56, 2))
            lhs = float(np.sum(smooth_normalized(op, a) * b))
            rhs = float(np.sum(a * smooth_adjoint(op, b)))
            assert abs(lhs - rhs) <= tol * max(1.0, abs(lhs))


def test_alpha_zero_operator_is_identity():
    rng = np.random.default_rng(29)
    op = build_smoothing_operator(rng.uniform(size=(6, 5, 3)), 0.0)
    z = rng.normal(size=(6, 5, 3))
    np.testing.assert_array_equal(smooth_normalized(op, z), z)
    np.testing.assert_array_equal(smooth_adjoint(op, z), z)


def test_operator_is_linear():
    rng = np.random.default_rng(30)
    op = build_smoothing_operator(rng.uniform(size=(6, 6, 1)), 0.9)
    z1, z2 = rng.normal(size=36), rng.normal(size=36)
    lhs = smooth_normalized(op, 2.5 * z1 - 0.7 * z2)
    rhs = 2.5 * smooth_normalized(op, z1) - 0.7 * smooth_normalized(op, z2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_shapes_preserved_and_checked():
    rng = np.random.default_rng(31)
    op = build_smoothing_operator(rng.uniform(size=(4, 5, 3)), 0.9)
    assert smooth_normalized(op, rng.normal(size=20)).shape == (20,)
    assert smooth_normalized(op, rng.normal(size=(20, 3))).shape == (20, 3)
    assert smooth_normalized(op, rng.normal(size=(4, 5, 3))).shape == (4, 5, 3)
    with pytest.raises(ValueError):
        smooth_normalized(op, rng.normal(size=21))
    with pytest.raises(ValueError):
        build_smoothing_operator(rng.uniform(size=(4, 4, 1)), 0.9, mode="qr")


def test_smoothing_reduces_energy():
    rng = np.random.default_rng(32)
    img = rng.uniform(size=(8, 8, 1))
    op = build_smoothing_operator(img, 0.95)
    deg = op.laplacian.degrees
    for _ in range(5):
        z = rng.normal(size=(64, 1))
        assert smoothness_energy(op.adjacency, deg, smooth_normalized(op, z)) < smoothness_energy(
            op.adjacency, deg, z
        )
