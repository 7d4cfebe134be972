"""Shared numerical kernels: eigenvalue bounds, difference gradients, PCA."""

import numpy as np
import pytest

from enfold.numerics import RngStream, finite_diff_grad, pca_project, spectral_bounds


def test_rng_stream_reproducible():
    a = RngStream(7, 3).generator().standard_normal(16)
    b = RngStream(7, 3).generator().standard_normal(16)
    assert np.array_equal(a, b)


def test_rng_stream_distinct_streams():
    a = RngStream(7, 0).generator().standard_normal(16)
    b = RngStream(7, 1).generator().standard_normal(16)
    assert not np.array_equal(a, b)


def test_spectral_identity():
    est = spectral_bounds(np.eye(3))
    assert abs(est.lambda_max - 1.0) <= 1e-10
    assert abs(est.lambda_min - 1.0) <= 1e-10


def test_spectral_diag():
    est = spectral_bounds(np.diag([1.0, 4.0]))
    assert abs(est.lambda_max - 4.0) <= 1e-10
    assert abs(est.lambda_min - 1.0) <= 1e-10


@pytest.mark.parametrize("seed", range(12))
def test_spectral_vs_dense_eigensolver(seed):
    gen = RngStream(seed, 10).generator()
    A = gen.standard_normal((8, 8))
    M = (A + A.T) / 2.0
    est = spectral_bounds(M, rng=RngStream(seed, 11))
    w = np.linalg.eigvalsh(M)
    scale = max(np.max(np.abs(w)), 1.0)
    assert abs(est.lambda_max - w[-1]) <= 1e-8 * scale
    assert abs(est.lambda_min - w[0]) <= 1e-8 * scale


@pytest.mark.parametrize("c", [-3.0, 0.5, 10.0])
def test_spectral_shift_invariant(c):
    gen = RngStream(3, 12).generator()
    A = gen.standard_normal((6, 6))
    M = (A + A.T) / 2.0
    base = spectral_bounds(M, rng=RngStream(3, 13))
    shifted = spectral_bounds(M + c * np.eye(6), rng=RngStream(3, 13))
    assert abs(shifted.lambda_max - (base.lambda_max + c)) <= 1e-8
    assert abs(shifted.lambda_min - (base.lambda_min + c)) <= 1e-8


def test_spectral_rejects_nonsquare():
    with pytest.raises(ValueError):
        spectral_bounds(np.zeros((2, 3)))


def test_spectral_rejects_asymmetric():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        spectral_bounds(M)


def test_finite_diff_quadratic():
    f = lambda Y: 0.5 * float(np.sum(Y * Y))
    y = np.array([1.0, 2.0])
    g = finite_diff_grad(f, y)
    np.testing.assert_allclose(g, y, atol=1e-6)


def test_finite_diff_constant():
    g = finite_diff_grad(lambda Y: 4.25, np.ones((3, 2)))
    np.testing.assert_allclose(g, 0.0, atol=1e-9)


def test_finite_diff_order_two():
    # halving h should shrink the error roughly fourfold on a smooth cubic
    f = lambda Y: float(np.sum(Y**3))
    y = np.array([0.7, -1.3, 0.4])
    exact = 3.0 * y**2
    e1 = np.max(np.abs(finite_diff_grad(f, y, h=1e-3) - exact))
    e2 = np.max(np.abs(finite_diff_grad(f, y, h=5e-4) - exact))
    assert e2 <= e1 / 3.0


def test_finite_diff_rejects_bad_h():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda Y: 0.0, np.zeros(2), h=0.0)


def test_finite_diff_nonfinite_objective():
    with pytest.raises(FloatingPointError):
        finite_diff_grad(lambda Y: float("nan"), np.zeros(2))


def test_finite_diff_does_not_mutate_input():
    y = np.array([1.0, 2.0, 3.0])
    keep = y.copy()
    finite_diff_grad(lambda Y: float(np.sum(Y**2)), y)
    assert np.array_equal(y, keep)


def test_pca_collinear_second_axis_vanishes():
    base = np.array([1.0, -2.0, 0.5, 3.0])
    points = [t * base for t in np.linspace(-2.0, 2.0, 9)]
    P = pca_project(points, 2)
    assert np.max(np.abs(P[:, 1])) <= 1e-10


def test_pca_planar_isometry():
    gen = RngStream(5, 20).generator()
    Q, _ = np.linalg.qr(gen.standard_normal((7, 2)))
    coeffs = gen.standard_normal((10, 2))
    points = [c @ Q.T for c in coeffs]
    P = pca_project(points, 2)
    for i in range(10):
        for j in range(i + 1, 10):
            d_high = np.linalg.norm(points[i] - points[j])
            d_low = np.linalg.norm(P[i] - P[j])
            assert abs(d_high - d_low) <= 1e-9


def test_pca_matches_svd_oracle():
    gen = RngStream(9, 21).generator()
    pts = [gen.standard_normal(5) for _ in range(8)]
    P = pca_project(pts, 3)
    X = np.stack(pts)
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    expect = Xc @ Vt[:3].T
    # principal axes are defined up to sign
    for k in range(3):
        col = P[:, k]
        ref = expect[:, k]
        assert min(np.max(np.abs(col - ref)), np.max(np.abs(col + ref))) <= 1e-10


def test_pca_translation_invariant():
    gen = RngStream(2, 22).generator()
    pts = [gen.standard_normal((3, 2)) for _ in range(6)]
    shift = gen.standard_normal((3, 2))
    P0 = pca_project(pts, 2)
    P1 = pca_project([p + shift for p in pts], 2)
    np.testing.assert_allclose(P0, P1, atol=1e-9)


def test_pca_rejects_small_cloud():
    with pytest.raises(ValueError):
        pca_project([np.zeros(3)], 1)


def test_pca_rejects_large_k():
    with pytest.raises(ValueError):
        pca_project([np.zeros(3), np.ones(3)], 4)
