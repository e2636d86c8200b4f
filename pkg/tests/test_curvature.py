import math

import numpy as np
import pytest

from sinklab.curvature import (
    GridSpec,
    certify,
    christoffel,
    margins,
    quadratic_form,
    random_planes,
    sectional_curvature,
    sectional_from_geometry,
    sectional_orthonormal,
)
from sinklab.profile import h, h_d1, h_d2


# -- independent finite-difference Riemann tensor -----------------------------------
def _rescaled_metric(warp, r0, s0):
    """Diagonal metric (1, h, g/g(x0)); rescaling the angle keeps g of order one."""
    t0 = float(warp.log_g(np.array(r0), np.array(s0)))

    def g(x):
        r, s = x
        t = float(warp.log_g(np.array(r), np.array(s)))
        return np.array([1.0, math.cosh(r) ** 2, math.exp(t - t0)])

    return g


def _richardson(fn, x, k, step):
    def at(e):
        dx = np.zeros(2)
        dx[k] = e
        return (fn(x + dx) - fn(x - dx)) / (2 * e)

    return (4.0 * at(step / 2) - at(step)) / 3.0


def _christoffel_fd(g, x, e):
    G = g(x)
    dG = np.zeros((3, 3))  # dG[k, i] = d_k g_ii; the metric does not depend on the angle
    for k in range(2):
        dG[k] = _richardson(g, x, k, e)
    Gam = np.zeros((3, 3, 3))
    for l in range(3):
        for i in range(3):
            for j in range(3):
                v = (dG[j, l] if i == l else 0.0) + (dG[i, l] if j == l else 0.0) - (dG[l, i] if i == j else 0.0)
                Gam[l, i, j] = 0.5 * v / G[l]
    return Gam


def _sectional_fd(g, x, U, V, e, E):
    """<R(X,Y)Y,X>/|X^Y|^2 with U, V given in the orthonormal frame."""
    G = g(x)
    Gam = _christoffel_fd(g, x, e)
    dGam = np.zeros((3, 3, 3, 3))
    for k in range(2):
        dGam[k] = _richardson(lambda y: _christoffel_fd(g, y, e), x, k, E)
    Rm = (np.einsum("iljk->lkij", dGam) - np.einsum("jlik->lkij", dGam)
          + np.einsum("lim,mjk->lkij", Gam, Gam) - np.einsum("ljm,mik->lkij", Gam, Gam))
    X, Y = U / np.sqrt(G), V / np.sqrt(G)
    num = np.einsum("l,lkij,i,j,k->", G * X, Rm, X, Y, Y)
    return num / ((U @ U) * (V @ V) - (U @ V) ** 2)


@pytest.mark.parametrize("r, s", [(0.05, 0.0), (0.3, 1.0), (0.5, 0.0), (2.3, 1.0), (2.6, 0.5), (3.2, 2.0)])
def test_sectional_matches_finite_difference_riemann_tensor(warp, r, s):
    rng = np.random.default_rng(int(100 * r + 10 * s))
    U, V = rng.standard_normal(3), rng.standard_normal(3)
    geo = warp.geometry(np.array([r]), np.array([s]))
    ref = float(sectional_orthonormal(geo, U[None], V[None])[0])
    T = float(np.exp(geo.logT[0]))
    E = 1e-2 / max(T, 1.0)
    val = _sectional_fd(_rescaled_metric(warp, r, s), np.array([r, s]), U, V, E / 10.0, E)
    assert abs(val - ref) <= 1e-5 * abs(ref)


# -- Christoffel symbols --------------------------------------------------------------------
def test_christoffel_near_axis_and_collar(warp):
    c = christoffel(warp, np.array(1e-8), np.array(0.0))
    assert abs(c.G1_22) < 1e-7
    c = christoffel(warp, np.array(0.05), np.array(3.0))
    assert float(c.G3_13) == pytest.approx(math.cosh(0.05) / math.sinh(0.05), rel=1e-12)
    assert float(c.G1_22) == pytest.approx(-math.cosh(0.05) * math.sinh(0.05), rel=1e-12)


def test_christoffel_rejects_axis(warp):
    with pytest.raises(ValueError):
        christoffel(warp, np.array(0.0), np.array(0.0))


def test_christoffel_match_finite_differences_of_metric(warp):
    r, s = 4.0, 1.0
    c = christoffel(warp, np.array(r), np.array(s))
    x = np.array([r, s])

    def lg(y):
        return np.array([float(warp.log_g(np.array(y[0]), np.array(y[1])))])

    t_r = _richardson(lg, x, 0, 1e-4)[0]
    t_s = _richardson(lg, x, 1, 1e-4)[0]
    h_r = _richardson(lambda y: np.array([math.cosh(y[0]) ** 2]), x, 0, 1e-4)[0]
    hh = math.cosh(r) ** 2
    assert float(c.G3_13) == pytest.approx(t_r / 2, rel=1e-6)
    assert float(c.G1_33_over_g) == pytest.approx(-t_r / 2, rel=1e-6)
    assert float(c.G3_23) == pytest.approx(t_s / 2, rel=1e-6)
    assert float(c.G2_33_over_g) == pytest.approx(-t_s / (2 * hh), rel=1e-6)
    assert float(c.G1_22) == pytest.approx(-h_r / 2, rel=1e-6)
    assert float(c.G2_12) == pytest.approx(h_r / (2 * hh), rel=1e-6)


# -- sectional curvature ----------------------------------------------------------------------
def test_collar_planes_have_curvature_minus_one(warp):
    rng = np.random.default_rng(5)
    n = 200
    r = rng.uniform(1e-3, 0.09, n)
    s = rng.uniform(-8, 8, n)
    X, Y = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    K = sectional_curvature(warp, r, s, X, Y)
    np.testing.assert_allclose(K, -1.0, atol=1e-8)


def test_radial_base_plane_is_hyperbolic(warp):
    r = np.array([0.2, 1.0, 3.0, 7.0, 20.0])
    s = np.array([0.0, -3.0, 2.0, 5.0, 1.0])
    X = np.tile([1.0, 0.0, 0.0], (5, 1))
    Y = np.tile([0.0, 1.0, 0.0], (5, 1))
    np.testing.assert_allclose(sectional_curvature(warp, r, s, X, Y), -1.0, rtol=1e-12)


def test_sectional_symmetry_and_scaling(warp):
    rng = np.random.default_rng(9)
    n = 50
    r = rng.uniform(0.2, 3.0, n)
    s = rng.uniform(-4, 4, n)
    X, Y = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    geo = warp.geometry(r, s)
    K = sectional_from_geometry(geo, X, Y)
    np.testing.assert_allclose(sectional_from_geometry(geo, Y, X), K, rtol=1e-12)
    np.testing.assert_allclose(sectional_from_geometry(geo, 2.0 * X, Y), K, rtol=1e-12)


def test_degenerate_pair_rejected(warp):
    with pytest.raises(ValueError):
        sectional_curvature(warp, np.array([1.0]), np.array([0.0]), np.array([[1.0, 2.0, 0.0]]),
                            np.array([[2.0, 4.0, 0.0]]))


def test_orthonormal_and_coordinate_forms_agree(warp):
    rng = np.random.default_rng(2)
    n = 100
    r = rng.uniform(0.2, 1.2, n)
    s = rng.uniform(-6, 6, n)
    U, V = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    geo = warp.geometry(r, s)
    scale = np.stack([np.ones(n), 1.0 / np.sqrt(geo.h), np.exp(-0.5 * geo.t)], axis=1)
    K1 = sectional_orthonormal(geo, U, V)
    K2 = sectional_from_geometry(geo, U * scale, V * scale)
    np.testing.assert_allclose(K1, K2, rtol=1e-9)


def test_random_points_on_metric_range_below_minus_k_squared(warp):
    rng = np.random.default_rng(4)
    n = 100
    r = rng.uniform(0.2, 12.0, n)
    s = rng.uniform(-6.0, 6.0, n)
    U, V = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    K = sectional_orthonormal(warp.geometry(r, s), U, V)
    assert np.all(K <= -1e-6)


def test_random_planes_sample(warp):
    summary, K = random_planes(warp, n=2000, k=1e-3, seed=1)
    assert summary.passed and summary.n_violations == 0
    assert summary.max_sect <= -1e-6
    assert K.shape == (2000,)


# -- margins and certification ---------------------------------------------------------------
def test_first_inequality_is_parameter_free():
    r = np.linspace(0.0, 40.0, 4001)
    for k in (1e-3, 0.5, 1.0):
        lhs = 0.5 * h_d2(r) - 0.25 * h_d1(r) ** 2 / h(r) - k * k * h(r)
        assert np.all(lhs >= -1e-9 * h(r))


def test_certify_passes_for_small_k(warp):
    rep = certify(warp, GridSpec(n_r=120, n_s=41), k=1e-3)
    assert rep.passed
    assert all(v >= 0.0 for v in rep.min_margin.values())


def test_certify_fails_for_large_k(warp):
    rep = certify(warp, GridSpec(n_r=60, n_s=21), k=10.0)
    assert not rep.passed
    assert rep.min_margin["m1"] < 0.0


def test_quadratic_form_consistent_with_margins(warp):
    """The form is negative semidefinite exactly where the margins hold.

    The X^2 coefficient is compared with margin (1); the (Y, Z) block is
    reconstructed from evaluations of the form and its largest eigenvalue is
    compared with margins (2)-(4).  The X^2 coefficient carries a factor 1/g
    that underflows beyond r ~ 1.5, so its sign is only compared below that.
    """
    rng = np.random.default_rng(8)
    n = 50
    r = np.exp(rng.uniform(np.log(0.12), np.log(12.0), n))
    s = rng.uniform(-6.0, 6.0, n)
    geo = warp.geometry(r, s)
    one, zero = np.ones(n), np.zeros(n)
    mixed = 0
    for k in (1e-3, 0.3, 1.0, 3.0, 10.0):
        M = margins(geo, k)
        a = quadratic_form(geo, k, one, zero, zero)
        b = quadratic_form(geo, k, zero, one, zero)
        c = quadratic_form(geo, k, zero, zero, one)
        d = 0.5 * (quadratic_form(geo, k, zero, one, one) - b - c)
        lam = 0.5 * (b + c) + np.sqrt(0.25 * (b - c) ** 2 + d * d)
        block_ok = (M.m2 >= 0) & (M.m3 >= 0) & (M.m4 >= 0)
        assert np.array_equal(lam <= 1e-12 * (np.abs(b) + np.abs(c)), block_ok)
        small = r < 1.5
        assert np.array_equal((a <= 0)[small], (M.m1 >= 0)[small])
        mixed += int(np.any(block_ok) and not np.all(block_ok))
        ok = block_ok & (M.m1 >= 0)
        worst = np.full(n, -np.inf)
        for _ in range(200):
            X, Y, Z = rng.standard_normal((3, n))
            worst = np.maximum(worst, quadratic_form(geo, k, X, Y, Z))
        assert np.all(worst[ok] <= 1e-12)
    assert mixed > 0  # some k splits the sample, so both directions are exercised
