import math

import numpy as np
import pytest
from scipy.integrate import quad

from sinklab.boundary import (
    Functional,
    exit_law_from_ensemble,
    eval_harmonic,
    harmonic_from_ensembles,
    load_table,
    mean_value_test,
    parse_functional,
    sub_seed,
    witness,
    z_score,
)
from sinklab.sde import StepControl, run_ensemble

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def ens_06(warp):
    return run_ensemble(warp, (0.6, 0.0, 1.0), 1000, StepControl(), 11)


@pytest.fixture(scope="module")
def ens_axis(warp):
    return run_ensemble(warp, (warp.cfg.r_floor, 0.0, 0.0), 400, StepControl(), 12)


# -- functionals ---------------------------------------------------------------------------
def test_parse_functional_families():
    f = parse_functional("sigmoid:c=1,w=0.1")
    assert f.kind == "sigmoid" and f.params == {"c": 1.0, "w": 0.1}
    assert parse_functional("const")(np.array([0.0]), np.array([0.0]))[0] == 1.0
    assert parse_functional("rect:z0=0,z1=1,a0=0,a1=3.141592653589793").bounds == (0.0, 1.0)
    for bad in ("nope", "sin:k=0.5", "sigmoid:w=0", "sigmoid:c", "half:b=1", "table"):
        with pytest.raises(ValueError):
            parse_functional(bad)


def test_functional_values():
    z = np.array([-1.0, 0.5, 2.0])
    a = np.array([0.5, 4.0, 7.0])
    np.testing.assert_array_equal(Functional("half")(z, a), [1.0, 0.0, 1.0])
    np.testing.assert_allclose(Functional("sin", k=2)(z, a), np.sin(2 * a), atol=1e-12)
    np.testing.assert_allclose(Functional("sigmoid", c=0.5, w=0.5)(z, a), 1 / (1 + np.exp(-(z - 0.5) / 0.5)))
    rect = Functional("rect", z0=0.0, z1=1.0, a0=3.0, a1=1.0 + TWO_PI)  # wraps through a = 0
    np.testing.assert_array_equal(rect(np.array([0.5, 0.5, 0.5, 2.0]), np.array([3.5, 0.5, 2.0, 3.5])),
                                  [1.0, 1.0, 0.0, 0.0])


def test_rotated_functional():
    f = Functional("sin", k=1)
    g = f.rotated(0.7)
    a = np.linspace(0, 6, 13)
    np.testing.assert_allclose(g(np.zeros_like(a), a), np.sin(a - 0.7), atol=1e-12)


def test_table_rejects_unparseable_entries(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("z,a,value\n0,0,1\n0,oops,2\n")
    with pytest.raises(ValueError):
        load_table(path)


def test_table_bilinear_interpolation(tmp_path):
    z = np.array([0.0, 1.0, 2.0])
    a = np.linspace(0.0, TWO_PI, 4, endpoint=False)
    v = np.add.outer(2.0 * z, np.arange(4.0))  # linear in z, saw-tooth in a
    path = tmp_path / "t.csv"
    with open(path, "w") as fh:
        fh.write("z,a,value\n")
        for i, zz in enumerate(z):
            for j, aa in enumerate(a):
                fh.write(f"{float(zz)!r},{float(aa)!r},{float(v[i, j])!r}\n")
    zz, aa, vv = load_table(path)
    np.testing.assert_array_equal(vv, v)
    f = parse_functional(f"table:{path}")
    # midpoint of a cell: mean of its four corners
    assert float(f(np.array(0.5), np.array(a[1] / 2))) == pytest.approx(np.mean(v[:2, :2]), abs=1e-12)
    # periodic closure between the last node and 2 pi
    assert float(f(np.array(0.0), np.array(a[3] + (TWO_PI - a[3]) / 2))) == pytest.approx(1.5, abs=1e-12)
    # clamped in z
    assert float(f(np.array(9.0), np.array(0.0))) == pytest.approx(4.0)
    assert f.bounds == (0.0, 7.0)


# -- exit law -------------------------------------------------------------------------------
def test_histogram_mass_equals_converged_count(warp, ens_06):
    est = exit_law_from_ensemble(ens_06, (0.6, 0.0, 1.0))
    assert est.hist.sum() == est.n_converged == int(ens_06.converged.sum())
    assert est.a_counts.sum() == est.n_converged
    assert est.window_counts.shape == (12, 16)


@pytest.fixture(scope="module")
def est_02(warp):
    # from r = 0.2 the angle spreads; from (0.6, 0, 1) it is numerically frozen
    ens = run_ensemble(warp, (0.2, 0.0, 0.0), 300, StepControl(), 5)
    return exit_law_from_ensemble(ens, (0.2, 0.0, 0.0))


def test_kde_integrates_to_one(est_02):
    est = est_02
    assert abs(est.kde_mass() - 1.0) < 1e-6
    # independent check by quadrature of the KDE itself over the support window
    lo, hi = est.kde_support()
    zs = np.linspace(lo, hi, 801)
    az = np.linspace(0.0, TWO_PI, 129)
    Z, A = np.meshgrid(zs, az, indexing="ij")
    dens = est.kde(Z, A)
    mass = np.trapezoid(np.trapezoid(dens, az, axis=1), zs)
    assert mass == pytest.approx(1.0, abs=1e-3)
    assert np.all(dens >= 0.0)


def test_kde_mass_of_subinterval_matches_quadrature(est_02):
    est = est_02
    lo, hi = float(np.quantile(est.z, 0.25)), float(np.quantile(est.z, 0.75))
    val, _ = quad(lambda z: quad(lambda a: float(est.kde(np.array(z), np.array(a))), 0.0, TWO_PI)[0],
                  lo, hi, limit=200, epsabs=1e-8)
    assert est.kde_mass(lo, hi) == pytest.approx(val, abs=1e-5)


def test_support_verdict_withheld_for_small_samples(warp, ens_06):
    small = exit_law_from_ensemble(ens_06, (0.6, 0.0, 1.0), min_paths=5000)
    assert small.support_verdict is None and "withheld" in small.note


# -- harmonic functions ------------------------------------------------------------------------
def test_constant_functional_is_exactly_one(warp, ens_06):
    (h1,) = harmonic_from_ensembles([Functional("const")], [(0.6, 0.0, 1.0)], [ens_06])
    assert h1.estimate[0] == 1.0 and h1.stderr[0] == 0.0


def test_axis_start_symmetry(warp, ens_axis):
    start = [(warp.cfg.r_floor, 0.0, 0.0)]
    half, sin = harmonic_from_ensembles([Functional("half"), Functional("sin")], start, [ens_axis])
    assert abs(half.estimate[0] - 0.5) < 3.0 * half.stderr[0]
    assert abs(sin.estimate[0]) < 3.0 * sin.stderr[0]


def test_rotational_equivariance(warp):
    """h for f(z, a) from (r, s, a0) equals h for f(z, a - a0) from (r, s, 0); same noise gives equality."""
    a0 = 1.3
    f = Functional("sin", k=1)
    e1 = run_ensemble(warp, (0.6, 0.0, a0), 200, StepControl(), 21)
    e0 = run_ensemble(warp, (0.6, 0.0, 0.0), 200, StepControl(), 21)
    (h1,) = harmonic_from_ensembles([f], [(0.6, 0.0, a0)], [e1])
    (h0,) = harmonic_from_ensembles([f.rotated(-a0)], [(0.6, 0.0, 0.0)], [e0])
    assert abs(h1.estimate[0] - h0.estimate[0]) <= 1e-9


def test_maximum_principle(warp, ens_06):
    fs = [Functional("sin", k=1), Functional("half"), Functional("sigmoid", c=0.5, w=0.5),
          Functional("rect", z0=0.9, z1=1.5, a0=0.0, a1=math.pi)]
    for h1 in harmonic_from_ensembles(fs, [(0.6, 0.0, 1.0)], [ens_06]):
        assert np.all(h1.max_principle_ok())


def test_eval_harmonic_independent_starts(warp):
    starts = [(0.6, 0.0, 1.0), (0.6, 0.0, 1.0)]
    h1 = eval_harmonic(warp, Functional("sigmoid", c=0.97, w=0.02), starts, 200, master_seed=3)
    assert h1.estimate[0] != h1.estimate[1]  # different derived seeds
    h2 = eval_harmonic(warp, Functional("sigmoid", c=0.97, w=0.02), starts, 200, master_seed=3, independent=False)
    assert h2.estimate[0] == h2.estimate[1]


# -- mean value and witnesses ---------------------------------------------------------------------
def test_mean_value_constant_gives_zero_score(warp):
    rep = mean_value_test(warp, Functional("const"), (2.0, 0.0, 0.0), n_outer=50, n_inner=4)
    assert rep.direct == 1.0 and rep.ball == 1.0 and rep.z_score == 0.0 and rep.passed


def test_mean_value_sigmoid(warp):
    rep = mean_value_test(warp, Functional("sigmoid", c=1.0, w=1.0), (2.0, 0.0, 0.0), n_outer=200, n_inner=10,
                          master_seed=4)
    assert rep.valid and rep.n_exited > 0
    assert abs(rep.z_score) < 3.0


def test_mean_value_rejects_start_near_axis(warp):
    with pytest.raises(ValueError):
        mean_value_test(warp, Functional("const"), (0.3, 0.0, 0.0))


def test_z_direction_witness(warp):
    h1 = eval_harmonic(warp, Functional("sigmoid", c=1.0, w=1.0), [(2.0, -4.0, 0.0), (2.0, 4.0, 0.0)], 200,
                       master_seed=8)
    assert witness(h1, 0, 1)["passed"]


def test_z_score_floor():
    assert z_score(0.5, 0.0, 0.5, 0.0) == 0.0
    assert abs(z_score(0.5, 0.0, 0.5 + 1e-16, 0.0)) < 1.0
    assert z_score(1.0, 0.3, 0.0, 0.4) == pytest.approx(2.0)


def test_sub_seed_is_deterministic_and_distinct():
    assert sub_seed(1, 2, 3) == sub_seed(1, 2, 3)
    assert len({sub_seed(1, 2, k) for k in range(50)}) == 50
    assert 0 <= sub_seed(7) < 2**63
