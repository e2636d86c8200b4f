import math

import numpy as np
import pytest

from sinklab.curvature import GridSpec
from sinklab.estimates import (
    check_beta,
    check_E3,
    check_E4,
    check_E53,
    check_L1,
    check_L2_L3,
    check_lemma_g,
    check_lemma_q,
    check_P1,
    estimate_grid,
    m_derivatives,
    point_data,
    refine,
    refinement_stability,
    run_estimates,
    t_derivative_logs,
)

SMALL = GridSpec(r_min=3.0, r_max=60.0, n_r=40, s_min=0.0, s_max=8.0, n_s=17)


def _by_id(reports):
    return {r.bound_id: r for r in reports}


# -- Lemma 5.1 ------------------------------------------------------------------------
def test_C1_below_exp_4eps(warp):
    reps = _by_id(check_L1(warp))
    assert reps["E8_C1"].empirical_constant <= math.exp(4.0 * warp.eps) + 1e-6
    assert reps["E14"].passed


def test_E8_lower_bound_margin(warp):
    reps = _by_id(check_L1(warp))
    assert reps["E8_lower"].min_margin >= -1e-9


def test_frozen_characteristic_ratio_is_one(warp):
    r = np.array([3.5, 8.0, 30.0])
    s = -warp.ell(r) - 0.5
    pd = point_data(warp, r, s)
    assert np.all(pd.frozen)
    np.testing.assert_array_equal(pd.geo.f, r)
    assert np.all(pd.log_fr == 0.0) and np.all(pd.log_ratio == 0.0)
    assert _by_id(check_L1(warp, SMALL))["E8_frozen"].passed


# -- Lemma 5.2 and 5.3 ------------------------------------------------------------------------
def test_beta_above_one(warp):
    rep = check_beta(warp)
    assert rep.passed and rep.empirical_constant > 1.0
    assert rep.extra["points_used"] > 0


def test_f_rr_vanishes_on_frozen_characteristics(warp):
    reps = _by_id(check_L2_L3(warp, SMALL))
    assert reps["E17_frozen"].passed and reps["E17_frozen"].min_margin >= -1e-8
    assert math.isfinite(reps["E15"].log10_constant)
    assert math.isfinite(reps["E17"].log10_constant)


@pytest.mark.parametrize("r, s", [(3.2, 2.0), (3.6, 5.0), (4.0, 1.0), (4.2, 3.0)])
def test_t_rr_matches_finite_difference(warp, r, s):
    """t_rr = a T against a Richardson second difference of log g."""
    d = t_derivative_logs(warp, np.array([r]), np.array([s]))
    t_rr = float(d["s_rr"][0] * np.exp(d["l_rr"][0]))

    def t(x):
        return float(warp.log_g(np.array(x), np.array(s)))

    def d2(e):
        return (t(r + e) - 2.0 * t(r) + t(r - e)) / (e * e)

    fd = (4.0 * d2(5e-4) - d2(1e-3)) / 3.0
    assert t_rr == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("r, s", [(3.3, 2.0), (4.0, 4.0)])
def test_t_sr_matches_finite_difference(warp, r, s):
    d = t_derivative_logs(warp, np.array([r]), np.array([s]))
    t_sr = float(d["s_sr"][0] * np.exp(d["l_sr"][0]))
    e = 1e-3

    def t_r(ss):
        return float(np.exp(warp.geometry(np.array([r]), np.array([ss])).logT[0]))

    fd = (t_r(s + e) - t_r(s - e)) / (2 * e)
    assert t_sr == pytest.approx(fd, rel=1e-5)


# -- Prop. 5.5 -----------------------------------------------------------------------------------
def test_m_in_collar_by_direct_formula(warp):
    r = 0.05
    d = m_derivatives(warp, np.array([r]), np.array([0.0]))
    direct = 2.0 / math.sqrt(2.0 * math.tanh(r) + 2.0 / math.tanh(r))  # h'/h = 2 tanh, g_r/g = 2 coth
    assert math.exp(float(d["log_m"][0])) == pytest.approx(direct, rel=1e-12)


def test_m_r_matches_finite_difference(warp):
    r, s, e = np.array([3.4]), np.array([2.0]), 1e-4
    d = m_derivatives(warp, r, s)
    m_r = float(d["sign_mr"][0] * np.exp(d["log_mr"][0]))
    lm = lambda x: float(m_derivatives(warp, x, s)["log_m"][0])  # noqa: E731
    fd = (math.exp(lm(r + e)) - math.exp(lm(r - e))) / (2 * e)
    assert m_r == pytest.approx(fd, rel=1e-5)


def test_E4_full_radial_grid(warp):
    rep = check_E4(warp)
    assert rep.passed and rep.min_margin >= -1e-9


def test_r_alpha_found(warp):
    rep = check_P1(warp, SMALL)
    assert rep.passed and rep.empirical_constant is not None
    beta = rep.extra["beta"]
    assert 0.0 < rep.extra["alpha"] < (beta - 1.0) / (2.0 * (beta + 1.0))


def test_P1_rejects_alpha_outside_interval(warp):
    with pytest.raises(ValueError):
        check_P1(warp, SMALL, alpha=0.5, beta=1.5)


# -- lemmas of the construction ---------------------------------------------------------------------
def test_lemma_g_items(warp):
    reps = _by_id(check_lemma_g(warp))
    for key in ("L2.2(1)", "L2.2(2)", "L2.2(4)", "L2.2(5)", "L2.2(6)"):
        assert reps[key].passed, key
    assert reps["L2.2(2)"].extra["collar_exact"]
    # (ph)_s >= 0 holds on the grid; only the divergence proxy of item (3) is reported separately
    assert reps["L2.2(3)"].min_margin >= -1e-9


def test_lemma_q_and_E3_E53(warp):
    for rep in [*check_lemma_q(warp), check_E3(warp), check_E53(warp)]:
        assert rep.passed, rep.bound_id


# -- refinement and driver --------------------------------------------------------------------------
def test_refine_keeps_old_nodes():
    fine = refine(SMALL)
    Rc, Sc = SMALL.mesh()
    Rf, Sf = fine.mesh()
    np.testing.assert_allclose(Rf[::2, ::2], Rc, rtol=1e-14)
    np.testing.assert_allclose(Sf[::2, ::2], Sc, rtol=1e-14)


def test_refinement_stability_of_lemma_constants(warp):
    """On the default grid a 2x refinement raises no constant by more than 5%.

    (A 40 x 17 grid is too coarse for this: E17 grows by 5.6% there.)
    """
    grid = estimate_grid(warp)
    coarse = check_L1(warp, grid) + check_L2_L3(warp, grid)
    fine = check_L1(warp, refine(grid)) + check_L2_L3(warp, refine(grid))
    stab = refinement_stability(coarse, fine)
    assert set(stab) >= {"E8_C1", "E7_C2", "E17", "E15"}
    assert all(v["stable"] for v in stab.values())


def test_run_estimates_rejects_unknown_selector(warp):
    with pytest.raises(ValueError):
        run_estimates(warp, "L9")


def test_run_estimates_L1_report_is_serialisable(warp):
    import json

    out = run_estimates(warp, "L1", SMALL)
    json.dumps(out)
    assert out["passed"]
