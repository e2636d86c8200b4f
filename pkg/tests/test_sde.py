import math

import numpy as np
import pytest
from scipy import stats

from sinklab.io import fmt
from sinklab.sde import (
    CSV_COLUMNS,
    ORIGINAL,
    TIMECHANGED,
    PathState,
    StepControl,
    coefficients,
    run_ensemble,
    simulate_batch,
    simulate_path,
    step_original,
    step_timechanged,
    wrap_angle,
    z_direct,
)


def _state(warp, pts):
    return PathState.start(warp, np.asarray(pts, dtype=float))


POINTS = [(0.3, 0.0, 0.0), (1.0, 2.0, 1.0), (2.5, 0.5, 2.0), (3.5, 3.0, 0.0), (6.0, 5.0, 4.0), (12.0, -3.0, 0.0)]


# -- single steps --------------------------------------------------------------------
def test_zero_noise_radial_increment_is_dt(warp):
    st = _state(warp, POINTS)
    dt = np.array([1e-3, 1e-2, 0.05, 0.1, 0.02, 0.003])
    nxt = step_timechanged(warp, st, np.zeros((len(POINTS), 3)), dt)
    np.testing.assert_allclose(nxt.R - st.R, dt, rtol=1e-12)
    assert np.all(nxt.A == st.A)


def test_zero_noise_s_drift_between_zero_and_max_p(warp):
    st = _state(warp, POINTS)
    dt = 0.05
    nxt = step_timechanged(warp, st, np.zeros((len(POINTS), 3)), dt)
    dS = nxt.S - st.S
    assert np.all(dS >= 0.0)
    assert np.all(dS <= 1e-3 * dt)
    # bounded by p itself
    assert np.all(dS <= warp.p(st.R, st.S) * dt * (1 + 1e-12))


def test_a_coefficient_in_collar(warp):
    r = 0.05
    c = coefficients(warp, np.array([r]), np.array([0.0]))
    # m = 2 / sqrt(h'/h + g_r/g) with g = sinh^2, evaluated independently
    m = 2.0 / math.sqrt(2.0 * math.tanh(r) + 2.0 / math.tanh(r))
    assert float(c.a_coef[0]) == pytest.approx(m / math.sinh(r), rel=1e-12)
    assert float(c.m[0]) == pytest.approx(m, rel=1e-12)


def test_original_scale_drift_in_collar(warp):
    r = 0.05
    st = _state(warp, [(r, 1.0, 0.5)])
    dt = 1e-4
    nxt = step_original(warp, st, np.zeros((1, 3)), dt)
    b = 0.5 * (math.tanh(r) + 1.0 / math.tanh(r))  # h'/4h + g_r/4g
    assert float(nxt.R[0] - r) == pytest.approx(b * dt, rel=1e-12)
    assert nxt.A[0] == st.A[0]
    assert nxt.S[0] == st.S[0]
    # the time-changed clock advances by b dt
    assert float(nxt.tau[0]) == pytest.approx(b * dt, rel=1e-12)


def test_original_scale_has_no_angular_drift(warp):
    # b = 1/m^2 overflows beyond the collar region, so only the first four points are used
    pts = POINTS[:4]
    st = _state(warp, pts)
    nxt = step_original(warp, st, np.zeros((len(pts), 3)), 1e-5)
    assert np.all(nxt.A == st.A)
    assert np.all(nxt.R > st.R)


def test_q_int_rejects_infinite_radius(warp):
    with pytest.raises(ValueError):
        warp.q_int(np.array([1.0, np.inf]))


def test_noise_enters_with_the_stated_coefficients(warp):
    st = _state(warp, POINTS)
    dW = np.tile([1e-3, 2e-3, 3e-3], (len(POINTS), 1))
    dt = 1e-2
    base = step_timechanged(warp, st, np.zeros_like(dW), dt)
    nxt = step_timechanged(warp, st, dW, dt)
    c = coefficients(warp, st.R, st.S)
    np.testing.assert_allclose(nxt.R - base.R, c.m * 1e-3, rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(nxt.S - base.S, c.m / np.sqrt(warp.h(st.R)) * 2e-3, rtol=1e-9, atol=1e-14)


# -- paths -----------------------------------------------------------------------------------
def test_z_identity_at_termination(warp):
    cols = simulate_batch(warp, np.array([0.6, 0.0, 1.0]), np.arange(50), StepControl(), 3)
    direct = z_direct(warp, cols["r_end"], cols["s_end"])
    assert np.max(np.abs(cols["z_end"] - direct)) < 1e-7


def test_paths_converge_with_finite_lifetime(warp):
    ens = run_ensemble(warp, (1.0, 0.0, 0.0), 100, StepControl(), 5)
    assert np.all(ens.converged)
    life, tail = ens["lifetime"], ens["lifetime_tail"]
    assert np.all(np.isfinite(life)) and np.all(life > 0)
    assert np.all(tail < 0.01 * life)
    assert np.all(ens["clamps"] == 0)
    assert np.all((ens["a_end"] >= 0.0) & (ens["a_end"] < 2 * math.pi))


def test_simulate_path_returns_sample(warp):
    smp = simulate_path(warp, (0.6, 0.0, 1.0), seed=4)
    assert smp.termination == "converged"
    assert math.isfinite(smp.z_end)
    assert smp.r_max >= smp.r_end - 1e-12


def test_start_below_floor_rejected(warp):
    with pytest.raises(ValueError):
        run_ensemble(warp, (1e-9, 0.0, 0.0), 1)


def test_zero_paths_rejected(warp):
    with pytest.raises(ValueError):
        run_ensemble(warp, (1.0, 0.0, 0.0), 0)


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(dt=0.2, dt_max=0.1)
    with pytest.raises(ValueError):
        StepControl(tol_z=0.0)
    with pytest.raises(ValueError):
        StepControl(t_min=300.0)


def test_wrap_angle_range():
    a = np.array([-1e-300, -2 * math.pi, 2 * math.pi, 7.0, -0.5])
    w = wrap_angle(a)
    assert np.all((w >= 0.0) & (w < 2 * math.pi))


# -- determinism --------------------------------------------------------------------------------
def _csv_lines(ens):
    return [",".join(fmt(ens[c][i]) for c in CSV_COLUMNS) for i in range(len(ens))]


def test_same_seed_gives_identical_output(warp):
    ctl = StepControl(batch_size=16)
    a = run_ensemble(warp, (0.6, 0.0, 1.0), 40, ctl, 123)
    b = run_ensemble(warp, (0.6, 0.0, 1.0), 40, ctl, 123)
    assert _csv_lines(a) == _csv_lines(b)
    c = run_ensemble(warp, (0.6, 0.0, 1.0), 40, ctl, 124)
    assert _csv_lines(a) != _csv_lines(c)


def test_worker_count_does_not_change_output(warp):
    ctl = StepControl(batch_size=10)
    a = run_ensemble(warp, (0.6, 0.0, 1.0), 40, ctl, 9, jobs=1)
    b = run_ensemble(warp, (0.6, 0.0, 1.0), 40, ctl, 9, jobs=3)
    assert _csv_lines(a) == _csv_lines(b)


def test_path_streams_do_not_depend_on_batching(warp):
    x = (0.6, 0.0, 1.0)
    a = run_ensemble(warp, x, 30, StepControl(batch_size=30), 2)
    b = run_ensemble(warp, x, 30, StepControl(batch_size=7), 2)
    assert np.array_equal(a["z_end"], b["z_end"])
    assert np.array_equal(a["seed"], b["seed"])
    sub = run_ensemble(warp, x, 5, StepControl(), 2, path_ids=np.arange(10, 15))
    assert np.array_equal(sub["z_end"], a["z_end"][10:15])


# -- time change -------------------------------------------------------------------------------
def test_time_change_consistency(warp):
    """Both time scales with matched per-path streams give the same exit law."""
    x = (0.2, 0.0, 0.0)
    tc = run_ensemble(warp, x, 2000, StepControl(), 7, scale=TIMECHANGED)
    og = run_ensemble(warp, x, 2000, StepControl(), 7, scale=ORIGINAL)
    assert tc.converged.mean() > 0.99 and og.converged.mean() > 0.99
    assert stats.ks_2samp(tc["z_end"][tc.converged], og["z_end"][og.converged]).pvalue > 0.01
    assert stats.ks_2samp(tc["a_end"][tc.converged], og["a_end"][og.converged]).pvalue > 0.01
