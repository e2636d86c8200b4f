"""Brownian motion in the coordinates (r, s, a).

The generator of Brownian motion for ``dr^2 + h ds^2 + g da^2`` gives, in
the original time scale,

    dR = b dt + dW1,   dS = (g_s / 4 g h) dt + h^{-1/2} dW2,   dA = g^{-1/2} dW3,

with ``b = h'/4h + g_r/4g``.  Running the clock at speed ``b`` turns the
radial drift into 1; with ``m = b^{-1/2} = 2 / sqrt(h'/h + T)`` the
time-changed system is

    dR = dt + m dW1,   dS = p/(1 + (h'/h)/T) dt + m h^{-1/2} dW2,   dA = m g^{-1/2} dW3,

and the lifetime of the original process is the integral of ``m^2`` along
the time-changed path.  Both schemes are Euler-Maruyama with step halving.

Paths are simulated in vectorised batches.  Every path owns a random stream
derived from ``(master seed, path id)`` and consumes exactly three normals
per step, so results do not depend on how paths are grouped into workers.
The batch size is fixed by :class:`StepControl`, never by the worker count.
"""

from __future__ import annotations

import math
import multiprocessing
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .warp import WarpField

TIMECHANGED = "timechanged"
ORIGINAL = "original"
TERMINATIONS = ("converged", "horizon", "fault", "exited")
_N_BLOCKS = 5
_RNG_BLOCK = 256


@dataclass(frozen=True)
class StepControl:
    """Step-size, stopping and batching parameters.

    ``dt`` is the initial step and ``dt_max`` the largest one allowed, both in
    time-changed units.  A step is halved while the noise displacement
    ``m sqrt(dt)`` exceeds ``rel_cap * R`` or ``abs_cap``.  Convergence is
    declared when, over the trailing ``window``, the range of Z is below
    ``tol_z`` and the A-coefficient is below ``a_floor``; never before
    ``t_min``.  ``t_max`` is the horizon in time-changed units.

    ``dt_orig`` and ``drift_cap`` only matter for the original time scale,
    where a step is halved while ``b dt`` exceeds ``drift_cap``.

    Below ``r_axis`` (inside the exactly hyperbolic collar) both schemes use
    :func:`step_axis` with the original-time step ``dt_axis``.
    """

    dt: float = 0.01
    dt_max: float = 0.1
    rel_cap: float = 0.1
    abs_cap: float = 0.02
    window: float = 5.0
    tol_z: float = 1e-4
    a_floor: float = 1e-6
    t_min: float = 0.0
    t_max: float = 200.0
    dt_min: float = 1e-14
    dt_orig: float = 0.01
    drift_cap: float = 0.02
    beta: float = 0.5
    beta_from: float = 20.0
    r_axis: float = 0.05
    dt_axis: float = 1e-4
    bracket: tuple | None = None  # (alpha, r_alpha): check m <= h^-alpha beyond r_alpha
    batch_size: int = 2000

    def __post_init__(self):
        if not (0.0 < self.dt <= self.dt_max):
            raise ValueError("need 0 < dt <= dt_max")
        if not self.tol_z > 0.0:
            raise ValueError("tol_z must be positive")
        for name in ("rel_cap", "abs_cap", "window", "a_floor", "t_max", "dt_min", "dt_orig", "drift_cap", "r_axis", "dt_axis"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.t_min < 0.0 or self.t_min >= self.t_max:
            raise ValueError("need 0 <= t_min < t_max")
        if self.r_axis > 0.08:
            raise ValueError("r_axis must stay inside the hyperbolic collar (<= 0.08)")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be at least 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["bracket"] = None if self.bracket is None else list(self.bracket)
        return d


@dataclass
class PathState:
    """Live state of a batch of paths (all fields are arrays of equal length).

    ``t`` is the clock of the scheme (time-changed or original) and ``tau``
    the time-changed clock; they coincide in the time-changed scheme.
    ``life`` accumulates the lifetime in original-time units.
    """

    t: np.ndarray
    tau: np.ndarray
    R: np.ndarray
    S: np.ndarray
    A: np.ndarray
    Z: np.ndarray
    life: np.ndarray
    steps: np.ndarray
    dt: np.ndarray
    clamps: np.ndarray

    @classmethod
    def start(cls, warp: WarpField, x0) -> "PathState":
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        R, S, A = (x0[:, i].copy() for i in range(3))
        if np.any(R < warp.cfg.r_floor):
            raise ValueError(f"start radius below r_floor = {warp.cfg.r_floor}")
        n = R.size
        z = np.zeros(n)
        return cls(
            t=z.copy(), tau=z.copy(), R=R, S=S, A=A, Z=z_direct(warp, R, S),
            life=z.copy(), steps=np.zeros(n, dtype=np.int64), dt=np.zeros(n),
            clamps=np.zeros(n, dtype=np.int64),
        )

    def take(self, idx) -> "PathState":
        return PathState(**{k: getattr(self, k)[idx] for k in self.__dataclass_fields__})

    def put(self, idx, other: "PathState") -> None:
        for k in self.__dataclass_fields__:
            getattr(self, k)[idx] = getattr(other, k)


@dataclass
class ExitSample:
    """Terminal record of one path.  ``a_end`` is reduced to [0, 2 pi)."""

    path_id: int
    seed: int
    z_end: float
    a_end: float
    lifetime: float
    lifetime_tail: float
    r_max: float
    steps: int
    termination: str
    s_end: float = math.nan
    s_at_1: float = math.nan
    r_end: float = math.nan
    a_unwrapped: float = math.nan
    t_end: float = math.nan
    beta_ok: bool = True
    clamps: int = 0
    bracket_violations: int = 0


CSV_COLUMNS = ("path_id", "seed", "z_end", "a_end", "lifetime", "lifetime_tail", "r_max", "steps", "termination")


@dataclass
class Ensemble:
    """Column-oriented results of :func:`run_ensemble`, ordered by path id."""

    columns: dict = field(default_factory=dict)
    master_seed: int = 0
    scale: str = TIMECHANGED

    def __len__(self):
        return len(self.columns.get("path_id", ()))

    def __getitem__(self, key):
        return self.columns[key]

    @property
    def converged(self) -> np.ndarray:
        return self.columns["termination"] == "converged"

    def fault_fraction(self) -> float:
        return float(np.mean(self.columns["termination"] == "fault")) if len(self) else 0.0

    def samples(self) -> list[ExitSample]:
        keys = list(ExitSample.__dataclass_fields__)
        out = []
        for i in range(len(self)):
            kw = {k: self.columns[k][i] for k in keys}
            for k in ("path_id", "seed", "steps", "clamps", "bracket_violations"):
                kw[k] = int(kw[k])
            kw["beta_ok"] = bool(kw["beta_ok"])
            kw["termination"] = str(kw["termination"])
            out.append(ExitSample(**kw))
        return out


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------
def wrap_angle(a):
    """Reduce to [0, 2 pi); ``mod`` alone can round tiny negatives up to 2 pi."""
    w = np.mod(a, 2.0 * math.pi)
    return np.where(w >= 2.0 * math.pi, 0.0, w)


def z_direct(warp: WarpField, R, S):
    """Z = S - int_0^R q."""
    return np.asarray(S, dtype=float) - warp.q_int(R)


@dataclass
class Coefficients:
    """SDE coefficients at a batch of points (time-changed scale).

    ``m2 = m^2`` is also the lifetime integrand; ``log_a`` is the log of the
    A-coefficient ``m / sqrt(g)``; ``b = 1/m^2`` is the original radial drift.
    """

    m: np.ndarray
    m2: np.ndarray
    s_drift: np.ndarray
    s_noise: np.ndarray
    log_a: np.ndarray
    h: np.ndarray

    @property
    def a_coef(self):
        return np.exp(self.log_a)

    @property
    def b(self):
        with np.errstate(divide="ignore"):
            return 1.0 / self.m2


def coefficients(warp: WarpField, R, S) -> Coefficients:
    geo = warp.geometry(R, S, deriv=False)
    log_m = geo.log_m
    m = np.exp(log_m)
    return Coefficients(
        m=m, m2=geo.m2, s_drift=geo.s_drift, s_noise=m / np.sqrt(geo.h),
        log_a=log_m - 0.5 * geo.t, h=geo.h,
    )


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------
def _advance(warp, state, dR, dS, dA, dt, dtau, dlife, R_new=None):
    if R_new is None:
        R_new = state.R + dR
    low = R_new < warp.cfg.r_floor
    R_new = np.where(low, warp.cfg.r_floor, R_new)
    S_new = state.S + dS
    # a non-finite radius (overflowing drift) leaves Z as nan; the caller marks the path as a fault
    fin = np.isfinite(R_new)
    Q_new = np.full(np.shape(R_new), np.nan)
    Q_new[fin] = warp.q_int(R_new[fin])
    Z_new = state.Z + dS - (Q_new - warp.q_int(state.R))
    return PathState(
        t=state.t + dt, tau=state.tau + dtau, R=R_new, S=S_new, A=state.A + dA, Z=Z_new,
        life=state.life + dlife, steps=state.steps + 1, dt=np.broadcast_to(dt, R_new.shape).astype(float),
        clamps=state.clamps + low,
    )


def step_timechanged(warp: WarpField, state: PathState, dW, dt, coef: Coefficients | None = None) -> PathState:
    """One Euler-Maruyama step of the time-changed system.

    ``dW`` has shape (n, 3) with entries ~ N(0, dt).  Z is advanced by
    ``dS - [Q(R_new) - Q(R_old)]`` with ``Q = int_0 q``, the exact discrete
    form of ``dZ = dS - q dR - q'/2 m^2 dt``.  The lifetime is advanced by
    the left-point value ``m^2 dt``; :func:`simulate_path` replaces it with
    a trapezoid rule.
    """
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    dt = np.asarray(dt, dtype=float)
    c = coef if coef is not None else coefficients(warp, state.R, state.S)
    dR = dt + c.m * dW[:, 0]
    dS = c.s_drift * dt + c.s_noise * dW[:, 1]
    dA = c.a_coef * dW[:, 2]
    return _advance(warp, state, dR, dS, dA, dt, dt, c.m2 * dt)


def step_original(warp: WarpField, state: PathState, dW, dt, coef: Coefficients | None = None) -> PathState:
    """One Euler-Maruyama step in the original time scale.

    Drift of R is ``b = h'/4h + g_r/4g``, drift of S is ``g_s/(4gh)``,
    A has no drift; the noise coefficients are 1, ``h^-1/2`` and ``g^-1/2``.
    """
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    dt = np.asarray(dt, dtype=float)
    c = coef if coef is not None else coefficients(warp, state.R, state.S)
    b = c.b
    with np.errstate(invalid="ignore"):
        dR = b * dt + dW[:, 0]
        dS = c.s_drift * b * dt + dW[:, 1] / np.sqrt(c.h)
    with np.errstate(divide="ignore", invalid="ignore"):
        dA = np.exp(c.log_a - np.log(c.m)) * dW[:, 2]
    return _advance(warp, state, dR, dS, dA, dt, b * dt, dt)


def step_axis(warp: WarpField, state: PathState, dW, dt, scale: str = TIMECHANGED) -> PathState:
    """Original-time step in Cartesian coordinates ``(R cos A, R sin A)``.

    Near the axis the metric is exactly ``dr^2 + cosh^2 r ds^2 + sinh^2 r da^2``
    and R behaves like a two-dimensional Bessel process, so polar steps must
    shrink with R.  In Cartesian coordinates the coefficients are smooth: the
    drift is ``(tanh R + coth R - R/sinh^2 R)/2`` along the radial unit
    vector (it vanishes linearly at the axis) and the angular noise is scaled
    by ``R/sinh R``.  Requires R inside the collar (p = 0 there).
    """
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    dt = np.asarray(dt, dtype=float)
    R, A = state.R, state.A
    cr, sr = np.cos(A), np.sin(A)
    sh = np.sinh(R)
    # (coth R - R/sinh^2 R) written to avoid cancellation for small R
    small = R < 1e-3
    Rs = np.where(small, 1.0, R)
    ct = np.where(small, 2.0 * R / 3.0, np.cosh(Rs) / np.sinh(Rs) - Rs / np.sinh(Rs) ** 2)
    drift = 0.5 * (np.tanh(R) + ct)
    ang = np.where(small, 1.0 - R * R / 6.0, R / np.where(small, 1.0, sh))
    ur = drift * dt + dW[:, 0]
    ua = ang * dW[:, 2]
    X = R * cr + ur * cr - ua * sr
    Y = R * sr + ur * sr + ua * cr
    R_new = np.hypot(X, Y)
    dA = np.arctan2(-X * sr + Y * cr, X * cr + Y * sr)
    dS = dW[:, 1] / np.cosh(R)
    # The time-change rate b ~ 1/(2R) is singular on the axis.  Over one step
    # it is evaluated at sqrt(R^2 + 0.16 dt), which reproduces the exact mean
    # of int 1/(2R) for planar Brownian motion started on the axis.
    Re = np.sqrt(R * R + 0.16 * dt)
    b = 0.5 * (np.tanh(Re) + 1.0 / np.tanh(Re))
    dtau = b * dt
    clock = dt if scale == ORIGINAL else dtau
    return _advance(warp, state, R_new - R, dS, dA, clock, dtau, dt, R_new=R_new)


def ito_z_increment(warp: WarpField, R, dS, dR, m2, dt):
    """Itô form ``dS - q dR - q'/2 m^2 dt`` of the Z increment (for checks)."""
    return dS - warp.q(R) * dR - 0.5 * warp.q_r(R) * m2 * dt


# ---------------------------------------------------------------------------
# step size selection
# ---------------------------------------------------------------------------
def _grow(dt_prev, first, top, n):
    if dt_prev is None:
        return np.full(n, float(first))
    dt_prev = np.asarray(dt_prev, dtype=float)
    return np.where(np.isfinite(dt_prev) & (dt_prev > 0), np.minimum(2.0 * dt_prev, top), first)


def choose_dt(control: StepControl, R, c: Coefficients, scale: str, dt_prev=None):
    """Largest admissible step: start from twice the previous step (capped)
    and halve until the displacement caps hold."""
    n = np.size(R)
    if scale == TIMECHANGED:
        dt = _grow(dt_prev, control.dt, control.dt_max, n)
        cap = np.minimum(control.rel_cap * R, control.abs_cap)
        for _ in range(80):
            bad = (c.m * np.sqrt(dt) > cap) & (dt > control.dt_min)
            if not np.any(bad):
                break
            dt = np.where(bad, 0.5 * dt, dt)
        return dt
    dt = _grow(dt_prev, control.dt_orig, control.dt_orig, n)
    b = c.b
    cap = np.minimum(control.rel_cap * R, control.abs_cap)
    for _ in range(200):
        with np.errstate(invalid="ignore", over="ignore"):
            bad = ((b * dt > np.minimum(control.drift_cap, control.rel_cap * R)) | (np.sqrt(dt) > cap)) & (dt > 0.0)
        if not np.any(bad):
            break
        dt = np.where(bad, 0.5 * dt, dt)
    return dt


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------
def path_seed_sequence(master_seed: int, path_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(path_id),))


def path_seed(master_seed: int, path_id: int) -> int:
    """The 63-bit integer that identifies a path's stream in outputs."""
    return int(path_seed_sequence(master_seed, path_id).generate_state(1, np.uint64)[0] >> np.uint64(1))


class _Streams:
    """Per-path normal streams, drawn in blocks of ``_RNG_BLOCK`` steps."""

    def __init__(self, master_seed, ids):
        self.gens = [np.random.Generator(np.random.PCG64(path_seed_sequence(master_seed, i))) for i in ids]
        n = len(ids)
        self.buf = np.empty((n, _RNG_BLOCK, 3))
        self.ptr = np.full(n, _RNG_BLOCK, dtype=np.int64)

    def draw(self, idx):
        need = idx[self.ptr[idx] >= _RNG_BLOCK]
        for i in need:
            self.buf[i] = self.gens[i].standard_normal((_RNG_BLOCK, 3))
            self.ptr[i] = 0
        out = self.buf[idx, self.ptr[idx]]
        self.ptr[idx] += 1
        return out


# ---------------------------------------------------------------------------
# batch driver
# ---------------------------------------------------------------------------
def _lifetime_tail(taus, vals):
    """Integral beyond the last sample of an exponential fitted to the
    trailing block-end values of the lifetime integrand (inf if not decaying)."""
    ok = np.isfinite(vals) & (vals > 0)
    if np.count_nonzero(ok) < 2:
        return math.inf if not (ok.any() and vals[ok][-1] == 0) else 0.0
    x, y = taus[ok], np.log(vals[ok])
    slope = np.polyfit(x - x[-1], y, 1)[0] if x.size > 2 else (y[-1] - y[0]) / (x[-1] - x[0])
    if not slope < 0.0:
        return math.inf
    return float(vals[ok][-1] / (-slope))


# Non-finite states are detected explicitly and reported as faults, so the
# floating-point warnings they trigger along the way are silenced.
@np.errstate(divide="ignore", over="ignore", invalid="ignore")
def simulate_batch(warp: WarpField, x0, ids, control: StepControl, master_seed: int,
                   scale: str = TIMECHANGED, stop=None, max_steps: int = 10**7) -> dict:
    """Run a batch of paths to termination and return result columns.

    ``x0`` is one start point (r, s, a) or one per path.  ``stop`` is an
    optional predicate ``stop(R, S, A, ids) -> bool mask``; paths for which
    it fires end with termination ``"exited"`` at the first state that
    satisfies it.
    """
    if scale not in (TIMECHANGED, ORIGINAL):
        raise ValueError(f"unknown time scale {scale!r}")
    ids = np.asarray(ids, dtype=np.int64)
    n = ids.size
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (n, 3))
    st = PathState.start(warp, x0)
    streams = _Streams(master_seed, ids)
    blk_len = control.window / _N_BLOCKS

    active = np.ones(n, dtype=bool)
    term = np.full(n, "", dtype=object)
    r_peak = st.R.copy()
    s_at_1 = np.full(n, np.nan)
    beta_ok = np.ones(n, dtype=bool)
    brk = np.zeros(n, dtype=np.int64)
    m2_prev = np.full(n, np.nan)
    dt_prev = np.full(n, np.nan)
    blk_start = st.tau.copy()
    blk_min, blk_max = st.Z.copy(), st.Z.copy()
    hist_min = np.full((n, _N_BLOCKS), np.nan)
    hist_max = np.full((n, _N_BLOCKS), np.nan)
    hist_tau = np.full((n, _N_BLOCKS), np.nan)
    hist_val = np.full((n, _N_BLOCKS), np.nan)
    n_blocks = np.zeros(n, dtype=np.int64)
    tail = np.full(n, np.nan)

    if stop is not None:
        hit = np.asarray(stop(st.R, st.S, st.A, ids), dtype=bool)
        term[hit] = "exited"
        active &= ~hit

    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cur = st.take(idx)
        c = coefficients(warp, cur.R, cur.S)
        # trapezoid correction of the lifetime for the step just taken
        if scale == TIMECHANGED:
            have = np.isfinite(m2_prev[idx])
            corr = np.where(have, 0.5 * (c.m2 - m2_prev[idx]) * dt_prev[idx], 0.0)
            cur.life = cur.life + corr
        else:
            have = np.isfinite(m2_prev[idx])
            with np.errstate(divide="ignore", invalid="ignore"):
                corr = np.where(have, 0.5 * (1.0 / c.m2 - 1.0 / m2_prev[idx]) * dt_prev[idx], 0.0)
            cur.tau = cur.tau + np.where(np.isfinite(corr), corr, 0.0)
        m2_prev[idx] = c.m2

        bad = ~(np.isfinite(cur.R) & np.isfinite(cur.S) & np.isfinite(cur.A) & np.isfinite(cur.Z) & np.isfinite(c.m2))
        # window bookkeeping on the time-changed clock
        blk_min[idx] = np.minimum(blk_min[idx], cur.Z)
        blk_max[idx] = np.maximum(blk_max[idx], cur.Z)
        done_blk = (cur.tau - blk_start[idx]) >= blk_len
        conv = np.zeros(idx.size, dtype=bool)
        if np.any(done_blk):
            j = idx[done_blk]
            for arr, val in ((hist_min, blk_min[j]), (hist_max, blk_max[j]), (hist_tau, cur.tau[done_blk]), (hist_val, c.m2[done_blk])):
                arr[j] = np.roll(arr[j], -1, axis=1)
                arr[j, -1] = val
            n_blocks[j] += 1
            blk_start[j] = cur.tau[done_blk]
            blk_min[j] = cur.Z[done_blk]
            blk_max[j] = cur.Z[done_blk]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)  # all-nan rows of faulted paths
                rng_z = np.nanmax(hist_max[j], axis=1) - np.nanmin(hist_min[j], axis=1)
            conv[done_blk] = (
                (n_blocks[j] >= _N_BLOCKS)
                & (rng_z < control.tol_z)
                & (c.log_a[done_blk] < math.log(control.a_floor))
                & (cur.tau[done_blk] >= control.t_min)
            )
        # diagnostics
        first1 = np.isnan(s_at_1[idx]) & (cur.tau >= 1.0)
        s_at_1[idx[first1]] = cur.S[first1]
        late = cur.tau >= control.beta_from
        beta_ok[idx] &= ~late | (np.abs(cur.R - cur.tau) <= control.beta * cur.tau)
        r_peak[idx] = np.maximum(r_peak[idx], cur.R)
        if control.bracket is not None:
            alpha, r_alpha = control.bracket
            lim = np.exp(-alpha * np.log(c.h))
            beyond = cur.R >= r_alpha
            brk[idx] += beyond & ((c.m > lim) | (c.s_noise > lim))

        horizon = (cur.R > warp.cfg.r_max) | (cur.tau >= control.t_max)
        exited = np.zeros(idx.size, dtype=bool)
        if stop is not None:
            exited = np.asarray(stop(cur.R, cur.S, cur.A, ids[idx]), dtype=bool) & (cur.steps > 0)
        finished = bad | conv | horizon | exited
        term[idx[bad]] = "fault"
        term[idx[~bad & conv]] = "converged"
        term[idx[~bad & ~conv & horizon]] = "horizon"
        term[idx[~bad & ~conv & ~horizon & exited]] = "exited"
        if np.any(conv):
            j = idx[conv]
            tail[j] = [_lifetime_tail(hist_tau[k], hist_val[k]) for k in j]
        st.put(idx, cur)
        active[idx[finished]] = False

        go = ~finished
        if not np.any(go):
            continue
        jdx = idx[go]
        cur = cur.take(go)
        cg = Coefficients(*(getattr(c, k)[go] for k in c.__dataclass_fields__))
        near = cur.R < control.r_axis
        dt = choose_dt(control, cur.R, cg, scale, dt_prev[jdx])
        dt = np.where(near, control.dt_axis, dt)
        dW = streams.draw(jdx) * np.sqrt(dt)[:, None]
        if scale == TIMECHANGED:
            nxt = step_timechanged(warp, cur, dW, dt, cg)
        else:
            nxt = step_original(warp, cur, dW, dt, cg)
        if np.any(near):
            nxt.put(near, step_axis(warp, cur.take(near), dW[near], dt[near], scale))
            m2_prev[jdx[near]] = np.nan
        dt_prev[jdx] = np.where(near, np.nan, dt)
        st.put(jdx, nxt)
    else:
        term[active] = "horizon"

    # paths that ended by fault or horizon have no converged tail
    life_tail = np.where(np.isnan(tail), math.inf, tail)
    life = st.t.copy() if scale == ORIGINAL else st.life.copy()
    seeds = np.array([path_seed(master_seed, i) for i in ids], dtype=np.int64)
    return {
        "path_id": ids,
        "seed": seeds,
        "z_end": st.Z,
        "a_end": wrap_angle(st.A),
        "lifetime": life,
        "lifetime_tail": life_tail,
        "r_max": r_peak,
        "steps": st.steps,
        "termination": term.astype(str),
        "s_end": st.S,
        "s_at_1": s_at_1,
        "r_end": st.R,
        "a_unwrapped": st.A,
        "t_end": st.tau,
        "beta_ok": beta_ok,
        "clamps": st.clamps,
        "bracket_violations": brk,
    }


def simulate_path(warp: WarpField, x0, control: StepControl | None = None, seed: int = 0,
                  path_id: int = 0, scale: str = TIMECHANGED) -> ExitSample:
    """Simulate one path until convergence, horizon or fault."""
    control = control or StepControl()
    cols = simulate_batch(warp, np.asarray(x0, dtype=float), [path_id], control, seed, scale)
    return Ensemble(cols, seed, scale).samples()[0]


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------
_WORKER_WARP: WarpField | None = None


def _worker_batch(args):
    x0, ids, control, seed, scale = args
    return simulate_batch(_WORKER_WARP, x0, ids, control, seed, scale)


def _merge(parts: list[dict]) -> dict:
    cols = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    order = np.argsort(cols["path_id"], kind="stable")
    return {k: v[order] for k, v in cols.items()}


class EnsembleFault(RuntimeError):
    """More than the tolerated fraction of paths ended in a numerical fault."""


def run_ensemble(warp: WarpField, x0, n: int, control: StepControl | None = None, master_seed: int = 0,
                 *, jobs: int = 1, scale: str = TIMECHANGED, path_ids=None,
                 max_fault_fraction: float = 0.01) -> Ensemble:
    """Simulate ``n`` independent paths from ``x0`` (one point or one per path).

    Path ``i`` uses the stream ``SeedSequence(master_seed, spawn_key=(i,))``;
    batches are cut by ``control.batch_size`` only, so the output is
    identical for every ``jobs``.
    """
    control = control or StepControl()
    n = int(n)
    if n < 1:
        raise ValueError("need at least one path")
    ids = np.arange(n, dtype=np.int64) if path_ids is None else np.asarray(path_ids, dtype=np.int64)
    if ids.size != n:
        raise ValueError("path_ids must have length n")
    x0 = np.asarray(x0, dtype=float)
    per_path = x0.ndim == 2
    if per_path and x0.shape != (n, 3):
        raise ValueError("per-path starts must have shape (n, 3)")
    bs = int(control.batch_size)
    tasks = []
    for lo in range(0, n, bs):
        sl = slice(lo, min(n, lo + bs))
        tasks.append((x0[sl] if per_path else x0, ids[sl], control, int(master_seed), scale))
    if jobs <= 1 or len(tasks) == 1:
        parts = [simulate_batch(warp, *t) for t in tasks]
    else:
        global _WORKER_WARP
        _WORKER_WARP = warp
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=int(jobs), mp_context=ctx) as ex:
            parts = list(ex.map(_worker_batch, tasks))
    ens = Ensemble(_merge(parts), int(master_seed), scale)
    if ens.fault_fraction() > max_fault_fraction:
        raise EnsembleFault(f"{ens.fault_fraction():.2%} of paths faulted")
    return ens


__all__ = [
    "CSV_COLUMNS",
    "Coefficients",
    "Ensemble",
    "EnsembleFault",
    "ExitSample",
    "ORIGINAL",
    "PathState",
    "StepControl",
    "TIMECHANGED",
    "choose_dt",
    "coefficients",
    "ito_z_increment",
    "path_seed",
    "run_ensemble",
    "simulate_batch",
    "wrap_angle",
    "simulate_path",
    "step_axis",
    "step_original",
    "step_timechanged",
    "z_direct",
]
