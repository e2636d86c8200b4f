"""Exit law of (Z, A), bounded harmonic functions and statistical tests.

A bounded boundary functional ``f(z, a)`` defines ``h(x) = E_x[f(Z_end, A_end)]``.
This module estimates the joint law of ``(Z_end, A_end)``, evaluates ``h``
by Monte Carlo, and checks harmonicity through a mean-value test: ``h(x)``
estimated directly must agree with the average of ``h`` over the first exit
points of a small ball around ``x``.

Only converged paths enter the estimates; the fraction used is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.interpolate import RegularGridInterpolator
from scipy.special import expit, ndtr

from .sde import Ensemble, StepControl, run_ensemble, simulate_batch, wrap_angle
from .warp import WarpField

TWO_PI = 2.0 * math.pi


def sub_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 63-bit seed for a sub-experiment."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# boundary functionals
# ---------------------------------------------------------------------------
class Functional:
    """Bounded function of ``(z, a)``; ``a`` is taken modulo 2 pi.

    Families: ``const``, ``rect`` (indicator of ``[z0, z1] x [a0, a1)``),
    ``half`` (indicator of ``a in [a0, a0 + pi)``), ``sin`` (``sin(k a)``),
    ``sigmoid`` (``1/(1 + exp(-(z - c)/w))``) and ``table`` (bilinear
    interpolation on a (z, a) grid, periodic in a, clamped in z).
    """

    FAMILIES = ("const", "rect", "half", "sin", "sigmoid", "table")
    DEFAULTS = {
        "const": dict(c=1.0),
        "rect": dict(z0=-math.inf, z1=math.inf, a0=0.0, a1=math.pi),
        "half": dict(a0=0.0),
        "sin": dict(k=1.0),
        "sigmoid": dict(c=1.0, w=0.05),
        "table": {},
    }

    def __init__(self, kind: str, a_shift: float = 0.0, table=None, **params):
        if kind not in self.FAMILIES:
            raise ValueError(f"unknown family {kind!r}; choose from {self.FAMILIES}")
        unknown = set(params) - set(self.DEFAULTS[kind])
        if unknown:
            raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
        self.kind = kind
        self.params = {**self.DEFAULTS[kind], **{k: float(v) for k, v in params.items()}}
        self.a_shift = float(a_shift)
        self.table = table
        if kind == "sigmoid" and not self.params["w"] > 0.0:
            raise ValueError("sigmoid width must be positive")
        if kind == "sin" and float(self.params["k"]) != round(self.params["k"]):
            raise ValueError("sin(k a) needs integer k to be a function on the circle")
        if kind == "table":
            if table is None:
                raise ValueError("table functional needs (z, a, values)")
            z, a, v = (np.asarray(x, dtype=float) for x in table)
            if v.shape != (z.size, a.size):
                raise ValueError("table values must have shape (len(z), len(a))")
            if not np.all(np.isfinite(v)):
                raise ValueError("table values must be finite")
            # close the circle: append a + 2 pi with the first column
            a_ext = np.append(a, a[0] + TWO_PI)
            v_ext = np.concatenate([v, v[:, :1]], axis=1)
            self._a0 = a[0]
            self._zr = (z[0], z[-1])
            self._interp = RegularGridInterpolator((z, a_ext), v_ext, method="linear")

    def __call__(self, z, a):
        z = np.asarray(z, dtype=float)
        a = wrap_angle(np.asarray(a, dtype=float) - self.a_shift)
        p = self.params
        k = self.kind
        if k == "const":
            return np.full(np.broadcast(z, a).shape, p["c"])
        if k == "rect":
            width = p["a1"] - p["a0"]
            in_a = np.ones_like(a, dtype=bool) if width >= TWO_PI else np.mod(a - p["a0"], TWO_PI) < np.mod(width, TWO_PI)
            return ((z >= p["z0"]) & (z <= p["z1"]) & in_a).astype(float)
        if k == "half":
            return (np.mod(a - p["a0"], TWO_PI) < math.pi).astype(float) * np.ones_like(z)
        if k == "sin":
            return np.sin(p["k"] * a) * np.ones_like(z)
        if k == "sigmoid":
            return expit((z - p["c"]) / p["w"]) * np.ones_like(a)
        zc = np.clip(z, *self._zr)
        ac = self._a0 + np.mod(a - self._a0, TWO_PI)
        zc, ac = np.broadcast_arrays(zc, ac)
        return self._interp(np.stack([zc.ravel(), ac.ravel()], axis=-1)).reshape(zc.shape)

    @property
    def bounds(self) -> tuple[float, float]:
        k = self.kind
        if k == "const":
            return self.params["c"], self.params["c"]
        if k in ("rect", "half", "sigmoid"):
            return 0.0, 1.0
        if k == "sin":
            return -1.0, 1.0
        v = np.asarray(self.table[2], dtype=float)
        return float(v.min()), float(v.max())

    @property
    def sup_abs(self) -> float:
        lo, hi = self.bounds
        return max(abs(lo), abs(hi))

    def rotated(self, a0: float) -> "Functional":
        """``(z, a) -> f(z, a - a0)``."""
        return Functional(self.kind, a_shift=self.a_shift + a0, table=self.table,
                          **{k: v for k, v in self.params.items()})

    @property
    def spec(self) -> str:
        if self.kind == "table":
            return "table"
        ps = ",".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))
        s = self.kind + (":" + ps if ps else "")
        return s + (f"@{self.a_shift!r}" if self.a_shift else "")

    def __repr__(self):
        return f"Functional({self.spec})"


def load_table(path: str | Path):
    """Read a tabulated functional from CSV with header ``z,a,value`` (full grid)."""
    data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    for col in ("z", "a", "value"):
        if not np.all(np.isfinite(data[col])):
            raise ValueError(f"table CSV has a missing or non-numeric entry in column {col!r}")
    z = np.unique(data["z"])
    a = np.unique(data["a"])
    if z.size * a.size != data.size:
        raise ValueError("table CSV must list every (z, a) grid node exactly once")
    v = np.full((z.size, a.size), np.nan)
    v[np.searchsorted(z, data["z"]), np.searchsorted(a, data["a"])] = data["value"]
    return z, a, v


def parse_functional(spec: str) -> Functional:
    """``"sigmoid:c=1,w=0.1"``, ``"half:a0=0"``, ``"const"``, ``"table:path.csv"``."""
    spec = spec.strip()
    name, _, rest = spec.partition(":")
    if name == "table":
        if not rest:
            raise ValueError("table functional needs a CSV path: table:path.csv")
        return Functional("table", table=load_table(rest))
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"bad parameter {item!r} in {spec!r}")
            params[key.strip()] = float(val)
    return Functional(name, **params)


# ---------------------------------------------------------------------------
# exit law
# ---------------------------------------------------------------------------
def silverman(x) -> float:
    """Silverman's rule ``0.9 min(sd, IQR/1.34) n^(-1/5)``."""
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    iqr = stats.iqr(x) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def silverman_circular(a) -> float:
    """Silverman's rule with the circular standard deviation."""
    a = np.asarray(a, dtype=float)
    return 0.9 * float(stats.circstd(a)) * a.size ** (-0.2)


BANDWIDTH_FLOOR = 1e-9


@dataclass
class ExitLawEstimate:
    """Histogram, product-kernel KDE and support diagnostics of ``(Z_end, A_end)``."""

    start: tuple
    n: int
    n_converged: int
    z_edges: np.ndarray
    a_edges: np.ndarray
    hist: np.ndarray
    bandwidth: tuple
    window: tuple
    window_counts: np.ndarray
    a_counts: np.ndarray
    support_verdict: bool | None
    note: str = ""
    z: np.ndarray = field(default=None, repr=False)
    a: np.ndarray = field(default=None, repr=False)

    @property
    def converged_fraction(self) -> float:
        return self.n_converged / self.n if self.n else 0.0

    @property
    def all_a_bins_occupied(self) -> bool:
        return bool(np.all(self.a_counts > 0))

    @property
    def all_window_cells_occupied(self) -> bool:
        return bool(np.all(self.window_counts > 0))

    def kde(self, z, a, chunk: int = 4096):
        """Gaussian kernel in z times a wrapped Gaussian kernel in a."""
        bz, ba = self.bandwidth
        z = np.asarray(z, dtype=float)
        a = np.asarray(a, dtype=float)
        zq, aq = np.broadcast_arrays(z, a)
        zq, aq = zq.ravel(), aq.ravel()
        n_wrap = int(math.ceil(4.0 * ba / TWO_PI)) + 1
        shifts = TWO_PI * np.arange(-n_wrap, n_wrap + 1)
        out = np.empty(zq.size)
        cz = 1.0 / (math.sqrt(TWO_PI) * bz)
        ca = 1.0 / (math.sqrt(TWO_PI) * ba)
        for lo in range(0, zq.size, chunk):
            sl = slice(lo, lo + chunk)
            kz = cz * np.exp(-0.5 * ((zq[sl, None] - self.z[None, :]) / bz) ** 2)
            da = np.mod(aq[sl, None] - self.a[None, :], TWO_PI)
            ka = np.zeros_like(kz)
            for sh in shifts:
                ka += np.exp(-0.5 * ((da + sh) / ba) ** 2)
            out[sl] = np.mean(kz * ca * ka, axis=1)
        return out.reshape(np.broadcast(z, a).shape)

    def kde_support(self) -> tuple[float, float]:
        """z-interval carrying all but a negligible part of the KDE mass."""
        bz = self.bandwidth[0]
        return float(self.z.min() - 9.0 * bz), float(self.z.max() + 9.0 * bz)

    def kde_mass(self, z_lo=None, z_hi=None) -> float:
        """Exact KDE mass of ``[z_lo, z_hi] x S^1``; the wrapped kernel has unit mass on S^1."""
        lo, hi = self.kde_support()
        z_lo = lo if z_lo is None else z_lo
        z_hi = hi if z_hi is None else z_hi
        bz = self.bandwidth[0]
        return float(np.mean(ndtr((z_hi - self.z) / bz) - ndtr((z_lo - self.z) / bz)))

    def to_dict(self) -> dict:
        return dict(
            start=list(map(float, self.start)), n=self.n, n_converged=self.n_converged,
            converged_fraction=self.converged_fraction, bandwidth=list(map(float, self.bandwidth)),
            z_edges=self.z_edges.tolist(), a_edges=self.a_edges.tolist(), hist=self.hist.astype(int).tolist(),
            window=list(map(float, self.window)), window_counts=self.window_counts.astype(int).tolist(),
            window_cells_occupied=int(np.count_nonzero(self.window_counts)),
            window_cells=int(self.window_counts.size),
            a_counts=self.a_counts.astype(int).tolist(), all_a_bins_occupied=self.all_a_bins_occupied,
            all_window_cells_occupied=self.all_window_cells_occupied, support_verdict=self.support_verdict,
            kde_mass=self.kde_mass(), note=self.note,
        )

    def histogram_rows(self):
        """(z_lo, z_hi, a_lo, a_hi, count) for every histogram cell."""
        rows = []
        for i in range(self.hist.shape[0]):
            for j in range(self.hist.shape[1]):
                rows.append((self.z_edges[i], self.z_edges[i + 1], self.a_edges[j], self.a_edges[j + 1],
                             int(self.hist[i, j])))
        return rows


def exit_law_from_ensemble(ens: Ensemble, start, bins=(32, 16), bandwidth=None,
                           window_cells=(12, 16), min_paths: int = 1000,
                           min_converged: float = 0.95) -> ExitLawEstimate:
    conv = ens.converged
    z = np.asarray(ens["z_end"][conv], dtype=float)
    a = wrap_angle(np.asarray(ens["a_unwrapped"][conv], dtype=float))
    n, nc = len(ens), int(conv.sum())
    if nc == 0:
        raise ValueError("no converged paths")
    nz, na = bins
    z_edges = np.linspace(z.min(), z.max(), nz + 1) if z.max() > z.min() else np.linspace(z[0] - 0.5, z[0] + 0.5, nz + 1)
    a_edges = np.linspace(0.0, TWO_PI, na + 1)
    hist, _, _ = np.histogram2d(z, a, bins=(z_edges, a_edges))
    if bandwidth is None:
        bz, ba = silverman(z), silverman_circular(a)
    else:
        bz, ba = bandwidth
    note = []
    if bz < BANDWIDTH_FLOOR or ba < BANDWIDTH_FLOOR:
        note.append(f"bandwidth raised to the floor {BANDWIDTH_FLOOR:g} (degenerate marginal)")
        bz, ba = max(bz, BANDWIDTH_FLOOR), max(ba, BANDWIDTH_FLOOR)
    med = float(np.median(z))
    iqr = float(stats.iqr(z))
    wz, wa = window_cells
    w_lo, w_hi = med - 2.0 * iqr, med + 2.0 * iqr
    win, _, _ = np.histogram2d(z, a, bins=(np.linspace(w_lo, w_hi, wz + 1), np.linspace(0.0, TWO_PI, wa + 1)))
    a_counts, _ = np.histogram(a, bins=np.linspace(0.0, TWO_PI, 17))
    if n < min_paths or nc / n < min_converged:
        verdict = None
        note.append(f"support verdict withheld: need N >= {min_paths} and converged fraction >= {min_converged}")
    else:
        verdict = bool(np.all(win > 0) and np.all(a_counts > 0))
    return ExitLawEstimate(tuple(float(v) for v in start), n, nc, z_edges, a_edges, hist, (bz, ba), (w_lo, w_hi),
                           win, a_counts, verdict, "; ".join(note), z, a)


def estimate_exit_law(warp: WarpField, x, n: int, bins=(32, 16), bandwidth=None, *,
                      control: StepControl | None = None, master_seed: int = 0, jobs: int = 1,
                      window_cells=(12, 16)) -> tuple[ExitLawEstimate, Ensemble]:
    ens = run_ensemble(warp, x, n, control, master_seed, jobs=jobs)
    return exit_law_from_ensemble(ens, x, bins, bandwidth, window_cells), ens


def ks_self_consistency(warp: WarpField, x, n: int, seeds=(1, 2), *, control: StepControl | None = None,
                        jobs: int = 1) -> dict:
    """Two-sample KS test on the Z marginals of two independent ensembles."""
    zs = []
    for sd in seeds:
        ens = run_ensemble(warp, x, n, control, sd, jobs=jobs)
        zs.append(np.asarray(ens["z_end"][ens.converged], dtype=float))
    res = stats.ks_2samp(zs[0], zs[1])
    return dict(statistic=float(res.statistic), p_value=float(res.pvalue), n=[int(z.size) for z in zs],
                seeds=list(seeds))


# ---------------------------------------------------------------------------
# harmonic functions
# ---------------------------------------------------------------------------
@dataclass
class HarmonicEval:
    """Monte Carlo estimates of ``h(x) = E_x[f(Z_end, A_end)]`` per start point."""

    f: Functional
    starts: np.ndarray
    n: int
    n_used: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray

    def max_principle_ok(self, k: float = 3.0) -> np.ndarray:
        lo, hi = self.f.bounds
        return (self.estimate >= lo - k * self.stderr) & (self.estimate <= hi + k * self.stderr)

    def rows(self):
        return [(self.f.spec, *map(float, x), int(u), float(e), float(s))
                for x, u, e, s in zip(self.starts, self.n_used, self.estimate, self.stderr)]


HARMONIC_COLUMNS = ("f", "r", "s", "a", "n_used", "h", "stderr")


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    return float(np.mean(v)), se


def harmonic_from_ensembles(fs, starts, ensembles) -> list[HarmonicEval]:
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    out = []
    for f in fs:
        est, se, used = [], [], []
        for ens in ensembles:
            conv = ens.converged
            vals = f(ens["z_end"][conv], ens["a_unwrapped"][conv])
            m, s = _mean_se(vals)
            est.append(m)
            se.append(s)
            used.append(int(conv.sum()))
        out.append(HarmonicEval(f, starts, len(ensembles[0]), np.array(used), np.array(est), np.array(se)))
    return out


def eval_harmonic(warp: WarpField, f, starts, n: int, *, control: StepControl | None = None,
                  master_seed: int = 0, jobs: int = 1, independent: bool = True):
    """Estimate ``h`` at each start; ``f`` is one Functional or a list.

    With ``independent=True`` every start uses its own derived seed, so
    estimates at different starts are independent.
    """
    single = isinstance(f, Functional)
    fs = [f] if single else list(f)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ens = [run_ensemble(warp, x, n, control, sub_seed(master_seed, 1, k) if independent else master_seed, jobs=jobs)
           for k, x in enumerate(starts)]
    res = harmonic_from_ensembles(fs, starts, ens)
    return res[0] if single else res


# ---------------------------------------------------------------------------
# mean-value test
# ---------------------------------------------------------------------------
def ball_predicate(warp: WarpField, x, radius: float):
    """Exit predicate of the coordinate ball with the metric frozen at ``x``.

    ``(R - r0)^2 + h(r0) (S - s0)^2 + g(x) (A - a0)^2 >= radius^2``.
    """
    r0, s0, a0 = map(float, x)
    h0 = float(warp.h(np.array(r0)))
    log_g0 = float(warp.log_g(np.array(r0), np.array(s0)))

    def stop(R, S, A, ids):
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            ga = np.exp(log_g0 + 2.0 * np.log(np.abs(A - a0)))
        return (R - r0) ** 2 + h0 * (S - s0) ** 2 + ga >= radius**2

    return stop


def ball_exits(warp: WarpField, x, n: int, radius: float, control: StepControl, master_seed: int) -> dict:
    """Simulate ``n`` paths from ``x`` until they leave the ball; batches follow ``control.batch_size``."""
    stop = ball_predicate(warp, x, radius)
    parts = []
    for lo in range(0, n, control.batch_size):
        ids = np.arange(lo, min(n, lo + control.batch_size))
        parts.append(simulate_batch(warp, np.asarray(x, dtype=float), ids, control, master_seed, stop=stop))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


@dataclass
class MeanValueReport:
    f: str
    x: tuple
    ball_radius: float
    n_direct: int
    n_outer: int
    n_inner: int
    direct: float
    direct_se: float
    ball: float
    ball_se: float
    z_score: float
    n_exited: int
    valid: bool
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["x"] = list(map(float, self.x))
        return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


RESOLUTION = 1e-12


def z_score(a: float, sa: float, b: float, sb: float) -> float:
    """``(a - b)/sqrt(sa^2 + sb^2)``, with the denominator floored at ``1e-12`` relative.

    The floor keeps differences at floating-point resolution (for example two
    estimates of ``sin(a0)`` when ``A`` is numerically frozen) from producing
    spurious large scores.
    """
    floor = RESOLUTION * max(1.0, abs(a), abs(b))
    return (a - b) / max(math.hypot(sa, sb), floor)


def mean_value_test(warp: WarpField, f, x, ball_radius: float = 0.25, n_outer: int = 400, n_inner: int = 25,
                    n_direct: int | None = None, *, control: StepControl | None = None, master_seed: int = 0,
                    jobs: int = 1, max_rel_se: float = 0.1):
    """Compare a direct estimate of ``h(x)`` with the ball-exit average of ``h``.

    The outer paths stop at the first step outside the ball; each exit point
    starts ``n_inner`` fresh paths whose mean of ``f`` estimates ``h`` there.
    Both estimators target the same value for any stopping time, so the
    overshoot of the discrete exit does not bias the comparison.  ``f`` may
    be a list; all functionals share the same simulations.
    """
    single = isinstance(f, Functional)
    fs = [f] if single else list(f)
    x = tuple(float(v) for v in x)
    if ball_radius <= 0.0:
        raise ValueError("ball_radius must be positive")
    if x[0] < 2.0 * ball_radius:
        raise ValueError("start must be at least 2 * ball_radius from the axis")
    control = control or StepControl()
    n_direct = n_outer * n_inner if n_direct is None else int(n_direct)
    direct = run_ensemble(warp, x, n_direct, control, sub_seed(master_seed, 2, 0), jobs=jobs)
    outer_ctl = StepControl(**{**control.to_dict(), "dt_max": min(control.dt_max, ball_radius / 10.0)})
    ex = ball_exits(warp, x, n_outer, ball_radius, outer_ctl, sub_seed(master_seed, 2, 1))
    exited = ex["termination"] == "exited"
    starts = np.stack([ex["r_end"], ex["s_end"], ex["a_unwrapped"]], axis=1)
    inner_idx = np.flatnonzero(exited)
    inner = None
    if inner_idx.size:
        x_inner = np.repeat(starts[inner_idx], n_inner, axis=0)
        inner = run_ensemble(warp, x_inner, x_inner.shape[0], control, sub_seed(master_seed, 2, 2), jobs=jobs)
    reports = []
    conv_d = direct.converged
    for fn in fs:
        d, dse = _mean_se(fn(direct["z_end"][conv_d], direct["a_unwrapped"][conv_d]))
        hv = np.empty(n_outer)
        # outer paths that ended before leaving the ball contribute their own terminal value
        ended = ~exited
        hv[ended] = fn(ex["z_end"][ended], ex["a_unwrapped"][ended])
        if inner is not None:
            vals = fn(inner["z_end"], inner["a_unwrapped"]).reshape(inner_idx.size, n_inner)
            ok = inner.converged.reshape(inner_idx.size, n_inner)
            with np.errstate(invalid="ignore"):
                hv[inner_idx] = np.where(ok, vals, 0.0).sum(axis=1) / ok.sum(axis=1)
        hv = hv[np.isfinite(hv)]
        b, bse = _mean_se(hv)
        sup = fn.sup_abs
        valid = bool(dse <= max_rel_se * sup and bse <= max_rel_se * sup)
        zs = z_score(d, dse, b, bse)
        note = "" if valid else f"a standard error exceeds {max_rel_se:g} sup|f|"
        reports.append(MeanValueReport(fn.spec, x, ball_radius, n_direct, n_outer, n_inner, d, dse, b, bse, zs,
                                       int(exited.sum()), valid, bool(valid and abs(zs) < 3.0), note))
    return reports[0] if single else reports


# ---------------------------------------------------------------------------
# non-Liouville summary
# ---------------------------------------------------------------------------
def witness(h1: HarmonicEval, i: int, j: int, k: float = 3.0) -> dict:
    """Do the estimates at starts ``i`` and ``j`` differ by more than ``k`` combined stderr?"""
    a, b = float(h1.estimate[i]), float(h1.estimate[j])
    sa, sb = float(h1.stderr[i]), float(h1.stderr[j])
    zs = z_score(a, sa, b, sb)
    return dict(f=h1.f.spec, start_1=h1.starts[i].tolist(), start_2=h1.starts[j].tolist(), h_1=a, h_2=b,
                se_1=sa, se_2=sb, z_score=zs, passed=bool(abs(zs) > k))


def non_liouville_report(warp: WarpField, n: int = 2000, *, control: StepControl | None = None,
                         master_seed: int = 0, jobs: int = 1, start=(1.0, 0.0, 0.0), r_witness: float = 0.5) -> dict:
    """Evidence for non-constant bounded harmonic functions.

    (a) limiting behaviour of paths from ``start``: fraction converged,
        fraction with ``S`` above its ``t = 1`` value at the end, and the
        spread of the angular displacement;
    (b) an a-direction witness (half-circle indicator, starts differing by pi
        in a) with its symmetry check ``h(a0 + pi) = 1 - h(a0)``;
    (c) a z-direction witness (sigmoid in z, starts at s = -4 and s = 4).
    """
    control = control or StepControl()
    ens = run_ensemble(warp, start, n, control, sub_seed(master_seed, 3, 0), jobs=jobs)
    conv = ens.converged
    s_up = ens["s_end"][conv] > ens["s_at_1"][conv]
    da = ens["a_unwrapped"][conv] - float(start[2])
    limiting = dict(start=list(map(float, start)), n=n, converged_fraction=float(conv.mean()),
                    s_above_t1_fraction=float(s_up.mean()) if conv.any() else math.nan,
                    angular_displacement_sd=float(np.std(da)) if conv.any() else math.nan,
                    r_end_median=float(np.median(ens["r_end"][conv])) if conv.any() else math.nan)
    half = Functional("half", a0=0.0)
    a_starts = np.array([[r_witness, 0.0, math.pi / 2], [r_witness, 0.0, 3 * math.pi / 2]])
    ha = eval_harmonic(warp, half, a_starts, n, control=control, master_seed=sub_seed(master_seed, 3, 1), jobs=jobs)
    flip = z_score(float(ha.estimate[1]), float(ha.stderr[1]), 1.0 - float(ha.estimate[0]), float(ha.stderr[0]))
    sig = Functional("sigmoid", c=1.0, w=1.0)
    z_starts = np.array([[2.0, -4.0, 0.0], [2.0, 4.0, 0.0]])
    hz = eval_harmonic(warp, sig, z_starts, n, control=control, master_seed=sub_seed(master_seed, 3, 2), jobs=jobs)
    a_w = witness(ha, 0, 1)
    z_w = witness(hz, 0, 1)
    return dict(limiting=limiting, a_witness=a_w, z_witness=z_w,
                a_flip=dict(z_score=flip, passed=bool(abs(flip) < 3.0)),
                passed=bool(a_w["passed"] and z_w["passed"] and abs(flip) < 3.0))


__all__ = [
    "ExitLawEstimate",
    "Functional",
    "HARMONIC_COLUMNS",
    "HarmonicEval",
    "MeanValueReport",
    "ball_exits",
    "ball_predicate",
    "estimate_exit_law",
    "eval_harmonic",
    "exit_law_from_ensemble",
    "harmonic_from_ensembles",
    "ks_self_consistency",
    "load_table",
    "mean_value_test",
    "non_liouville_report",
    "parse_functional",
    "silverman",
    "silverman_circular",
    "sub_seed",
    "witness",
    "z_score",
]
