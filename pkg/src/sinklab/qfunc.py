"""The leaf function q and the change of variable z = s - int_0^r q.

Below ``T1`` the function is ``q = (1/sqrt h)' = -sinh r / cosh^2 r``; above
``T2`` it is ``p0/2 - 40/h``.  In between, q first follows the candidate

    q_c' = (1/sqrt h)'' + theta(r) * 2 sech^3 r,   0 < theta < 1,

whose slope sits strictly between ``(1/sqrt h)''`` and ``sech r`` (their
difference is exactly ``2 sech^3 r``), and then over an interval of length
``2*smoothing_width`` blends its slope into that of ``p0/2 - 40/h``.  The
blend start is root-found so that q lands exactly on ``p0/2 - 40/h`` at
``T2``.

Near ``T2`` the two sides of the crossing agree to roughly ``exp(-2 T2)``
while the individual terms are of size ``exp(-T2)``, far below double
precision, so the bridge is evaluated with mpmath.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy.optimize import brentq

from . import smooth
from .config import ConfigError
from .profile import RadialProfile, sech2

THETA0 = 0.5


def _S(x):
    x = min(max(x, mp.mpf(0)), mp.mpf(1))
    return x**3 * (x * (6 * x - 15) + 10)


class QFunction:
    def __init__(self, prof: RadialProfile):
        cfg = prof.cfg
        self.prof = prof
        self.L = 2.0 * cfg.smoothing_width
        self.a = cfg.q_a
        # T0: p0 h > 240 and sqrt(h) > 80 beyond it.
        r_sqrt = math.acosh(80.0)
        r_lo = cfg.interval_bounds[0]
        hi = r_lo + 1.0
        while float(prof.y(np.array(hi))[0]) <= 240.0:
            hi = 2.0 * hi
            if hi > 300.0:
                raise ConfigError("p0*h never exceeds 240 below r = 300; T0 cannot be placed")
        r_y = brentq(lambda r: float(prof.y(np.array(r))[0]) - 240.0, r_lo, hi, xtol=1e-12)
        self.T0 = max(r_sqrt, r_y)
        # T1: beyond T0 and where s + ell(r) >= 4 for all s >= a - 1.
        need_ell = 4.0 - (self.a - 1.0)
        if cfg.T1 is not None:
            T1 = float(cfg.T1)
            if T1 <= self.T0:
                raise ConfigError(f"T1 = {T1} must exceed T0 = {self.T0:.6g}")
        else:
            T1 = self.T0 + 1.0
            if float(prof.ell(np.array(T1))) < need_ell:
                lam_r = float(prof.ell_inv(np.array(need_ell)))
                T1 = max(T1, lam_r + 1.0)
        if float(prof.ell(np.array(T1))) < need_ell:
            raise ConfigError(
                f"ell(T1) = {float(prof.ell(np.array(T1))):.4g} < {need_ell:.4g}: p = p0/2 fails for s >= a-1"
            )
        if 3.0 * T1 > 330.0:
            raise ConfigError("T1 too large: the bridge would need h beyond double range")
        self.T1 = T1
        # T2 ~ 3 T1 and relative margins near T2 are ~exp(-2 T2).
        self.dps = int(7.0 * T1 / math.log(10.0)) + 40
        self._built = False
        self._cfg_T2 = cfg.T2

    def _ensure_bridge(self):
        if self._built:
            return
        with mp.workdps(self.dps):
            self._build_bridge()
        self._built = True
        if self._cfg_T2 is not None and abs(self._cfg_T2 - self.T2) > 1e-6 * self.T2:
            raise ConfigError(
                f"configured T2 = {self._cfg_T2} disagrees with the constructed T2 = {self.T2:.10g}"
            )

    @property
    def T2(self) -> float:
        self._ensure_bridge()
        return float(self._T2)

    @property
    def Ta(self) -> float:
        self._ensure_bridge()
        return float(self._Ta)

    # -- mpmath pieces --------------------------------------------------------
    def _theta(self, r):
        return THETA0 * _S((r - self.T1) / self.L)

    @staticmethod
    def _qa(r):
        return -mp.sinh(r) / mp.cosh(r) ** 2

    @staticmethod
    def _qa1(r):
        return (mp.sinh(r) ** 2 - 1) / mp.cosh(r) ** 3

    @staticmethod
    def _G(r):
        return mp.sech(r) * mp.tanh(r) + mp.atan(mp.sinh(r))

    def _K_ramp(self, r):
        # K only has to be accurate relative to itself (its size is ~exp(-3r)
        # and it is never cancelled against), so a short precision suffices.
        T1 = mp.mpf(self.T1)
        with mp.workdps(30):
            val = mp.quad(lambda u: self._theta(u) * 2 * mp.sech(u) ** 3, [T1, mp.mpf(r)])
        return +val

    def _K(self, r):
        T1, L = mp.mpf(self.T1), mp.mpf(self.L)
        if r <= T1:
            return mp.mpf(0)
        if r <= T1 + L:
            return self._K_ramp(r)
        return self._KL + THETA0 * (self._G(r) - self._G(T1 + L))

    def _qc(self, r):
        return self._qa(r) + self._K(r)

    def _qc1(self, r):
        return self._qa1(r) + self._theta(r) * 2 * mp.sech(r) ** 3

    def _y(self, r):
        y, y1, _ = self.prof.y(np.array(float(r)))
        return mp.mpf(float(y)), mp.mpf(float(y1))

    def _qb(self, r):
        y, _ = self._y(r)
        hh = mp.cosh(r) ** 2
        return (y / 2 - 40) / hh

    def _qb1(self, r):
        y, y1 = self._y(r)
        hh = mp.cosh(r) ** 2
        h1 = mp.sinh(2 * r)
        p01 = (y1 - y * h1 / hh) / hh
        return p01 / 2 + 40 * h1 / hh**2

    def _blend_slope(self, r, Ta):
        w = _S((r - Ta) / self.L)
        return (1 - w) * self._qc1(r) + w * self._qb1(r)

    def _end_gap(self, Ta):
        Ta = mp.mpf(Ta)
        qe = self._qc(Ta) + mp.quad(lambda u: self._blend_slope(u, Ta), [Ta, Ta + self.L])
        return qe - self._qb(Ta + self.L)

    def _build_bridge(self):
        T1, L = mp.mpf(self.T1), mp.mpf(self.L)
        self._KL = self._K_ramp(T1 + L)
        # crossing of q_c with q_b
        lo, hi = self.T1 + L, 3.0 * self.T1 + 10.0
        if not (self._qc(mp.mpf(lo)) < self._qb(mp.mpf(lo))):
            raise ConfigError("q candidate starts above p0/2 - 40/h")
        if not (self._qc(mp.mpf(hi)) > self._qb(mp.mpf(hi))):
            raise ConfigError("q candidate never reaches p0/2 - 40/h")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self._qc(mp.mpf(mid)) < self._qb(mp.mpf(mid)):
                lo = mid
            else:
                hi = mid
        self.r_cross = 0.5 * (lo + hi)
        # root-find the blend start so q ends exactly on p0/2 - 40/h
        a, b = self.r_cross - 4.0 * self.L, self.r_cross + self.L
        fa, fb = self._end_gap(a), self._end_gap(b)
        if not (fa < 0 < fb):
            raise ConfigError("could not bracket the q blend start")
        # q_b is only known to double precision relative to itself, so the end
        # gap can be driven to ~1e-13 * |q_b|; it is nearly linear in the
        # blend start, and a few secant steps from the bracket suffice.
        x0, x1 = mp.mpf(a), mp.mpf(b)
        f0, f1 = fa, fb
        scale = abs(self._qb(x1 + L))
        for _ in range(30):
            if abs(f1) <= 1e-13 * scale or f1 == f0:
                break
            x0, x1, f0 = x1, x1 - f1 * (x1 - x0) / (f1 - f0), f1
            f1 = self._end_gap(x1)
        if abs(f1) > 1e-10 * scale:
            raise ConfigError("q blend start did not converge")
        self.end_gap = float(f1 / scale)
        Ta = x1
        self._Ta = Ta
        self._T2 = Ta + L
        self._q_Ta = self._qc(Ta)
        self._Qint_T1 = mp.sech(T1) - 1

    # -- mp scalar evaluators -------------------------------------------------
    def q_mp(self, r):
        r = mp.mpf(r)
        if r <= self.T1:
            return self._qa(r)
        self._ensure_bridge()
        if r <= self._Ta:
            return self._qc(r)
        if r < self._T2:
            return self._q_Ta + mp.quad(lambda u: self._blend_slope(u, self._Ta), [self._Ta, r])
        return self._qb(r)

    def q1_mp(self, r):
        r = mp.mpf(r)
        if r <= self.T1:
            return self._qa1(r)
        self._ensure_bridge()
        if r <= self._Ta:
            return self._qc1(r)
        if r < self._T2:
            return self._blend_slope(r, self._Ta)
        return self._qb1(r)

    # -- float API --------------------------------------------------------------
    def q(self, r):
        r = np.asarray(r, dtype=float)
        out = -np.sinh(np.minimum(r, 300.0)) * sech2(r)
        far = r > self.T1
        if np.any(far):
            with mp.workdps(self.dps):
                vals = [float(self.q_mp(x)) for x in np.atleast_1d(r)[np.atleast_1d(far)]]
            out = np.atleast_1d(out).astype(float)
            out[np.atleast_1d(far)] = vals
            out = out.reshape(r.shape)
        return out

    def q_d1(self, r):
        r = np.asarray(r, dtype=float)
        rc = np.minimum(r, 300.0)
        s2 = sech2(r)
        out = (np.sinh(rc) ** 2 - 1.0) * s2 * np.sqrt(s2)
        far = r > self.T1
        if np.any(far):
            with mp.workdps(self.dps):
                vals = [float(self.q1_mp(x)) for x in np.atleast_1d(r)[np.atleast_1d(far)]]
            out = np.atleast_1d(out).astype(float)
            out[np.atleast_1d(far)] = vals
            out = out.reshape(r.shape)
        return out

    def q_int(self, r):
        """int_0^r q(u) du; exactly sech(r) - 1 below T1."""
        r = np.asarray(r, dtype=float)
        if not np.all(np.isfinite(r)):
            raise ValueError("q_int needs finite radii")
        out = np.sqrt(sech2(r)) - 1.0
        far = r > self.T1
        if np.any(far):
            self._ensure_bridge()
            with mp.workdps(self.dps):
                vals = []
                for x in np.atleast_1d(r)[np.atleast_1d(far)]:
                    x = mp.mpf(float(x))
                    nodes = [mp.mpf(self.T1)] + [v for v in (self._Ta, self._T2) if v < x] + [x]
                    vals.append(float(self._Qint_T1 + mp.quad(self.q_mp, nodes)))
            out = np.atleast_1d(out).astype(float)
            out[np.atleast_1d(far)] = vals
            out = out.reshape(r.shape)
        return out

    # -- inequality margins (relative, evaluated in high precision) ------------
    def lemma_margins(self, r_values) -> dict:
        """Relative margins of the four inequalities required above T1.

        ``lower``: q - (1/sqrt h)',  ``upper``: p0/2 - 40/h - q,
        ``slope_lower``: q' + 3|q|,  ``slope_upper``: sech r - q'.
        Each is divided by the sum of absolute values of its terms.
        """
        out = {k: [] for k in ("r", "lower", "upper", "slope_lower", "slope_upper")}
        self._ensure_bridge()
        with mp.workdps(self.dps):
            for x in r_values:
                r = mp.mpf(float(x))
                q, q1 = self.q_mp(r), self.q1_mp(r)
                qa, qb = self._qa(r), self._qb(r)
                sech = mp.sech(r)
                out["r"].append(float(x))
                out["lower"].append(float((q - qa) / (abs(q) + abs(qa))))
                out["upper"].append(float((qb - q) / (abs(q) + abs(qb))))
                out["slope_lower"].append(float((q1 + 3 * abs(q)) / (abs(q1) + 3 * abs(q))))
                out["slope_upper"].append(float((sech - q1) / (sech + abs(q1))))
        return {k: np.array(v) for k, v in out.items()}
