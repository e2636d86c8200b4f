"""The warp function g(r, s) and everything derived from it.

``g`` solves the transport equation ``g_s = p h g_r`` with initial profile
``g0`` on the region ``s + ell(r) <= 0`` where ``p`` vanishes.  Along the
backward characteristics of ``-(ph) d/dr + d/ds`` the value of ``g`` is
constant, so ``g(r, s) = g0(f(r, s))`` with ``f`` the radius at which the
characteristic through ``(r, s)`` enters that region.

Numerically we never form ``g`` itself beyond the collar: ``t = log g`` and
``T = t_r`` overflow double precision a few units away from the axis.  The
evaluators therefore work with ``t``, ``log T``, ``1/T`` and ``a/T`` where
``a = d/dr log T``; downstream code (curvature, SDE coefficients) is written
in those variables.

Characteristics are computed three ways:

* ``r <= 2`` or ``s + ell(r) <= 0``: frozen, ``f = r``.
* ``r >= 3``: along the characteristic ``ell' p0 h = eps``, so in the
  variable ``u = s + ell`` the shift of ``ell`` is an explicit integral of
  ``eps xi / (1 - eps xi)``; this gives ``f``, ``f_r`` and ``d/dr log f_r``
  in closed form.
* ``2 < r < 3``: a vectorised ODE for ``lambda = ell(gamma)`` in ``u`` plus
  its variational equation.

``solve_characteristic`` is the direct route: it integrates the curve
``d gamma / d sigma = -(ph)(gamma, sigma)`` backward with an event at
``sigma + ell(gamma) = 0`` together with the variational equation for
``f_r``, and is used as an independent check of the fast paths.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import smooth
from .config import COLLAR_RADIUS, ConfigError, ManifoldConfig
from .profile import RadialProfile, h, h_d1, h_d2, hlog_d1, log_h, sech2
from .qfunc import QFunction

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_LOG2 = math.log(2.0)


def _log_sinh2x(x):
    """log sinh(2x) for x > 0, stable for large x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        big = x > 10.0
        xs = np.where(big, 1.0, x)
        small = np.log(np.sinh(2.0 * xs))
        large = 2.0 * x - _LOG2 + np.log1p(-np.exp(-4.0 * np.where(big, x, 10.0)))
    return np.where(big, large, small)


@dataclass
class CharData:
    """Characteristic data at a batch of points (flattened arrays)."""

    f: np.ndarray
    log_fr: np.ndarray  # log f_r
    dlog_fr: np.ndarray  # d/dr log f_r (nan when not requested)
    log_yf: np.ndarray  # log (p0 h)(f) (-inf when f <= 2)
    u0: np.ndarray  # s + ell(r)
    kind: np.ndarray  # 0 frozen, 1 closed form, 2 band ODE


@dataclass
class CharacteristicSolution:
    """Result of the direct backward integration from one point."""

    r0: float
    s0: float
    f: float
    f_r: float
    f_r_oracle: float
    sigma_cross: float
    frozen: bool
    nfev: int = 0
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))


class CharacteristicCache:
    """Write-once map (r, s) -> CharacteristicSolution.

    Readers never see a partially written entry: values are immutable and
    inserted under a lock with ``setdefault`` semantics, so concurrent
    writers of the same key agree on the first stored value.
    """

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()

    def get(self, key):
        return self._data.get(key)

    def put(self, key, value):
        with self._lock:
            return self._data.setdefault(key, value)

    def __len__(self):
        return len(self._data)


@dataclass
class LocalGeometry:
    """Pointwise quantities needed by curvature, SDE and estimate code.

    All arrays share the broadcast shape of the inputs.  ``T`` may be inf;
    ``iT = 1/T`` and ``aT = a/T`` are always finite.
    """

    r: np.ndarray
    s: np.ndarray
    h: np.ndarray
    h1: np.ndarray  # h'
    hl: np.ndarray  # h'/h
    p0: np.ndarray
    xi: np.ndarray
    p: np.ndarray
    p_s: np.ndarray
    P: np.ndarray  # p h
    P_r: np.ndarray  # (p h)_r
    t: np.ndarray  # log g
    logT: np.ndarray
    iT: np.ndarray
    aT: np.ndarray
    f: np.ndarray
    log_fr: np.ndarray
    dlog_fr: np.ndarray

    @property
    def T(self):
        with np.errstate(over="ignore"):
            return np.exp(self.logT)

    @property
    def a(self):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(self.aT == 0.0, 0.0, self.aT * self.T)

    @property
    def m2(self):
        """m^2 = 4 / (h'/h + T), written with 1/T."""
        return 4.0 * self.iT / (1.0 + self.hl * self.iT)

    @property
    def log_m(self):
        return 0.5 * (_LOG2 * 2.0 - self.logT - np.log1p(self.hl * self.iT))

    @property
    def s_drift(self):
        """Drift of S in the time-changed scale: g_s / (g h' + g_r h)."""
        return self.p / (1.0 + self.hl * self.iT)


class WarpField:
    """Evaluators for h, p0, ell, xi, chi, p, q, f and g with derivatives.

    The object is immutable after construction apart from the optional
    write-once characteristic cache, so it can be shared between threads.
    """

    def __init__(self, cfg: ManifoldConfig | None = None, *, cache: bool = False):
        self.cfg = cfg if cfg is not None else ManifoldConfig()
        margins = smooth.xi_constraint_margins()
        if min(margins.values()) <= 0.0:
            raise ConfigError(f"cutoff xi violates its shape constraints: {margins}")
        self.profile = RadialProfile(self.cfg)
        self.qfunc = QFunction(self.profile)
        self.eps = self.cfg.epsilon
        self.d1 = self.cfg.d1_eff
        self.d2 = self.cfg.d2_eff
        self.log_d2 = math.log(self.d2)
        self.delta = self.cfg.delta
        self._cache = CharacteristicCache() if cache else None
        e = self.eps
        self._phi_slope = 0.5 * e / (1.0 - 0.5 * e)
        self._phi4 = float(self._phi_core(np.array([smooth.XI_SUPPORT]))[0])

    # -- simple radial pieces ---------------------------------------------------
    h = staticmethod(h)
    h_r = staticmethod(h_d1)
    h_rr = staticmethod(h_d2)

    def p0(self, r):
        return self.profile.p0(r)

    def p0_r(self, r):
        return self.profile.p0_derivs(r)[1]

    def ell(self, r):
        return self.profile.ell(r)

    def ell_r(self, r):
        return self.profile.ell_derivs(r)[0]

    xi = staticmethod(smooth.xi)
    xi_d1 = staticmethod(smooth.xi_d1)
    xi_d2 = staticmethod(smooth.xi_d2)

    def chi(self, r, s):
        return smooth.xi(np.asarray(s, dtype=float) + self.ell(r))

    def p(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        return self.chi(r, s) * self.p0(r)

    def q(self, r):
        return self.qfunc.q(r)

    def q_r(self, r):
        return self.qfunc.q_d1(r)

    def q_int(self, r):
        return self.qfunc.q_int(r)

    # -- initial profile g0 through t0 = log g0 ------------------------------------
    def t0_parts(self, x):
        """Return (t0, log t0', t0''/t0') at radius x (vectorised, x >= 0).

        Below 1/10 t0 = 2 log sinh x; beyond 1/10 + delta t0 = d1 sinh^2 x +
        log d2; in between the two are blended with the quintic step.
        """
        x = np.asarray(x, dtype=float)
        r0, de, d1, ld2 = COLLAR_RADIUS, self.delta, self.d1, self.log_d2
        t0 = np.empty_like(x)
        lt1 = np.empty_like(x)
        k2 = np.empty_like(x)
        inner = x < r0
        outer = x >= r0 + de
        mid = ~inner & ~outer
        if np.any(inner):
            xi_ = np.maximum(x[inner], 1e-300)
            t0[inner] = 2.0 * np.log(np.sinh(xi_))
            lt1[inner] = _LOG2 + np.log(np.cosh(xi_)) - np.log(np.sinh(xi_))
            k2[inner] = -2.0 / np.sinh(2.0 * xi_)
        if np.any(outer):
            xo = x[outer]
            with np.errstate(over="ignore"):
                t0[outer] = d1 * np.sinh(xo) ** 2 + ld2
            lt1[outer] = math.log(d1) + _log_sinh2x(xo)
            with np.errstate(over="ignore", invalid="ignore"):
                k2[outer] = np.where(xo > 20.0, 2.0, 2.0 / np.tanh(2.0 * np.minimum(xo, 20.0)))
        if np.any(mid):
            xm = x[mid]
            A, A1, A2 = 2.0 * np.log(np.sinh(xm)), 2.0 / np.tanh(xm), -2.0 / np.sinh(xm) ** 2
            B, B1, B2 = d1 * np.sinh(xm) ** 2 + ld2, d1 * np.sinh(2 * xm), 2.0 * d1 * np.cosh(2 * xm)
            z = (xm - r0) / de
            w, w1, w2 = smooth.step(z), smooth.step_d1(z) / de, smooth.step_d2(z) / de**2
            v0 = (1 - w) * A + w * B
            v1 = (1 - w) * A1 + w * B1 + w1 * (B - A)
            v2 = (1 - w) * A2 + w * B2 + 2.0 * w1 * (B1 - A1) + w2 * (B - A)
            t0[mid], lt1[mid], k2[mid] = v0, np.log(v1), v2 / v1
        return t0, lt1, k2

    def g0(self, x):
        with np.errstate(over="ignore"):
            return np.exp(self.t0_parts(x)[0])

    # -- u-parameterised characteristic integral --------------------------------
    def _phi_core(self, u):
        """int_0^u eps xi / (1 - eps xi) for 0 <= u <= 4 (Gauss-Legendre)."""
        u = np.asarray(u, dtype=float)
        half = 0.5 * u[..., None]
        x = half * (_GL_X + 1.0)
        xv = self.eps * smooth.xi(x)
        return np.sum(_GL_W * xv / (1.0 - xv), axis=-1) * half[..., 0]

    def phi(self, u):
        """Shift of ell along a characteristic started at u = s + ell(r) >= 0."""
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        cap = smooth.XI_SUPPORT
        core = self._phi_core(np.minimum(u, cap))
        return core + np.maximum(u - cap, 0.0) * self._phi_slope

    # -- characteristics ---------------------------------------------------------
    def _y_at(self, f, lam):
        """log y and y' at f = ell^{-1}(lam), valid also when f overflows."""
        prof = self.profile
        log_y = np.empty_like(f)
        y1 = np.empty_like(f)
        tail = lam >= prof.ell_tail_start
        if np.any(tail):
            ly, dly = prof.log_y_and_dlog_at_ell(lam[tail])
            seg = prof.last
            log_y[tail] = ly
            y1[tail] = seg.w_of_ell(lam[tail])
        rest = ~tail
        if np.any(rest):
            y, yd, _ = prof.y(f[rest])
            with np.errstate(divide="ignore"):
                log_y[rest] = np.log(y)
            y1[rest] = yd
        return log_y, y1

    def characteristic(self, r, s, deriv: bool = True) -> CharData:
        """Crossing radius f and log f_r (and d/dr log f_r) at flattened points."""
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        r = r.ravel().copy()
        s = s.ravel().copy()
        n = r.size
        eps = self.eps
        lam0 = self.ell(r)
        u0 = s + lam0
        f = r.copy()
        log_fr = np.zeros(n)
        dlog_fr = np.zeros(n) if deriv else np.full(n, np.nan)
        log_yf = np.full(n, -np.inf)
        kind = np.zeros(n, dtype=np.int8)
        frozen = (r <= 2.0) | (u0 <= 0.0)
        closed = ~frozen & (r >= 3.0)
        band = ~frozen & ~closed
        kind[closed] = 1
        kind[band] = 2
        prof = self.profile
        if np.any(r > 2.0):
            y_all = prof.y(np.where(r > 2.0, r, 3.0))
        if np.any(frozen):
            fr = frozen & (r > 2.0)
            if np.any(fr):
                log_yf[fr] = np.log(y_all[0][fr])
        if np.any(closed):
            idx = np.flatnonzero(closed)
            uu = u0[idx]
            lam_end = lam0[idx] + self.phi(uu)
            with np.errstate(over="ignore"):
                fc = prof.ell_inv(lam_end)
            ly_f, y1_f = self._y_at(fc, lam_end)
            y0, y01 = y_all[0][idx], y_all[1][idx]
            om = 1.0 - eps * smooth.xi(uu)
            f[idx] = fc
            log_yf[idx] = ly_f
            log_fr[idx] = ly_f - np.log(y0) - np.log(om)
            if deriv:
                ell1 = eps / y0
                dlog_fr[idx] = y1_f / (y0 * om) - y01 / y0 + eps * smooth.xi_d1(uu) * ell1 / om
        if np.any(band):
            idx = np.flatnonzero(band)
            fb, lfr, lyf = self._band_solve(r[idx], u0[idx], lam0[idx])
            f[idx], log_fr[idx], log_yf[idx] = fb, lfr, lyf
            if deriv:
                dlog_fr[idx] = self._band_dlog_fr(r[idx], s[idx])
        return CharData(f=f, log_fr=log_fr, dlog_fr=dlog_fr, log_yf=log_yf, u0=u0, kind=kind)

    def _band_solve(self, r0, u0, lam0, rtol=1e-12, atol=1e-14):
        """Characteristics starting in the ramp 2 < r < 3, in the u variable."""
        prof = self.profile
        eps, p03 = self.eps, self.cfg.p0_at_3
        ell3 = prof.ell3
        n = r0.size

        def rhs(tau, z):
            lam, _ = z[:n], z[n:]
            u = u0 * (1.0 - tau)
            xv = smooth.xi(u)
            in_ramp = lam < ell3
            gam = np.where(in_ramp, prof.segments[1].ell_inv(np.minimum(lam, ell3)), 3.0)
            S, S1 = smooth.step(gam - 2.0), smooth.step_d1(gam - 2.0)
            H = np.where(in_ramp, eps * S * S, eps)
            den = 1.0 - H * xv
            G = H * xv / den
            G_lam = np.where(in_ramp, xv / den**2 * 2.0 * S1 * p03 * h(gam), 0.0)
            return np.concatenate([u0 * G, u0 * G_lam])

        z0 = np.concatenate([lam0, np.zeros(n)])
        sol = solve_ivp(rhs, (0.0, 1.0), z0, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise FloatingPointError(f"band characteristic solve failed: {sol.message}")
        lam_end, logJ = sol.y[:n, -1], sol.y[n:, -1]
        with np.errstate(over="ignore"):
            f = prof.ell_inv(lam_end)
        log_yf, _ = self._y_at(f, lam_end)
        S0 = smooth.step(r0 - 2.0)
        H0 = eps * S0 * S0
        log_ell1_r0 = math.log(eps / p03) + np.log(S0) + np.log(sech2(r0))
        beyond = f >= 3.0
        Sf = smooth.step(np.minimum(f, 3.0) - 2.0)
        with np.errstate(divide="ignore"):
            log_ell1_f = np.where(beyond, math.log(eps) - log_yf, math.log(eps / p03) + np.log(Sf) + np.log(sech2(np.minimum(f, 3.0))))
        log_fr = logJ + log_ell1_r0 - log_ell1_f - np.log1p(-H0 * smooth.xi(u0))
        return f, log_fr, log_yf

    def _band_dlog_fr(self, r, s, step=1e-3):
        """Richardson-extrapolated central difference of log f_r in r."""

        def lfr(x):
            return self.characteristic(x, s, deriv=False).log_fr

        d_h = (lfr(r + step) - lfr(r - step)) / (2 * step)
        d_h2 = (lfr(r + step / 2) - lfr(r - step / 2)) / step
        return (4.0 * d_h2 - d_h) / 3.0

    # -- g and its first partials -----------------------------------------------
    def f(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        return self.characteristic(r, s, deriv=False).f.reshape(r.shape)

    def f_r(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        with np.errstate(over="ignore"):
            return np.exp(self.characteristic(r, s, deriv=False).log_fr).reshape(r.shape)

    def log_g(self, r, s):
        """t = log g; exactly 2 log sinh r below the collar radius."""
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        cd = self.characteristic(r, s, deriv=False)
        return self.t0_parts(cd.f)[0].reshape(r.shape)

    def g(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        out = np.empty(r.shape)
        inner = r < COLLAR_RADIUS
        out[inner] = np.sinh(r[inner]) ** 2
        if np.any(~inner):
            with np.errstate(over="ignore"):
                out[~inner] = np.exp(self.log_g(r[~inner], s[~inner]))
        return out

    def g_partials(self, r, s):
        """(g, g_r, g_s); overflow to inf where g itself is beyond range."""
        geo = self.geometry(r, s, deriv=False)
        with np.errstate(over="ignore", invalid="ignore"):
            g = self.g(r, s)
            g_r = np.exp(geo.t + geo.logT)
            g_r = np.where(np.asarray(r) < COLLAR_RADIUS, np.sinh(2.0 * geo.r), g_r)
            g_s = np.where(geo.P > 0.0, geo.P * g_r, 0.0)
        return g, g_r, g_s

    # -- bundle --------------------------------------------------------------------
    def geometry(self, r, s, deriv: bool = True) -> LocalGeometry:
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        shape = r.shape
        rf, sf = r.ravel(), s.ravel()
        cd = self.characteristic(rf, sf, deriv=deriv)
        t0, lt1, k2 = self.t0_parts(cd.f)
        logT = lt1 + cd.log_fr
        with np.errstate(over="ignore"):
            iT = np.exp(-logT)
            fr = np.exp(cd.log_fr)
        # a = k2(f) f_r + dlog_fr;  a/T = k2(f)/t0'(f) + dlog_fr/T
        with np.errstate(invalid="ignore", over="ignore"):
            aT = k2 * np.exp(-lt1) + cd.dlog_fr * iT
        aT = np.where(np.isfinite(fr) | (iT > 0), aT, 0.0)
        y, y1, _ = self.profile.y(rf)
        hh = h(rf)
        s2 = sech2(rf)
        u = cd.u0
        xv, xv1 = smooth.xi(u), smooth.xi_d1(u)
        p0 = y * s2
        H = self.profile.H(rf)
        P = xv * y
        P_r = xv1 * H + xv * y1
        geo = LocalGeometry(
            r=rf, s=sf, h=hh, h1=h_d1(rf), hl=hlog_d1(rf), p0=p0, xi=xv,
            p=xv * p0, p_s=xv1 * p0, P=P, P_r=P_r, t=t0, logT=logT, iT=iT,
            aT=aT, f=cd.f, log_fr=cd.log_fr, dlog_fr=cd.dlog_fr,
        )
        for name in geo.__dataclass_fields__:
            setattr(geo, name, getattr(geo, name).reshape(shape))
        return geo

    # -- direct integration of one characteristic ---------------------------------
    def solve_characteristic(self, r0: float, s0: float, *, rtol: float = 1e-11,
                             atol: float = 1e-13, keep_path: bool = False) -> CharacteristicSolution:
        """Integrate d gamma/d sigma = -(ph)(gamma, sigma) backward from (r0, s0).

        The variational equation dY/d sigma = -(ph)_r Y is carried along, so
        Y at the crossing is f_r.  The integral of eps xi' along the path is
        also carried; for r0 >= 3 it gives the closed-form value of f_r,
        ``(p0h)(f)/(p0h)(r0) * exp(int eps xi')``, used as an oracle.
        """
        r0, s0 = float(r0), float(s0)
        if not r0 > 0.0:
            raise ValueError("r0 must be positive")
        key = (r0, s0)
        if self._cache is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        prof = self.profile
        eps = self.eps
        lam0 = float(self.ell(r0))
        if r0 <= 2.0 or s0 + lam0 <= 0.0:
            sol = CharacteristicSolution(r0, s0, r0, 1.0, 1.0, s0, True)
            return self._cache.put(key, sol) if self._cache is not None else sol

        def rhs(sig, z):
            g_, Y = z[0], z[1]
            ga = np.array([g_])
            u = sig + float(prof.ell(ga)[0])
            y, y1, _ = prof.y(ga)
            xv, xv1 = float(smooth.xi(u)), float(smooth.xi_d1(u))
            H = float(prof.H(ga)[0])
            P = xv * float(y[0])
            P_r = xv1 * H + xv * float(y1[0])
            return [-P, -P_r * Y, -eps * xv1]

        def event(sig, z):
            return sig + float(prof.ell(np.array([z[0]]))[0])

        event.terminal = True
        event.direction = -1
        budget = self.cfg.s_budget
        res = solve_ivp(rhs, (s0, s0 - budget), [r0, 1.0, 0.0], method="RK45", rtol=rtol,
                        atol=atol, events=event, dense_output=False)
        if res.status != 1 or len(res.t_events[0]) == 0:
            raise FloatingPointError(
                f"characteristic from ({r0}, {s0}) did not reach s + ell = 0 within "
                f"an s-travel of {budget}"
            )
        sig_c = float(res.t_events[0][0])
        f, Y, I = (float(v) for v in res.y_events[0][0])
        y_f = float(prof.y(np.array([f]))[0][0])
        y_0 = float(prof.y(np.array([r0]))[0][0])
        oracle = y_f / y_0 * math.exp(I) if r0 >= 3.0 else math.nan
        sol = CharacteristicSolution(
            r0, s0, f, Y, oracle, sig_c, False, int(res.nfev),
            res.t.copy() if keep_path else np.zeros(0),
            res.y[0].copy() if keep_path else np.zeros(0),
        )
        return self._cache.put(key, sol) if self._cache is not None else sol

    # -- helpers for other modules -----------------------------------------------
    def collar_exact(self, r) -> np.ndarray:
        return np.asarray(r, dtype=float) < COLLAR_RADIUS


__all__ = [
    "CharData",
    "CharacteristicCache",
    "CharacteristicSolution",
    "LocalGeometry",
    "WarpField",
    "log_h",
]
