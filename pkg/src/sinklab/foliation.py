"""Deterministic curves of the drift fields and the straightening map.

``V_d = d/dr + g_s/(g h' + h g_r) d/ds`` is the drift of the time-changed
motion with the noise removed; ``V = d/dr + q d/ds`` has the explicit
trajectories ``s(r) = s0 + int_0^r q`` and is straightened by

    Phi(r, s) = (r, s - int_0^r q).

A trajectory gets a divergence certificate when ``s`` exceeds
``s0 + s_target`` before ``r_max``.  On a truncated construction this can
fail; :func:`divergence_budget` reports the largest rise in ``s`` that the
field can produce on ``[0, r_max]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .warp import WarpField


@dataclass
class Trajectory:
    """Sampled curve ``r -> (r, s(r))`` started at ``(0, s0)``."""

    field: str
    s0: float
    r: np.ndarray
    s: np.ndarray
    s_target: float
    certificate: float | None  # first r with s > s0 + s_target, or None
    r_max: float

    @property
    def diverged(self) -> bool:
        return self.certificate is not None

    def to_rows(self):
        return [(self.s0, float(a), float(b)) for a, b in zip(self.r, self.s)]


def phi(warp: WarpField, r, s):
    """``(r, s) -> (r, z)`` with ``z = s - int_0^r q``."""
    r = np.asarray(r, dtype=float)
    return r, np.asarray(s, dtype=float) - warp.q_int(r)


def phi_inverse(warp: WarpField, r, z):
    r = np.asarray(r, dtype=float)
    return r, np.asarray(z, dtype=float) + warp.q_int(r)


def vd_slope(warp: WarpField, r, s):
    """ds/dr along ``V_d``: ``g_s/(g h' + h g_r) = p / (1 + (h'/h)/T)``."""
    return warp.geometry(r, s, deriv=False).s_drift


def _check_rmax(warp, r_max):
    r_max = warp.cfg.r_max if r_max is None else float(r_max)
    if not 0.0 < r_max <= warp.cfg.r_max:
        raise ValueError(f"r_max must lie in (0, {warp.cfg.r_max}]")
    return r_max


def integrate_Vd(warp: WarpField, s0: float, r_max: float | None = None, *, s_target: float = 10.0,
                 n_samples: int = 401, rtol: float = 1e-10, atol: float = 1e-13) -> Trajectory:
    """Integrate ``ds/dr = p/(1 + (h'/h)/T)`` from ``(0, s0)``.

    ``p`` vanishes for ``r <= 2``, so the curve is exactly horizontal there
    and the solver starts at ``r = 2``.
    """
    r_max = _check_rmax(warp, r_max)
    s0 = float(s0)
    grid = np.linspace(0.0, r_max, int(n_samples))
    s = np.full_like(grid, s0)
    cert = None
    if r_max > 2.0:
        lvl = s0 + s_target

        def rhs(r, y):
            return [float(vd_slope(warp, np.array([r]), np.array([y[0]]))[0])]

        def hit(r, y):
            return y[0] - lvl

        hit.terminal = True
        hit.direction = 1
        tail = grid[grid > 2.0]
        sol = solve_ivp(rhs, (2.0, r_max), [s0], method="RK45", rtol=rtol, atol=atol,
                        t_eval=tail, events=hit, dense_output=True)
        if sol.status < 0:
            raise FloatingPointError(f"V_d integration failed: {sol.message}")
        vals = sol.sol(np.minimum(tail, sol.sol.t_max))[0]
        s[grid > 2.0] = vals
        if sol.t_events[0].size:
            cert = float(sol.t_events[0][0])
    return Trajectory("vd", s0, grid, s, float(s_target), cert, r_max)


def integrate_V(warp: WarpField, s0: float, r_max: float | None = None, *, s_target: float = 10.0,
                n_samples: int = 401) -> Trajectory:
    """``s(r) = s0 + int_0^r q`` evaluated in closed form."""
    r_max = _check_rmax(warp, r_max)
    grid = np.linspace(0.0, r_max, int(n_samples))
    s = float(s0) + warp.q_int(grid)
    above = np.flatnonzero(s > float(s0) + s_target)
    cert = float(grid[above[0]]) if above.size else None
    return Trajectory("v", float(s0), grid, s, float(s_target), cert, r_max)


def divergence_budget(warp: WarpField, r_max: float | None = None) -> dict:
    """Largest possible rise of s on ``[0, r_max]`` for each field.

    Along ``V_d`` the slope is at most ``p <= p0/2``; along ``V`` the rise is
    ``max_r int_0^r q - min`` over the same range.
    """
    r_max = _check_rmax(warp, r_max)
    pts = sorted({2.0, 3.0, *[b for b in warp.cfg.interval_bounds if b < r_max], r_max})
    vd = sum(quad(lambda r: 0.5 * float(warp.p0(np.array(r))), a, b, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))
    grid = np.linspace(0.0, r_max, 2001)
    Q = warp.q_int(grid)
    return {"r_max": r_max, "vd_max_rise": vd, "v_max_rise": float(np.max(Q) - Q[0]), "v_net_rise": float(Q[-1])}


def halved_step_crossing(warp: WarpField, s0: float, r_max: float | None = None, *, s_target: float = 10.0,
                         rtol: float = 1e-10) -> tuple:
    """Certificate radius with tolerance ``rtol`` and ``rtol/32`` (oracle pair)."""
    a = integrate_Vd(warp, s0, r_max, s_target=s_target, rtol=rtol, n_samples=3)
    b = integrate_Vd(warp, s0, r_max, s_target=s_target, rtol=rtol / 32.0, atol=1e-15, n_samples=3)
    return a.certificate, b.certificate


def trajectories(warp: WarpField, field: str, s0_list, r_max: float | None = None, **kw) -> list[Trajectory]:
    if field == "vd":
        return [integrate_Vd(warp, s0, r_max, **kw) for s0 in s0_list]
    if field == "v":
        return [integrate_V(warp, s0, r_max, **kw) for s0 in s0_list]
    raise ValueError(f"unknown field {field!r}; use 'vd' or 'v'")


__all__ = [
    "Trajectory",
    "divergence_budget",
    "halved_step_crossing",
    "integrate_V",
    "integrate_Vd",
    "phi",
    "phi_inverse",
    "trajectories",
    "vd_slope",
]
