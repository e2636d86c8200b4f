"""Christoffel symbols, sectional curvature and the four curvature margins.

For the metric dr^2 + h ds^2 + g da^2 the curvature operator on a plane
spanned by X, Y is a quadratic form in the Plücker coordinates
``P12 = x1 y2 - x2 y1``, ``P13``, ``P23`` with coefficients A, B, C, D.
The sectional curvature is below ``-k^2`` everywhere iff

    (1)  h''/2 - h'^2/(4h)           >= k^2 h
    (2)  g_rr/2 - g_r^2/(4g)         >= k^2 g
    (3)  g_ss/2 + g_r h'/4 - g_s^2/(4g) >= k^2 g h
    (4)  D^2 / (g^2 h) <= (B~)(C~)

with B~, C~ the left-hand sides of (2), (3) divided by g and g h, minus k^2.

Because g overflows a few units from the axis, everything is written in
terms of ``T = (log g)_r``, ``a = (log T)_r`` and ``P = p h``:

    B~ = T^2/4 + a T/2 - k^2
    C~ = p^2 h T^2/4 + c T - k^2,     c = (p_s + p a_s)/2 + h'/(4h)
    D/g = -(p h T^2/4 + d T),          d = a_s/2 - p h'/4
    a_s = P_r + P a                    (= d/ds log T)

and margin (4) ``B~ C~ - (D/g)^2/h`` is a cubic in T (the T^4 terms cancel).
Reported margins are divided by T^2 (for (2), (3)) and T^3 (for (4)); this
preserves the sign and keeps them finite when T overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import COLLAR_RADIUS
from .warp import LocalGeometry, WarpField

DEFAULT_R_RANGE = (0.12, 40.0)
DEFAULT_NR = 400
DEFAULT_S_RANGE = (-8.0, 8.0)
DEFAULT_NS = 161


@dataclass(frozen=True)
class GridSpec:
    r_min: float = DEFAULT_R_RANGE[0]
    r_max: float = DEFAULT_R_RANGE[1]
    n_r: int = DEFAULT_NR
    s_min: float = DEFAULT_S_RANGE[0]
    s_max: float = DEFAULT_S_RANGE[1]
    n_s: int = DEFAULT_NS
    log_r: bool = True

    def axes(self):
        if self.log_r:
            r = np.geomspace(self.r_min, self.r_max, self.n_r)
        else:
            r = np.linspace(self.r_min, self.r_max, self.n_r)
        return r, np.linspace(self.s_min, self.s_max, self.n_s)

    def mesh(self):
        r, s = self.axes()
        return np.meshgrid(r, s, indexing="ij")

    def to_dict(self):
        return dict(r_min=self.r_min, r_max=self.r_max, n_r=self.n_r, s_min=self.s_min,
                    s_max=self.s_max, n_s=self.n_s, log_r=self.log_r)


@dataclass
class Christoffel:
    """Nonzero Christoffel symbols (symmetric partners implied).

    ``G1_33`` and ``G2_33`` scale with g and overflow far from the axis, so
    they are also returned divided by g (``G1_33_over_g``, ``G2_33_over_g``).
    """

    G1_22: np.ndarray
    G2_12: np.ndarray
    G3_13: np.ndarray
    G1_33: np.ndarray
    G2_33: np.ndarray
    G3_23: np.ndarray
    G1_33_over_g: np.ndarray
    G2_33_over_g: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def christoffel(warp: WarpField, r, s) -> Christoffel:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("Christoffel symbols need r > 0 (the chart excludes the axis)")
    geo = warp.geometry(r, s, deriv=False)
    T = geo.T
    with np.errstate(over="ignore", invalid="ignore"):
        g = np.exp(geo.t)
        G1_33 = -0.5 * g * T
        G2_33 = np.where(geo.P > 0, -0.5 * g * geo.P * T / geo.h, 0.0)
    return Christoffel(
        G1_22=-0.5 * geo.h1,
        G2_12=0.5 * geo.hl,
        G3_13=0.5 * T,
        G1_33=G1_33,
        G2_33=G2_33,
        G3_23=0.5 * geo.P * T,
        G1_33_over_g=-0.5 * T,
        G2_33_over_g=-0.5 * geo.P * T / geo.h,
    )


# ---------------------------------------------------------------------------
# normalised coefficients
# ---------------------------------------------------------------------------
@dataclass
class Coefficients:
    """A/h and B, C, D divided by g T^2 (finite even when T overflows)."""

    A_over_h: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    D_hat: np.ndarray


def coefficients(geo: LocalGeometry) -> Coefficients:
    p, hh, hl, iT, aT = geo.p, geo.h, geo.hl, geo.iT, geo.aT
    P, P_r, p_s, h1 = geo.P, geo.P_r, geo.p_s, geo.h1
    B_hat = -0.25 - 0.5 * aT
    # C/(g T^2) = -(1/4)P^2 - (1/2)(P_s + P P_r) iT - (1/2)P^2 aT - (1/4) h' iT
    C_hat = -0.25 * P * P - 0.5 * (p_s * hh + P * P_r) * iT - 0.5 * P * P * aT - 0.25 * h1 * iT
    D_hat = -0.25 * P - 0.5 * P_r * iT - 0.5 * P * aT + 0.25 * P * hl * iT
    return Coefficients(A_over_h=-np.ones_like(hh), B_hat=B_hat, C_hat=C_hat, D_hat=D_hat)


@dataclass
class Margins:
    m1: np.ndarray  # (h''/2 - h'^2/4h)/h - k^2
    m2: np.ndarray  # B~ / T^2
    m3: np.ndarray  # C~ / T^2
    m4: np.ndarray  # (B~ C~ - (D/g)^2/h) / T^3
    e2_lemma: np.ndarray  # (g_rr/2 - g_r^2/4g - h' g_r/8) / (g T^2)
    e1_lemma: np.ndarray  # (g_r - h' g) / (g T)


def margins(geo: LocalGeometry, k: float) -> Margins:
    k2 = k * k
    p, hh, hl, h1, iT, aT = geo.p, geo.h, geo.hl, geo.h1, geo.iT, geo.aT
    P, P_r, p_s = geo.P, geo.P_r, geo.p_s
    m1 = np.full_like(hh, 1.0 - k2)
    m2 = 0.25 + 0.5 * aT - k2 * iT * iT
    c0 = 0.5 * p_s + 0.5 * p * P_r + 0.25 * hl
    d0 = 0.5 * P_r - 0.25 * p * h1
    # c = c0 + p^2 h a / 2
    m3 = 0.25 * p * p * hh + c0 * iT + 0.5 * p * p * hh * aT - k2 * iT * iT
    e3 = 0.125 * p_s - 0.125 * p * P_r + hl / 16.0 + 0.125 * p * p * h1
    pp = 1.0 + p * p * hh
    m4 = (
        e3
        + (-0.25 * k2 * pp - d0 * d0 / hh) * iT
        + aT * (0.5 * c0 - p * d0)
        - k2 * c0 * iT * iT
        - 0.5 * k2 * aT * iT * pp
        + k2 * k2 * iT**3
    )
    e2_lemma = 0.25 + 0.5 * aT - h1 * iT / 8.0
    e1_lemma = 1.0 - h1 * iT
    return Margins(m1=m1, m2=m2, m3=m3, m4=m4, e2_lemma=e2_lemma, e1_lemma=e1_lemma)


# ---------------------------------------------------------------------------
# sectional curvature
# ---------------------------------------------------------------------------
def _plucker(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    P12 = X[..., 0] * Y[..., 1] - X[..., 1] * Y[..., 0]
    P13 = X[..., 0] * Y[..., 2] - X[..., 2] * Y[..., 0]
    P23 = X[..., 1] * Y[..., 2] - X[..., 2] * Y[..., 1]
    return P12, P13, P23


def sectional_from_geometry(geo: LocalGeometry, X, Y) -> np.ndarray:
    """<R(X,Y)Y,X> / |X ^ Y|^2 using the A, B, C, D coefficients.

    Numerator and denominator are both divided by g, and the g-terms of the
    numerator by T^2; the result is multiplied back by T^2 at the end, so
    it is exact when everything is finite and -inf when the plane sees an
    overflowing curvature.
    """
    P12, P13, P23 = _plucker(X, Y)
    co = coefficients(geo)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        rho = np.exp(-geo.t)  # 1/g, 0 when g overflows
        g_part = P13 * P13 + geo.h * P23 * P23
        wedge_over_g = geo.h * P12 * P12 * rho + g_part
        g = np.exp(geo.t)
        wedge = geo.h * P12 * P12 + np.where(g_part > 0, g * g_part, 0.0)
    if np.any(~(wedge >= 1e-14)):
        raise ValueError("degenerate pair: |X ^ Y|^2 < 1e-14")
    T = geo.T
    with np.errstate(over="ignore", invalid="ignore"):
        A_term = -geo.h * P12 * P12 * rho * geo.iT * geo.iT
        num_hat = A_term + co.B_hat * P13 * P13 + co.C_hat * P23 * P23 + 2.0 * co.D_hat * P13 * P23
        finite = np.isfinite(T * T)
        direct = num_hat * (T * T) / wedge_over_g
        # g-free planes (P13 = P23 = 0) are exactly the hyperbolic-plane value
        out = np.where(g_part > 0, np.where(finite, direct, np.where(num_hat < 0, -np.inf, np.inf)), -1.0)
    return out


def sectional_curvature(warp: WarpField, r, s, X, Y) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("sectional curvature needs r > 0")
    geo = warp.geometry(r, s)
    return sectional_from_geometry(geo, X, Y)


def sectional_orthonormal(geo: LocalGeometry, U, V) -> np.ndarray:
    """Sectional curvature of the plane spanned by U, V given in the frame
    ``(d_r, d_s/sqrt h, d_a/sqrt g)``.

    With orthonormal Plücker coordinates ``Q`` the curvature is
    ``[-Q12^2 + T^2 (B^ Q13^2 + (C^/h) Q23^2 + 2 (D^/sqrt h) Q13 Q23)] / |Q|^2``,
    which stays meaningful when g overflows (``-inf`` for an overflowing
    negative value).
    """
    Q12, Q13, Q23 = _plucker(U, V)
    wedge = Q12 * Q12 + Q13 * Q13 + Q23 * Q23
    if np.any(~(wedge >= 1e-14)):
        raise ValueError("degenerate pair: |U ^ V|^2 < 1e-14")
    co = coefficients(geo)
    sh = np.sqrt(geo.h)
    bracket = co.B_hat * Q13 * Q13 + co.C_hat / geo.h * Q23 * Q23 + 2.0 * co.D_hat / sh * Q13 * Q23
    with np.errstate(over="ignore", invalid="ignore"):
        T2 = geo.T * geo.T
        val = np.where(np.isfinite(T2), T2 * bracket, np.where(bracket < 0, -np.inf, np.where(bracket > 0, np.inf, 0.0)))
    return (-Q12 * Q12 + val) / wedge


@dataclass
class PlaneSample:
    """Sectional curvatures of random planes at random points."""

    n: int
    k: float
    max_sect: float
    n_violations: int
    region: dict
    seed: int

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self):
        return dict(n=self.n, k=self.k, max_sect=self.max_sect, n_violations=self.n_violations,
                    region=self.region, seed=self.seed, passed=self.passed)


def random_planes(warp: WarpField, n: int = 10_000, k: float = 1e-3, seed: int = 0,
                  r_range=DEFAULT_R_RANGE, s_range=DEFAULT_S_RANGE) -> tuple[PlaneSample, np.ndarray]:
    """Sect at ``n`` points (r log-uniform, s uniform) with Gaussian planes in the orthonormal frame.

    Returns the summary and the array of curvatures; a violation is
    ``Sect > -k^2``.
    """
    rng = np.random.default_rng(seed)
    r = np.exp(rng.uniform(np.log(r_range[0]), np.log(r_range[1]), n))
    s = rng.uniform(s_range[0], s_range[1], n)
    U = rng.standard_normal((n, 3))
    V = rng.standard_normal((n, 3))
    K = sectional_orthonormal(warp.geometry(r, s), U, V)
    bad = ~(K <= -k * k)
    summary = PlaneSample(n, k, float(np.max(K)), int(np.count_nonzero(bad)),
                          dict(r=list(map(float, r_range)), s=list(map(float, s_range))), int(seed))
    return summary, K


def quadratic_form(geo: LocalGeometry, k: float, X, Y, Z) -> np.ndarray:
    """q(X,Y,Z) = (A+k^2h)X^2 + (B+k^2g)Y^2 + (C+k^2gh)Z^2 + 2DYZ, over g T^2."""
    co = coefficients(geo)
    k2 = k * k
    iT2 = geo.iT * geo.iT
    with np.errstate(over="ignore", invalid="ignore"):
        rho = np.exp(-geo.t)
        return (
            (-1.0 + k2) * geo.h * X * X * rho * iT2
            + (co.B_hat + k2 * iT2) * Y * Y
            + (co.C_hat + k2 * geo.h * iT2) * Z * Z
            + 2.0 * co.D_hat * Y * Z
        )


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------
@dataclass
class CurvatureReport:
    grid: dict
    k: float
    min_margin: dict
    worst_point: dict
    passed: bool
    join_min_margin: dict = field(default_factory=dict)
    n_points: int = 0
    note: str = "grid evidence only; not a proof of the bound between grid points"
    margins: Margins | None = None

    def to_dict(self):
        return dict(grid=self.grid, k=self.k, min_margin=self.min_margin,
                    worst_point=self.worst_point, passed=self.passed,
                    join_min_margin=self.join_min_margin, n_points=self.n_points, note=self.note)


def certify(warp: WarpField, grid: GridSpec | None = None, k: float = 1e-3) -> CurvatureReport:
    if not k > 0.0:
        raise ValueError("k must be positive")
    grid = grid or GridSpec()
    R, S = grid.mesh()
    geo = warp.geometry(R, S)
    M = margins(geo, k)
    names = ("m1", "m2", "m3", "m4")
    mins, worst = {}, {}
    for nm in names:
        arr = getattr(M, nm)
        i = int(np.nanargmin(arr)) if np.all(np.isfinite(arr)) else int(np.argmax(~np.isfinite(arr)))
        mins[nm] = float(arr.flat[i])
        worst[nm] = dict(r=float(R.flat[i]), s=float(S.flat[i]))
    joins = {}
    for ji in warp.profile.join_intervals():
        sel = (R >= ji.lo) & (R <= ji.hi)
        if np.any(sel):
            joins[f"{ji.kind}[{ji.lo:g},{ji.hi:g}]"] = {nm: float(np.min(getattr(M, nm)[sel])) for nm in names}
    sel = (R >= COLLAR_RADIUS) & (R <= COLLAR_RADIUS + warp.delta)
    if np.any(sel):
        joins["collar"] = {nm: float(np.min(getattr(M, nm)[sel])) for nm in names}
    finite = all(np.all(np.isfinite(getattr(M, nm))) for nm in names)
    passed = finite and all(v >= 0.0 for v in mins.values())
    return CurvatureReport(grid=grid.to_dict(), k=k, min_margin=mins, worst_point=worst,
                           passed=passed, join_min_margin=joins, n_points=int(R.size), margins=M)
