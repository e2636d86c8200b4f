"""Quintic smoothstep blends and the cutoff function xi.

All joins in the construction use the same C^2 quintic
``S(x) = 6x^5 - 15x^4 + 10x^3`` clipped to [0, 1]. Its first and second
derivatives vanish at both ends, so gluing two smooth pieces with it keeps
the result C^2.
"""

from __future__ import annotations

import numpy as np

#: Support length and plateau height of the cutoff ``xi``.
XI_SUPPORT = 4.0
XI_HEIGHT = 0.5


def step(x):
    """Quintic smoothstep, 0 for x <= 0 and 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def step_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.where(inside, x, 0.0)
    return np.where(inside, 30.0 * xc * xc * (1.0 - xc) ** 2, 0.0)


def step_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.where(inside, x, 0.0)
    return np.where(inside, 60.0 * xc * (1.0 - xc) * (1.0 - 2.0 * xc), 0.0)


def step_d3(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.where(inside, x, 0.0)
    return np.where(inside, 60.0 * (1.0 - 6.0 * xc + 6.0 * xc * xc), 0.0)


def xi(y):
    """Cutoff: 0 for y < 0, 1/2 for y > 4, monotone C^2 in between."""
    return XI_HEIGHT * step(np.asarray(y, dtype=float) / XI_SUPPORT)


def xi_d1(y):
    return XI_HEIGHT / XI_SUPPORT * step_d1(np.asarray(y, dtype=float) / XI_SUPPORT)


def xi_d2(y):
    return XI_HEIGHT / XI_SUPPORT**2 * step_d2(np.asarray(y, dtype=float) / XI_SUPPORT)


def xi_d3(y):
    return XI_HEIGHT / XI_SUPPORT**3 * step_d3(np.asarray(y, dtype=float) / XI_SUPPORT)


def xi_constraint_margins(n: int = 20001) -> dict:
    """Dense-sample margins of the three shape constraints on (0, 4).

    Returns the minimum over the sample of ``1/2 - xi'``, ``1/2 - |xi''|``
    and ``xi'' + xi``; all three must be positive.
    """
    y = np.linspace(0.0, XI_SUPPORT, n)[1:-1]
    return {
        "half_minus_d1": float(np.min(0.5 - xi_d1(y))),
        "half_minus_abs_d2": float(np.min(0.5 - np.abs(xi_d2(y)))),
        "d2_plus_xi": float(np.min(xi_d2(y) + xi(y))),
    }
