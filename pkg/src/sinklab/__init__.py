"""Numerical companion for a Cartan-Hadamard manifold whose Brownian motion
has a non-trivial Poisson boundary.

The metric is ``dr^2 + h(r) ds^2 + g(r, s) da^2`` with ``h = cosh^2``.
Modules:

* :mod:`sinklab.config`, :mod:`sinklab.profile`, :mod:`sinklab.qfunc`,
  :mod:`sinklab.warp` build the warp function ``g`` and its ingredients;
* :mod:`sinklab.curvature` certifies the curvature bound on grids;
* :mod:`sinklab.sde` simulates Brownian motion in the time-changed and
  original clocks;
* :mod:`sinklab.foliation` integrates the drift fields and the
  straightening map;
* :mod:`sinklab.estimates` checks the analytic inequalities on grids;
* :mod:`sinklab.boundary` estimates the exit law and harmonic functions;
* :mod:`sinklab.cli` is the command-line entry point.
"""

from .config import ConfigError, ManifoldConfig, load_config
from .warp import WarpField

__version__ = "0.1.0"

__all__ = ["ConfigError", "ManifoldConfig", "WarpField", "__version__", "load_config"]
