"""Free constants of the construction and their validation.

The configuration is a plain frozen dataclass. It can be read from and
written to YAML; unknown keys are rejected so that typos do not silently
fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """A configuration violates one of the construction's invariants."""


COLLAR_RADIUS = 0.1


@dataclass(frozen=True)
class ManifoldConfig:
    """Every free constant of the warped-product construction.

    ``d1``, ``d2`` default to the values that make ``d2 exp(d1 sinh^2 r)``
    the exact solution of the collar ODE started from ``sinh^2(1/10)``.
    ``T1`` and ``T2`` are located automatically when left as ``None``.
    ``c_n`` is derived from continuity of ``p0`` and is only accepted as
    a consistency check.
    """

    epsilon: float = 1.0 / 48.0
    interval_bounds: tuple = (5.0,)
    c_n: tuple | None = None
    d1: float | None = None
    d2: float | None = None
    delta: float = 0.01
    smoothing_width: float = 0.1
    T1: float | None = None
    T2: float | None = None
    q_a: float = 4.0
    r_floor: float = 1e-6
    p0_at_3: float = 2e-4
    r_max: float = 60.0
    s_budget: float = 1e4

    def __post_init__(self):
        object.__setattr__(self, "interval_bounds", tuple(float(b) for b in self.interval_bounds))
        if self.c_n is not None:
            object.__setattr__(self, "c_n", tuple(float(c) for c in self.c_n))
        self.validate()

    # -- derived constants -------------------------------------------------
    @property
    def d1_eff(self) -> float:
        if self.d1 is not None:
            return float(self.d1)
        return 1.0 / math.sinh(COLLAR_RADIUS) ** 2

    @property
    def d2_eff(self) -> float:
        if self.d2 is not None:
            return float(self.d2)
        return math.sinh(COLLAR_RADIUS) ** 2 * math.exp(-1.0)

    # -- validation ---------------------------------------------------------
    def validate(self) -> None:
        if not (0.0 < self.epsilon < 0.25):
            raise ConfigError(f"epsilon must lie in (0, 1/4), got {self.epsilon}")
        b = self.interval_bounds
        if len(b) == 0:
            raise ConfigError("interval_bounds must contain at least r1")
        if len(b) % 2 == 0:
            raise ConfigError(
                "interval_bounds must have odd length so that the last stretch "
                "follows y'' = 1/(2y); a final c/r stretch leaves ell bounded"
            )
        if b[0] <= 3.0:
            raise ConfigError(f"r1 must exceed 3, got {b[0]}")
        for lo, hi in zip(b[:-1], b[1:]):
            if hi - lo <= 3.0:
                raise ConfigError(f"interval gaps must exceed 3, got [{lo}, {hi}]")
        r1 = b[0]
        h1 = math.cosh(r1) ** 2
        if not (0.0 < self.p0_at_3 <= 1e-3):
            raise ConfigError("p0_at_3 must lie in (0, 1/1000]")
        if self.p0_at_3 * h1 <= 1.0:
            raise ConfigError(f"(p0 h)(r1) = {self.p0_at_3 * h1:.4g} must exceed 1")
        if r1 / h1 >= 1e-3:
            raise ConfigError(f"r1/h(r1) = {r1 / h1:.4g} must be below 1/1000")
        for name in ("delta", "r_floor", "smoothing_width", "q_a", "r_max", "s_budget"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.d1 is not None and self.d1 <= 0.0:
            raise ConfigError("d1 must be positive")
        if self.d2 is not None and self.d2 <= 0.0:
            raise ConfigError("d2 must be positive")
        if self.delta >= 0.05:
            raise ConfigError("delta must be below 0.05 so the collar join stays inside (0.1, 0.15)")
        if 2.0 * self.smoothing_width >= 1.0:
            raise ConfigError("smoothing_width must be below 1/2")
        if self.T1 is not None and self.T2 is not None and not self.T2 > self.T1 > 0.0:
            raise ConfigError("need T2 > T1 > 0")
        if self.T1 is not None and self.T1 <= 0.0:
            raise ConfigError("T1 must be positive")
        if self.c_n is not None and any(c <= 0.0 for c in self.c_n):
            raise ConfigError("c_n entries must be positive")
        if self.r_max <= b[0]:
            raise ConfigError("r_max must exceed r1")

    # -- (de)serialisation --------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["interval_bounds"] = list(self.interval_bounds)
        if self.c_n is not None:
            d["c_n"] = list(self.c_n)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "ManifoldConfig":
        return dataclasses.replace(self, **changes)


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(ManifoldConfig))


def config_from_dict(data: dict | None) -> ManifoldConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ManifoldConfig(**data)
    except TypeError as exc:  # wrong value types
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> ManifoldConfig:
    """Read a YAML config file; ``None`` gives the defaults."""
    if path is None:
        return ManifoldConfig()
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    return config_from_dict(data)


def dump_config(cfg: ManifoldConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
