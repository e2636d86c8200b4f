"""CSV / JSON output and run manifests.

Primary outputs are deterministic: floats are written with 17 significant
digits, JSON keys are sorted, and timestamps appear only in the manifest.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


def fmt(v) -> str:
    """Decimal text for a CSV cell (floats with 17 significant digits)."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def write_csv(path: str | Path, header, rows) -> Path:
    """RFC-4180 CSV with a header row and CRLF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def columns_to_rows(columns: dict, names):
    cols = [np.asarray(columns[n]) for n in names]
    return zip(*cols)


def _default(o):
    return _clean(_plain(o))


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else repr(o)
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), default=_default, sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclasses.dataclass
class RunManifest:
    """Everything needed to reproduce one CLI invocation."""

    subcommand: str
    flags: dict
    config: dict
    config_hash: str
    master_seed: int | None = None
    outputs: list = dataclasses.field(default_factory=list)
    tool_version: str = __version__
    python: str = dataclasses.field(default_factory=platform.python_version)
    numpy: str = np.__version__
    created: str = dataclasses.field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    exit_code: int | None = None

    def add_output(self, path: str | Path) -> None:
        p = Path(path)
        self.outputs.append(dict(path=str(p), sha256=file_sha256(p)))

    def write(self, path: str | Path) -> Path:
        return write_json(path, dataclasses.asdict(self))


def manifest_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


__all__ = [
    "RunManifest",
    "columns_to_rows",
    "dumps",
    "file_sha256",
    "fmt",
    "manifest_path",
    "read_csv",
    "write_csv",
    "write_json",
]
