import csv
import json
import subprocess
import sys

import pytest

from sinklab import ManifoldConfig
from sinklab.cli import EXIT_FAILED, EXIT_FAULT, EXIT_INVALID, EXIT_OK, main
from sinklab.config import dump_config
from sinklab.io import fmt, manifest_path, read_csv, write_csv

SMALL_GRID = "0.2,6,40,-3,3,9"


# -- io -----------------------------------------------------------------------------------
def test_fmt_round_trips_floats():
    for v in (0.1, 1e-300, -2.5e17, 3.0):
        assert float(fmt(v)) == v
    assert fmt(True) in ("1", "true", "True")
    assert fmt("x") == "x"


def test_csv_is_rfc4180(tmp_path):
    path = write_csv(tmp_path / "a.csv", ("name", "v"), [("a,b", 1.5), ('q"t', 2.0)])
    raw = path.read_bytes()
    assert raw.startswith(b"name,v\r\n")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["name", "v"], ["a,b", "1.5"], ['q"t', fmt(2.0)]]
    header, body = read_csv(path)
    assert header == ["name", "v"] and body[0] == ["a,b", "1.5"]


# -- exit codes -----------------------------------------------------------------------------
def test_certify_small_k_exits_zero(tmp_path):
    out = tmp_path / "cert.json"
    code = main(["--quiet", "certify-curvature", "--k", "0.001", "--grid", SMALL_GRID, "--planes", "200",
                 "--collar-planes", "50", "--out", str(out)])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["passed"]


def test_certify_large_k_exits_three(tmp_path):
    out = tmp_path / "cert.json"
    code = main(["--quiet", "certify-curvature", "--k", "10", "--grid", SMALL_GRID, "--planes", "200",
                 "--collar-planes", "50", "--out", str(out)])
    assert code == EXIT_FAILED
    man = json.loads(manifest_path(out).read_text())
    assert man["exit_code"] == EXIT_FAILED


def test_invalid_input_exits_one(tmp_path):
    out = str(tmp_path / "x.csv")
    assert main(["simulate", "--paths", "0", "--out", out]) == EXIT_INVALID
    assert main(["simulate", "--bogus-flag", "--out", out]) == EXIT_INVALID
    assert main(["simulate", "--start", "0,0,0", "--paths", "2", "--out", out]) == EXIT_INVALID
    assert main(["--set", "epsilon=0.9", "build", "--out", out]) == EXIT_INVALID
    assert main(["--config", str(tmp_path / "missing.yaml"), "build", "--out", out]) == EXIT_INVALID


def test_numerical_fault_exits_two(tmp_path):
    """In the original time scale the clock rate 1/m^2 overflows at (6, 5): every path faults."""
    out = tmp_path / "f.csv"
    code = main(["--quiet", "simulate", "--scale", "original", "--start", "6,5,0", "--paths", "3",
                 "--t-max", "5", "--out", str(out)])
    assert code == EXIT_FAULT
    assert not out.exists()


# -- manifest, determinism, config precedence ---------------------------------------------------------
def test_simulate_writes_manifest(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["--quiet", "simulate", "--start", "0.6,0,1", "--paths", "20", "--seed", "5",
                 "--out", str(out)]) == EXIT_OK
    man = json.loads(manifest_path(out).read_text())
    assert man["subcommand"] == "simulate"
    assert man["master_seed"] == 5
    assert man["exit_code"] == 0
    assert man["config"] == ManifoldConfig().to_dict()
    assert man["config_hash"] == ManifoldConfig().config_hash()
    from sinklab.io import file_sha256

    assert man["outputs"][0]["sha256"] == file_sha256(out)
    for key in ("tool_version", "python", "numpy", "created", "flags"):
        assert key in man
    header, rows = read_csv(out)
    assert len(rows) == 20 and header[0] == "path_id"


def test_csv_byte_identical_across_jobs(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["--quiet", "simulate", "--start", "0.6,0,1", "--paths", "30", "--seed", "9", "--batch-size", "8"]
    assert main(base + ["--jobs", "1", "--out", str(a)]) == EXIT_OK
    assert main(base + ["--jobs", "3", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_config_precedence(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    dump_config(ManifoldConfig(epsilon=0.02, r_max=50.0), cfg_path)
    out = tmp_path / "b.json"
    assert main(["--quiet", "--config", str(cfg_path), "--set", "epsilon=0.015", "build", "--out", str(out)]) == 0
    man = json.loads(manifest_path(out).read_text())
    assert man["config"]["epsilon"] == 0.015  # --set wins over the file
    assert man["config"]["r_max"] == 50.0  # file wins over the default
    assert man["config_hash"] == ManifoldConfig(epsilon=0.015, r_max=50.0).config_hash()


# -- remaining subcommands ----------------------------------------------------------------------------
def test_trajectories_and_dump_metric(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["--quiet", "trajectories", "--field", "v", "--s0", "0,1", "--r-max", "10", "--samples", "5",
                 "--out", str(out)]) == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["field", "s0", "r", "s"] and len(rows) == 10
    out = tmp_path / "m.csv"
    assert main(["--quiet", "dump-metric", "--grid", "0.2,3,5,0,2,3", "--out", str(out)]) == EXIT_OK
    header, rows = read_csv(out)
    assert "log_g" in header and len(rows) == 15


def test_harmonic_subcommand(tmp_path):
    out = tmp_path / "h.csv"
    code = main(["--quiet", "harmonic", "--f", "const", "--f", "sin:k=1", "--starts", "0.6,0,1;0.6,0,2",
                 "--paths", "20", "--out", str(out)])
    assert code == EXIT_OK
    header, rows = read_csv(out)
    assert header[:2] == ["f", "r"] and len(rows) == 4
    const_rows = [r for r in rows if r[0].startswith("const")]
    assert all(float(r[header.index("h")]) == 1.0 for r in const_rows)


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "sinklab.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("build", "certify-curvature", "simulate", "boundary", "harmonic", "mean-value", "trajectories",
                "estimates", "dump-metric"):
        assert sub in res.stdout


@pytest.mark.parametrize("grid", ["1,2,3", "3,1,10,0,1,3", "a,b,c,d,e,f"])
def test_bad_grid_rejected(tmp_path, grid):
    assert main(["dump-metric", "--grid", grid, "--out", str(tmp_path / "m.csv")]) == EXIT_INVALID
