"""Command-line entry point.

Exit codes: 0 success, 1 validation error (including bad flags), 2 numerical
fault, 3 failed certification or check.  Every output file gets a
``<name>.manifest.json`` beside it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import boundary, curvature, estimates, foliation
from .config import ConfigError, ManifoldConfig, config_from_dict, load_config
from .io import RunManifest, columns_to_rows, manifest_path, write_csv, write_json
from .sde import CSV_COLUMNS, EnsembleFault, StepControl, run_ensemble
from .warp import WarpField

EXIT_OK, EXIT_INVALID, EXIT_FAULT, EXIT_FAILED = 0, 1, 2, 3

SAMPLE_COLUMNS_FULL = CSV_COLUMNS + ("s_end", "s_at_1", "r_end", "a_unwrapped", "t_end", "beta_ok", "clamps",
                                     "bracket_violations")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


# ---------------------------------------------------------------------------
# flag parsing helpers
# ---------------------------------------------------------------------------
def _floats(text: str, n: int | None = None, name: str = "value") -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValueError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ValueError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _point(text: str) -> tuple:
    r, s, a = _floats(text, 3, "point")
    if not r > 0.0:
        raise ValueError("start radius must be positive")
    return r, s, a


def _points(text: str) -> np.ndarray:
    return np.array([_point(p) for p in text.split(";") if p.strip()])


def _grid(text: str | None, default: curvature.GridSpec) -> curvature.GridSpec:
    """``r_min,r_max,n_r,s_min,s_max,n_s``."""
    if text is None:
        return default
    r0, r1, nr, s0, s1, ns = _floats(text, 6, "grid")
    if not (0.0 < r0 < r1) or not s0 <= s1 or nr < 2 or ns < 1:
        raise ValueError("grid needs 0 < r_min < r_max, s_min <= s_max, n_r >= 2, n_s >= 1")
    return curvature.GridSpec(r0, r1, int(nr), s0, s1, int(ns), default.log_r)


def effective_config(args) -> ManifoldConfig:
    """Config file values overridden by ``--set key=value`` flags."""
    base = load_config(args.config).to_dict() if args.config else {}
    for item in args.set or []:
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        base[key.strip()] = yaml.safe_load(val)
    return config_from_dict(base)


def _control(args) -> StepControl:
    kw = {}
    for flag, key in (("dt", "dt"), ("dt_max", "dt_max"), ("t_max", "t_max"), ("t_min", "t_min"),
                      ("tol_z", "tol_z"), ("window", "window"), ("batch_size", "batch_size")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    return StepControl(**kw)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_build(args, warp: WarpField, man: RunManifest) -> int:
    prof, qf = warp.profile, warp.qfunc
    rep = dict(
        config=warp.cfg.to_dict(),
        config_hash=warp.cfg.config_hash(),
        r1=warp.cfg.interval_bounds[0],
        ell_at_r_max=float(warp.ell(np.array(warp.cfg.r_max))),
        ell_tail_start=float(prof.ell_tail_start),
        join_intervals=[dict(lo=j.lo, hi=j.hi, kind=j.kind) for j in prof.join_intervals()],
        T0=qf.T0, T1=qf.T1, T2=qf.T2,
        d1=warp.d1, d2=warp.d2,
    )
    _emit_json(args.out, rep, man)
    return EXIT_OK


def cmd_certify(args, warp, man) -> int:
    grid = _grid(args.grid, curvature.GridSpec())
    rep = curvature.certify(warp, grid, args.k)
    planes, _ = curvature.random_planes(warp, args.planes, args.k, seed=args.seed,
                                        r_range=(grid.r_min, grid.r_max), s_range=(grid.s_min, grid.s_max))
    collar, kc = curvature.random_planes(warp, args.collar_planes, args.k, seed=args.seed + 1,
                                         r_range=(1e-3, 0.09), s_range=(grid.s_min, grid.s_max))
    collar_dev = float(np.max(np.abs(kc + 1.0))) if kc.size else 0.0
    out = dict(grid_report=rep.to_dict(), random_planes=planes.to_dict(),
               collar={**collar.to_dict(), "max_abs_dev_from_minus_1": collar_dev, "passed": collar_dev <= 1e-6})
    out["passed"] = bool(rep.passed and planes.passed and collar_dev <= 1e-6)
    _emit_json(args.out, out, man)
    _say(args, f"curvature margins {rep.min_margin}; random planes max {planes.max_sect:.6g}; "
               f"collar deviation {collar_dev:.3g}; passed={out['passed']}")
    return EXIT_OK if out["passed"] else EXIT_FAILED


def cmd_simulate(args, warp, man) -> int:
    if args.paths < 1:
        raise ValueError("--paths must be at least 1")
    x0 = _point(args.start)
    ctl = _control(args)
    man.master_seed = args.seed
    ens = run_ensemble(warp, x0, args.paths, ctl, args.seed, jobs=args.jobs, scale=args.scale)
    cols = SAMPLE_COLUMNS_FULL if args.full else CSV_COLUMNS
    out = Path(args.out)
    write_csv(out, cols, columns_to_rows(ens.columns, cols))
    man.add_output(out)
    _say(args, f"{args.paths} paths, converged fraction {float(ens.converged.mean()):.4f}")
    return EXIT_OK


def cmd_boundary(args, warp, man) -> int:
    if args.paths < 1:
        raise ValueError("--paths must be at least 1")
    x0 = _point(args.start)
    bins = tuple(int(b) for b in _floats(args.bins, 2, "bins"))
    man.master_seed = args.seed
    est, _ = boundary.estimate_exit_law(warp, x0, args.paths, bins, control=_control(args),
                                        master_seed=args.seed, jobs=args.jobs)
    out = Path(args.out)
    _emit_json(out, est.to_dict(), man)
    hist = out.with_suffix(".hist.csv")
    write_csv(hist, ("z_lo", "z_hi", "a_lo", "a_hi", "count"), est.histogram_rows())
    man.add_output(hist)
    _say(args, f"window cells occupied {int(np.count_nonzero(est.window_counts))}/{est.window_counts.size}; "
               f"A bins occupied {int(np.count_nonzero(est.a_counts))}/16; verdict {est.support_verdict}")
    return EXIT_FAILED if est.support_verdict is False else EXIT_OK


def cmd_harmonic(args, warp, man) -> int:
    if args.paths < 1:
        raise ValueError("--paths must be at least 1")
    fs = [boundary.parse_functional(f) for f in args.f]
    starts = _points(args.starts)
    man.master_seed = args.seed
    res = boundary.eval_harmonic(warp, fs, starts, args.paths, control=_control(args), master_seed=args.seed,
                                 jobs=args.jobs)
    rows = [row for he in res for row in he.rows()]
    out = Path(args.out)
    write_csv(out, boundary.HARMONIC_COLUMNS, rows)
    man.add_output(out)
    ok = all(bool(np.all(he.max_principle_ok())) for he in res)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_mean_value(args, warp, man) -> int:
    fs = [boundary.parse_functional(f) for f in args.f]
    x = _point(args.x)
    if args.paths_outer < 2 or args.paths_inner < 1:
        raise ValueError("need --paths-outer >= 2 and --paths-inner >= 1")
    man.master_seed = args.seed
    reps = boundary.mean_value_test(warp, fs, x, args.radius, args.paths_outer, args.paths_inner,
                                    control=_control(args), master_seed=args.seed, jobs=args.jobs)
    data = dict(reports=[r.to_dict() for r in reps], passed=all(r.passed for r in reps))
    _emit_json(args.out, data, man)
    for r in reps:
        _say(args, f"{r.f}: direct {r.direct:.6g} +- {r.direct_se:.2g}, ball {r.ball:.6g} +- {r.ball_se:.2g}, "
                   f"z = {r.z_score:.3g}")
    return EXIT_OK if data["passed"] else EXIT_FAILED


def cmd_trajectories(args, warp, man) -> int:
    s0s = _floats(args.s0, None, "s0")
    trs = foliation.trajectories(warp, args.field, s0s, args.r_max, n_samples=args.samples)
    out = Path(args.out)
    rows = [(t.field, *row) for t in trs for row in t.to_rows()]
    write_csv(out, ("field", "s0", "r", "s"), rows)
    man.add_output(out)
    summary = [dict(s0=t.s0, certificate=t.certificate, s_end=float(t.s[-1])) for t in trs]
    budget = foliation.divergence_budget(warp, args.r_max)
    write_json(out.with_suffix(".summary.json"), dict(trajectories=summary, budget=budget))
    man.add_output(out.with_suffix(".summary.json"))
    return EXIT_OK


def cmd_estimates(args, warp, man) -> int:
    grid = _grid(args.grid, estimates.estimate_grid(warp))
    rep = estimates.run_estimates(warp, args.which, grid, refine_check=args.refine)
    _emit_json(args.out, rep, man)
    failed = [r["bound_id"] for r in rep["reports"] if r["passed"] is False]
    _say(args, f"{len(rep['reports'])} checks, failed: {failed or 'none'}")
    return EXIT_OK if rep["passed"] else EXIT_FAILED


def cmd_dump_metric(args, warp, man) -> int:
    grid = _grid(args.grid, estimates.metric_grid())
    R, S = grid.mesh()
    geo = warp.geometry(R, S)
    # g overflows a double just outside the collar, so its logarithm and the
    # log of T = (log g)_r are written alongside the raw values.
    with np.errstate(over="ignore", invalid="ignore"):
        g, g_r, g_s = warp.g_partials(R, S)
    names = ("r", "s", "g", "g_r", "g_s", "p", "q", "f", "log_g", "log_T")
    cols = [geo.r, geo.s, g, g_r, g_s, geo.p, warp.q(R), geo.f, geo.t, geo.logT]
    out = Path(args.out)
    write_csv(out, names, zip(*[np.ravel(c) for c in cols]))
    man.add_output(out)
    return EXIT_OK


def _emit_json(path, obj, man: RunManifest):
    if path is None:
        raise ValueError("--out is required")
    p = write_json(path, obj)
    man.add_output(p)


def _say(args, msg: str):
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def _sim_flags(p, paths_default=1000):
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (does not change results)")
    p.add_argument("--dt", type=float, help="initial time step")
    p.add_argument("--dt-max", type=float, help="largest time step")
    p.add_argument("--t-max", type=float, help="time horizon on the simulation clock")
    p.add_argument("--t-min", type=float, help="earliest convergence time")
    p.add_argument("--tol-z", type=float, help="Z window tolerance")
    p.add_argument("--window", type=float, help="convergence window length")
    p.add_argument("--batch-size", type=int, help="paths per batch (fixes the work partition)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sinklab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="YAML config file")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    ap.add_argument("--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="construct the warp function and report derived constants")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("certify-curvature", help="grid and random-plane curvature check")
    p.add_argument("--k", type=float, default=1e-3)
    p.add_argument("--grid", help="r_min,r_max,n_r,s_min,s_max,n_s")
    p.add_argument("--planes", type=int, default=10_000)
    p.add_argument("--collar-planes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="simulate Brownian paths and write exit samples")
    p.add_argument("--start", default="1,0,0", help="r,s,a")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--scale", choices=("timechanged", "original"), default="timechanged")
    p.add_argument("--full", action="store_true", help="write diagnostic columns as well")
    p.add_argument("--out", required=True)
    _sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("boundary", help="estimate the exit law of (Z, A)")
    p.add_argument("--start", default="1,0,0")
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--bins", default="32,16", help="n_z,n_a")
    p.add_argument("--out", required=True)
    _sim_flags(p)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("harmonic", help="Monte Carlo evaluation of h(x) = E[f(Z, A)]")
    p.add_argument("--f", action="append", required=True, help="functional, e.g. sigmoid:c=1,w=0.1 (repeatable)")
    p.add_argument("--starts", required=True, help="r,s,a;r,s,a;...")
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--out", required=True)
    _sim_flags(p)
    p.set_defaults(func=cmd_harmonic)

    p = sub.add_parser("mean-value", help="ball mean-value test of harmonicity")
    p.add_argument("--f", action="append", required=True)
    p.add_argument("--x", required=True, help="r,s,a")
    p.add_argument("--radius", type=float, default=0.25)
    p.add_argument("--paths-outer", type=int, default=400)
    p.add_argument("--paths-inner", type=int, default=25)
    p.add_argument("--out", required=True)
    _sim_flags(p)
    p.set_defaults(func=cmd_mean_value)

    p = sub.add_parser("trajectories", help="integral curves of V_d or V")
    p.add_argument("--field", choices=("vd", "v"), default="vd")
    p.add_argument("--s0", default="0", help="comma-separated start heights")
    p.add_argument("--r-max", type=float)
    p.add_argument("--samples", type=int, default=401)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trajectories)

    p = sub.add_parser("estimates", help="grid checks of the analytic inequalities")
    p.add_argument("--which", choices=estimates.WHICH, default="all")
    p.add_argument("--grid", help="r_min,r_max,n_r,s_min,s_max,n_s")
    p.add_argument("--refine", action="store_true", help="also run on the 2x refined grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimates)

    p = sub.add_parser("dump-metric", help="write h, p, f, log g on a grid")
    p.add_argument("--grid", help="r_min,r_max,n_r,s_min,s_max,n_s")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_metric)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError:
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    man = None
    try:
        cfg = effective_config(args)
        man = RunManifest(args.command, flags, cfg.to_dict(), cfg.config_hash())
        warp = WarpField(cfg)
        code = args.func(args, warp, man)
    except (ValueError, ConfigError, FileNotFoundError) as exc:
        print(f"sinklab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EnsembleFault, FloatingPointError, ArithmeticError) as exc:
        print(f"sinklab: numerical fault: {exc}", file=sys.stderr)
        code = EXIT_FAULT
    if man is not None and man.outputs:
        man.exit_code = code
        man.write(manifest_path(man.outputs[0]["path"]))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
