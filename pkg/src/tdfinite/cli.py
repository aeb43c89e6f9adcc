"""Command line entry point.

Exit status: 0 on success, 1 when a check or bound fails, 2 on a bad
configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .bounds import BoundConstants, BoundName, projection_radius_bound, sigma_sq, theorem_bound
from .errors import ConfigError, GenerationFailure, TDFiniteError
from .fixed_point import (approximation_error_bound, kappa, td0_fixed_point,
                          td_lambda_fixed_point)
from .harness import ExperimentConfig, geometric_grid, prepare, rate_sweep, run_experiment
from .instances import GeneratorConfig
from .mrp import instance_from_json, true_value_function
from .verify import parse_suite, run_checks

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def example_path(name: str = "d1_example") -> Path:
    return Path(str(resources.files("tdfinite") / "data" / f"{name}.json"))


def _read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _emit(doc: Any, fmt: str, rows: Sequence[Sequence[Any]] | None = None) -> None:
    if fmt == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _experiment(args, default_T: int | None = None) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required", field="config")
    doc = _read_json(args.config)
    if isinstance(doc, dict) and args.seed is not None:
        doc = {**doc, "master_seed": args.seed}
    if isinstance(doc, dict) and default_T is not None:
        doc = {"T": default_T, **doc}
    return ExperimentConfig.from_json_dict(doc)


def _write(out_dir: str | None, name: str, doc: Any) -> None:
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    src = args.config if args.config is not None else example_path()
    doc = _read_json(src)
    if isinstance(doc, dict) and ("algorithm" in doc or "generator" in doc):
        inst = prepare(ExperimentConfig.from_json_dict(
            {"algorithm": "td0", "observation_model": "iid", "T": 1, "R": None,
             "schedule": {"kind": "constant", "alpha0": 1.0},
             **{k: v for k, v in doc.items() if k in ("instance", "generator")}})).instance
    else:
        inst = instance_from_json(doc)
    mrp, feats, geom = inst.mrp, inst.features, inst.geometry
    if args.lam is None:
        fp = td0_fixed_point(mrp, feats, geom)
        err_bound = approximation_error_bound("TD0", mrp, feats, geom)
    else:
        fp = td_lambda_fixed_point(mrp, feats, geom, args.lam)
        err_bound = approximation_error_bound("TDLambda", mrp, feats, geom, args.lam)
    out = {
        "theta_star": [float(x) for x in fp.theta_star],
        "residual": fp.residual,
        "value_function": [float(x) for x in true_value_function(mrp)],
        "stationary_distribution": [float(x) for x in geom.pi],
        "omega": geom.omega,
        "gamma": mrp.gamma,
        "r_max": mrp.r_max,
        "kappa": kappa(mrp.gamma, args.lam or 0.0),
        "sigma_sq": sigma_sq(mrp, feats, td0_fixed_point(mrp, feats, geom).theta_star, geom),
        "projection_radius": projection_radius_bound(mrp, geom),
        "approximation_error_bound": err_bound,
    }
    if args.lam is not None:
        out["lambda"] = args.lam
    rows = []
    for k in sorted(out):
        v = out[k]
        if isinstance(v, list):
            rows.extend((f"{k}[{i}]", x) for i, x in enumerate(v))
        else:
            rows.append((k, v))
    _emit(out, args.format, [("name", "value")] + rows)
    _write(args.out_dir, "solve.json", out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _experiment(args)
    res = run_experiment(cfg, jobs=args.jobs, out_dir=args.out_dir)
    rep = res.report.to_json_dict()
    rows = [("trial", res.report.statistic)] + [(i, float(v)) for i, v in enumerate(res.per_trial)]
    _emit(rep, args.format, rows)
    return EXIT_FAIL if res.report.satisfied is False else EXIT_OK


def cmd_sweep(args) -> int:
    if args.grid:
        try:
            grid = [int(x) for x in args.grid.split(",")]
        except ValueError:
            raise ConfigError(f"--grid must be comma-separated integers, got {args.grid!r}",
                              field="T_grid") from None
    else:
        lo, hi, points = args.grid_range
        grid = geometric_grid(int(lo), int(hi), int(points))
    # the grid supplies the horizons, so "T" may be left out
    cfg = _experiment(args, default_T=grid[0])
    res = rate_sweep(cfg, grid, jobs=args.jobs)
    doc = res.to_json_dict()
    ok = True
    if args.expect_slope is not None:
        lo, hi = args.expect_slope
        doc["expected_slope"] = [lo, hi]
        ok = lo <= res.slope <= hi
        doc["slope_in_range"] = ok
    rows = [("T", "mean", "ci95")] + list(zip(res.T_grid, res.means, res.ci95))
    _emit(doc, args.format, rows)
    _write(args.out_dir, "sweep.json", doc)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    gen = GeneratorConfig()
    if args.config is not None:
        doc = _read_json(args.config)
        if not isinstance(doc, dict):
            raise ConfigError("generator config must be a JSON object")
        doc = doc.get("generator", doc)
        gen = GeneratorConfig.from_json_dict(doc)
    try:
        suite = parse_suite(args.suite)
    except ValueError as exc:
        raise ConfigError(str(exc), field="suite") from None
    reports = run_checks(suite, gen, seed=args.seed or 0, n_instances=args.instances,
                         n_theta=args.thetas, jobs=args.jobs)
    doc = {"schema_version": 1, "seed": args.seed or 0,
           "checks": [r.to_json_dict() for r in reports],
           "passed": all(r.passed for r in reports)}
    rows = [("check_name", "instances_tested", "max_violation", "worst_seed", "passed")]
    rows += [(r.check_name, r.instances_tested, r.max_violation,
              f"{r.worst_seed[0]}:{r.worst_seed[1]}", r.passed) for r in reports]
    _emit(doc, args.format, rows)
    _write(args.out_dir, "verify_report.json", doc)
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def cmd_bounds(args) -> int:
    cfg = _experiment(args)
    prep = prepare(cfg)
    c: BoundConstants = prep.constants
    values: dict[str, Any] = {}
    for which in BoundName:
        try:
            values[which.value] = theorem_bound(which, c, cfg.T, cfg.alpha0)
        except ConfigError as exc:
            values[which.value] = None
            values[f"{which.value}_unavailable"] = str(exc)
    doc = {"T": cfg.T, "alpha0": cfg.alpha0, "constants": c.to_json_dict(), "bounds": values}
    rows = [("bound", "value")] + [(k.value, values[k.value]) for k in BoundName]
    _emit(doc, args.format, rows)
    _write(args.out_dir, "bounds.json", doc)
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out-dir", default=None, help="directory for report files")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    p = argparse.ArgumentParser(prog="tdfinite", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common],
                       help="limit point, value function and constants of an instance")
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("run", parents=[common], help="Monte Carlo experiment against a bound")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="log-log rate fit over horizons")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--grid", help="comma-separated horizons")
    g.add_argument("--grid-range", nargs=3, type=float, metavar=("LO", "HI", "POINTS"),
                   default=(1000, 1000000, 7))
    s.add_argument("--expect-slope", nargs=2, type=float, metavar=("LO", "HI"), default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", parents=[common], help="property checks on random instances")
    s.add_argument("--suite", default="all", help="comma-separated check names or 'all'")
    s.add_argument("--instances", type=int, default=100)
    s.add_argument("--thetas", type=int, default=100)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bounds", parents=[common], help="evaluate every finite-time bound")
    s.set_defaults(func=cmd_bounds)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, GenerationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TDFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
