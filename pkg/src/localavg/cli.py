"""Command line entry point: ``localavg run|tradeoff|audit``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import tradeoff as tr
from .data import EmptyDatasetError, LibSVMParseError
from .errors import DimensionError, DivergenceError, DomainError, NumericFailure
from .experiments import ExperimentConfig, read_rounds_csv, run_experiment, write_artifacts
from .simulator import AUDIT_TOLERANCE, check_decrement

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_AUDIT_VIOLATION = 4
EXIT_UNSUPPORTED_AUDIT = 5


class ConfigError(Exception):
    pass


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {where}: {err['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def cmd_run(args) -> int:
    if args.config is None:
        raise ConfigError("run needs --config")
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    # flags override the file, then everything goes through validation together
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.out is not None:
        raw["outputs"] = {**raw.get("outputs", {}), "directory": args.out}
    cfg = ExperimentConfig.model_validate(raw)
    result = run_experiment(cfg)
    path = write_artifacts(result, cfg.outputs.directory)
    last = result.run.rounds[-1]
    print(f"{result.run.termination.value} after {last.round_index} rounds; "
          f"grad_sq={last.global_gradient_sq:.3e}; wrote {path}")
    return EXIT_OK


TRADEOFF_DEFAULTS = {
    "kind": "linear", "beta": None, "a": None, "r": [0.01],
    "comm_cost": 1.0, "nodes": 1, "alpha": 1.0, "d0_sq": 1.0, "epsilon": 1.0,
    "grid_points": 49, "t_max": None,
}


def _tradeoff_params(args) -> dict:
    params = dict(TRADEOFF_DEFAULTS)
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            given = json.load(fh)
        unknown = set(given) - set(params)
        if unknown:
            raise ConfigError(f"unknown tradeoff keys: {sorted(unknown)}")
        params.update(given)
    for key in ("kind", "beta", "a", "r", "comm_cost", "nodes", "alpha", "d0_sq", "epsilon",
                "grid_points", "t_max"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    if not isinstance(params["r"], list):
        params["r"] = [params["r"]]
    if params["kind"] not in ("linear", "sublinear"):
        raise ConfigError("kind must be linear or sublinear")
    if params["beta"] is None:
        raise ConfigError("beta is required")
    if params["kind"] == "sublinear" and params["a"] is None:
        raise ConfigError("sublinear kind needs a")
    if not params["r"]:
        raise ConfigError("need at least one r")
    return params


def plan_entry(params: dict, r: float) -> dict:
    """T* and a cost curve for one cost ratio ``r``."""
    kind, beta = params["kind"], float(params["beta"])
    cost = tr.CostModel.from_ratio(r, params["comm_cost"], nodes=params["nodes"], alpha=params["alpha"],
                                   d0_sq=params["d0_sq"], epsilon=params["epsilon"])
    if kind == "linear":
        model = tr.DecayModel.geometric(beta)
        t_closed = tr.t_star_linear(beta, r)
        t_num = tr.t_star_linear_numeric(beta, r)
        entry = {"r": r, "t_star_closed": t_closed, "t_star_numeric": t_num,
                 "closed_minus_numeric": t_closed - t_num,
                 "stationarity_residual": tr.linear_stationarity(beta, r, t_closed),
                 "asymptotic": tr.t_star_linear_asymptotic(beta, r)}
        t_star = t_closed
    else:
        a = float(params["a"])
        model = tr.DecayModel.power_law(a, beta)
        t_root = tr.t_star_sublinear(a, beta, r)
        t_num = tr.t_star_sublinear_numeric(a, beta, r)
        entry = {"r": r, "t_star_root": t_root, "t_star_numeric": t_num,
                 "root_minus_numeric": t_root - t_num,
                 "equation_residual": tr.sublinear_residual(a, beta, r, t_root),
                 "asymptotic": tr.t_star_sublinear_asymptotic(a, beta, r)}
        t_star = t_root
    entry["asymptotic_caveat"] = tr.ASYMPTOTIC_CAVEAT
    entry["t_star_rounded"] = tr.round_t_star(t_star, cost, model)
    t_max = params["t_max"] or max(100.0, 100.0 * t_star)
    grid = np.unique(np.round(np.geomspace(1.0, t_max, int(params["grid_points"]))).astype(int))
    entry["cost_curve"] = [{"T": int(T), "total_cost_bound": tr.total_cost_bound(cost, model, int(T))}
                           for T in grid]
    return entry


def cmd_tradeoff(args) -> int:
    params = _tradeoff_params(args)
    plan = {"params": params, "plans": [plan_entry(params, float(r)) for r in params["r"]]}
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "plan.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan, fh, indent=2)
        fh.write("\n")
    key = "t_star_closed" if params["kind"] == "linear" else "t_star_root"
    for p in plan["plans"]:
        print(f"r={p['r']:g}  T*={p[key]:.4f}  numeric={p['t_star_numeric']:.4f}  rounded={p['t_star_rounded']}")
    print(f"wrote {path}")
    return EXIT_OK


def audit_columns(cols: dict, tol: float = AUDIT_TOLERANCE) -> tuple:
    """``(rows, violations)``; ``rows`` is ``None`` if the distance column is empty."""
    dist = cols.get("dist_S")
    if dist is None or not dist or any(v is None for v in dist):
        return None, []
    rows = check_decrement(dist, cols["decrement_rhs"], tol)
    return rows, [row for row in rows if not row.satisfied]


def cmd_audit(args) -> int:
    run_json = Path(args.run_json)
    with open(run_json, encoding="utf-8") as fh:
        meta = json.load(fh)
    cols = read_rounds_csv(run_json.parent / meta.get("rounds_file", "rounds.csv"))
    rows, bad = audit_columns(cols, args.tol)
    if rows is None:
        print("unsupported audit: run has no distance-to-S column (common optimal set unknown)")
        return EXIT_UNSUPPORTED_AUDIT
    worst = max((r.rhs - r.lhs for r in rows), default=-math.inf)
    print(f"checked {len(rows)} rounds, {len(bad)} violations, worst rhs - lhs = {worst:.3e}")
    for row in bad:
        print(f"  violation at round {row.round_index}: lhs={row.lhs!r} rhs={row.rhs!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = {"rounds_checked": len(rows), "tolerance": args.tol,
                  "violations": [r._asdict() for r in bad]}
        with open(out / "audit.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_AUDIT_VIOLATION if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="localavg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one experiment and write rounds.csv and run.json")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tradeoff", help="cost-optimal local step count; writes plan.json")
    p.add_argument("--config", help="JSON file with any of the flag values below")
    p.add_argument("--out")
    p.add_argument("--kind", choices=("linear", "sublinear"))
    p.add_argument("--beta", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--r", type=float, action="append", help="cost ratio; repeat for several")
    p.add_argument("--comm-cost", dest="comm_cost", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--d0-sq", dest="d0_sq", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("audit", help="recheck the per-round decrement inequality of a finished run")
    p.add_argument("run_json")
    p.add_argument("--out")
    p.add_argument("--tol", type=float, default=AUDIT_TOLERANCE)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(_format_validation(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, json.JSONDecodeError, FileNotFoundError, LibSVMParseError,
            EmptyDatasetError, DimensionError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericFailure, FloatingPointError, OverflowError) as exc:
        ctx = ""
        if isinstance(exc, DivergenceError):
            ctx = f" (round {exc.round_index}, node {exc.node}, step {exc.step})"
        print(f"numeric failure{ctx}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
