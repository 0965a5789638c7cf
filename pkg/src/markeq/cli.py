"""Batch front-end: solve, verify, and compare from a config document.

Exit codes: 0 success, 2 config/input error, 3 solver failure,
4 certification failure.  All outputs are CSV plus a JSON run manifest;
re-running a command with an identical config reproduces byte-identical
CSV bodies regardless of --workers (the worker flag only caps BLAS
threads; reductions are always in node order).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .errors import ConfigError, MarkeqError
from .kernels import discretize
from .model import Model, Policy, build_model, config_hash
from .solver import SolveOptions, solve

_FLOAT_FMT = "{:.17g}"


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return doc


def _prepare(config: dict, args):
    if args.controls is not None:
        config.setdefault("control", {})
        if "lo" not in config.get("control", {}):
            raise ConfigError("--controls needs a control window in the config")
        config["control"]["nodes"] = args.controls
    model = build_model(config)
    quad_order = args.quad_order or int(config.get("kernel", {}).get("quad_order", 41))
    dk = discretize(model.kernel, model.grids, model.constraints, quad_order=quad_order)
    options = SolveOptions(u_tol=args.u_tol)
    return model, dk, options, quad_order


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, (int, str)) else _FLOAT_FMT.format(c)
                        for c in row])


def _policy_rows(model: Model, policy: Policy):
    for t in range(model.T - 1):
        for i, x in enumerate(model.grids[t]):
            yield (t, i, float(x), float(policy.controls[t][i]))


def _manifest(out_dir: Path, config: dict, args, quad_order: int, timings: dict,
              artifacts):
    doc = {
        "config_hash": config_hash(config),
        "options": {"quad_order": quad_order, "u_tol": args.u_tol,
                    "tol": getattr(args, "tol", None),
                    "controls": args.controls, "workers": args.workers},
        "seed": args.seed,
        "timings_s": timings,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def cmd_solve(args) -> int:
    try:
        config = load_config(args.config)
        model, dk, options, quad_order = _prepare(config, args)
    except (ConfigError, MarkeqError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        solution = solve(model, dk, options)
    except MarkeqError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    timings = {"solve": time.perf_counter() - t0}

    _write_csv(out / "policy.csv", ["t", "node", "state", "control"],
               _policy_rows(model, solution.policy))
    _write_csv(out / "values.csv", ["t", "node", "state", "V"],
               ((t, i, float(model.grids[t][i]), float(solution.values[t][i]))
                for t in range(model.T - 1) for i in range(model.grids[t].size)))
    diag_rows = [("boundary_hit", t, i, "") for t, i in solution.diagnostics.boundary_hits]
    diag_rows += [("refined", t, i, "") for t, i in solution.diagnostics.refined]
    if solution.diagnostics.clamped_mass is not None:
        diag_rows.append(("clamped_mass", "", "",
                          _FLOAT_FMT.format(solution.diagnostics.clamped_mass)))
    _write_csv(out / "diagnostics.csv", ["kind", "t", "node", "value"], diag_rows)
    artifacts = [out / n for n in ("policy.csv", "values.csv", "diagnostics.csv")]
    _manifest(out, config, args, quad_order, timings, artifacts)
    return 0


def _load_solution(model: Model, solution_dir: Path):
    policy_path = solution_dir / "policy.csv"
    values_path = solution_dir / "values.csv"
    for p in (policy_path, values_path):
        if not p.exists():
            raise ConfigError(f"missing solution artifact: {p}")
    controls = [np.full(model.grids[t].size, np.nan) for t in range(model.T - 1)]
    with open(policy_path, newline="") as fh:
        for row in csv.DictReader(fh):
            controls[int(row["t"])][int(row["node"])] = float(row["control"])
    if any(np.any(np.isnan(c)) for c in controls):
        raise ConfigError("policy.csv does not cover every (t, node)")
    values = [np.full(model.grids[t].size, np.nan) for t in range(model.T - 1)]
    with open(values_path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[int(row["t"])][int(row["node"])] = float(row["V"])
    return Policy(controls=controls), values


def cmd_verify(args) -> int:
    try:
        config = load_config(args.config)
        model, dk, options, quad_order = _prepare(config, args)
        policy, _claimed = _load_solution(model, Path(args.solution))
        policy.check_feasible(model)
    except (ConfigError, MarkeqError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    report = ev.deviation_report(model, dk, policy, tol=args.tol, keep_rows=True)
    timings = {"verify": time.perf_counter() - t0}
    out = Path(args.solution)
    report.to_csv(out / "deviation.csv")
    _manifest(out, config, args, quad_order, timings, [out / "deviation.csv"])
    if not report.certified:
        t, i, u = report.argmax
        print(f"certification failed: worst gap {report.worst_gap:.3e} at "
              f"(t={t}, node={i}, control={u:.6g}) exceeds tol {args.tol:.3e}",
              file=sys.stderr)
        return 4
    print(f"certified: worst gap {report.worst_gap:.3e} <= tol {args.tol:.3e} "
          f"(probe resolution {report.probe_resolution})")
    return 0


def cmd_compare(args) -> int:
    try:
        config = load_config(args.config)
        model, dk, options, quad_order = _prepare(config, args)
    except (ConfigError, MarkeqError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        solution = solve(model, dk, options)
        i0 = model.grids[0].size // 2
        pre_policy, pre_value = ev.solve_precommitment(model, dk, 0, i0)
        naive_policy = ev.solve_naive(model, dk)
    except MarkeqError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    timings = {"compare": time.perf_counter() - t0}

    j1_eq = ev.eval_objective_exact(model, dk, solution.policy, 0, i0)
    j1_pre = ev.eval_objective_exact(model, dk, pre_policy, 0, i0)
    j1_naive = ev.eval_objective_exact(model, dk, naive_policy, 0, i0)

    rows = []
    first_diff = None
    for t in range(model.T - 1):
        step = float(np.max(np.diff(dk.controls[t], axis=1), initial=0.0))
        for i, x in enumerate(model.grids[t]):
            ue = float(solution.policy.controls[t][i])
            up = float(pre_policy.controls[t][i])
            un = float(naive_policy.controls[t][i])
            rows.append((t, i, float(x), ue, up, un, j1_eq, j1_pre, j1_naive))
            if first_diff is None and abs(ue - up) > step:
                first_diff = (t, i)
    _write_csv(out / "compare.csv",
               ["t", "node", "state", "u_equilibrium", "u_precommitment", "u_naive",
                "J1_equilibrium", "J1_precommitment", "J1_naive"], rows)
    _manifest(out, config, args, quad_order, timings, [out / "compare.csv"])
    if first_diff is None:
        print("policies identical (equilibrium = precommitment at grid resolution)")
    else:
        print(f"policies differ: first at (t={first_diff[0]}, node={first_diff[1]})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markeq",
        description="Equilibrium policies for time-inconsistent stochastic control")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="config document (JSON or YAML)")
        p.add_argument("--tol", type=float, default=1e-6,
                       help="certification tolerance on the deviation gap")
        p.add_argument("--workers", type=int, default=1,
                       help="worker cap; results are worker-count independent")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--quad-order", type=int, default=None, dest="quad_order")
        p.add_argument("--controls", type=int, default=None,
                       help="override the control grid node count M_u")
        p.add_argument("--u-tol", type=float, default=1e-9, dest="u_tol",
                       help="golden-section refinement tolerance")

    p = sub.add_parser("solve", help="solve and write policy/value/diagnostic tables")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="deviation-test a solved policy directory")
    common(p)
    p.add_argument("--solution", required=True, help="directory holding policy.csv")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="equilibrium vs precommitment vs naive")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
