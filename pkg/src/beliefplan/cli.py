"""Command-line interface.

Exit codes: 0 success, 1 no solution within the time limit (or flagged
validation), 2 usage or scenario validation error, 3 infeasible
specification.  The BELIEFPLAN_CONFIG environment variable may point to
a JSON file of PlannerConfig defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import ltlf
from .dfa import compile_to_dfa, export_dot
from .errors import BeliefPlanError, InfeasibleSpecificationError, ScenarioError
from .planner import (
    PlannerConfig,
    benchmark_csv,
    run_benchmark,
    solution_from_dict,
    solve,
    trajectory_csv,
    trajectory_json,
    validate_monte_carlo,
)
from .scenario import load_scenario
from .task_graph import export_pruned_dot

EXIT_OK = 0
EXIT_NO_SOLUTION = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def _config_defaults() -> dict:
    path = os.environ.get("BELIEFPLAN_CONFIG")
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError("/", f"BELIEFPLAN_CONFIG: {exc}")


def _load_props(path: str) -> list[str]:
    """Proposition names from a props file or a full scenario file."""
    data = json.loads(Path(path).read_text())
    entries = data["propositions"] if isinstance(data, dict) else data
    names = []
    for entry in entries:
        names.append(entry["name"] if isinstance(entry, dict) else str(entry))
    return names


def _cmd_compile(args) -> int:
    props = _load_props(args.props)
    ast = ltlf.parse_formula(args.formula, props)
    dfa = compile_to_dfa(ast, state_cap=args.state_cap)
    if args.dot:
        Path(args.dot).write_text(export_dot(dfa) + "\n")
    if args.stats:
        transitions = sum(len(t) for t in dfa.transitions)
        print(f"propositions: {len(dfa.props)}")
        print(f"states: {dfa.num_states}")
        print(f"accepting: {len(dfa.accepting)}")
        print(f"guarded transitions: {transitions}")
    if not args.dot and not args.stats:
        print(export_dot(dfa))
    return EXIT_OK


def _planner_config(args) -> PlannerConfig:
    defaults = _config_defaults()
    merged = dict(defaults)
    overrides = {
        "seed": args.seed,
        "time_limit": args.time_limit,
        "guide_kind": args.simba,
        "guide_time": args.guide_time,
        "search_time": args.search_time,
        "bias_prob": args.bias,
        "iters_per_sec": args.iters_per_sec,
        "n_prop": args.n_prop,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return PlannerConfig(**merged)


def _cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario)
    config = _planner_config(args)

    log_sink = None
    log_file = None
    if args.log_json:
        log_file = open(args.log_json, "w")

        def log_sink(record):
            log_file.write(json.dumps(record, sort_keys=True) + "\n")

    artifacts: dict = {}
    try:
        solution = solve(scenario, config, log_sink=log_sink, artifacts=artifacts)
    finally:
        if log_file is not None:
            log_file.close()

    if args.dump_pruned_dot:
        Path(args.dump_pruned_dot).write_text(export_pruned_dot(artifacts["pruned"]) + "\n")
    if args.tree_out:
        snapshot = artifacts["tree"].to_dict()
        guide_search = artifacts.get("guide_search")
        if guide_search is not None:
            snapshot["guide"] = [
                {"id": v.index, "point": v.point.tolist(), "q": v.q, "parent": v.parent}
                for v in guide_search.vertices
            ]
        if artifacts.get("guide_path") is not None:
            snapshot["guide_path"] = artifacts["guide_path"].to_dict()
        Path(args.tree_out).write_text(json.dumps(snapshot, sort_keys=True) + "\n")

    if solution is None:
        print("no solution within the time limit", file=sys.stderr)
        return EXIT_NO_SOLUTION

    payload = solution.to_json()
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    if args.csv_out:
        Path(args.csv_out).write_text(trajectory_csv(scenario, solution))
    if args.traj_json:
        Path(args.traj_json).write_text(trajectory_json(scenario, solution))
    print(
        f"solved in {solution.epochs} epochs, {solution.vertex_count} vertices, "
        f"{solution.plan.steps} steps",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    data = json.loads(Path(args.plan).read_text())
    solution = solution_from_dict(data)
    report = validate_monte_carlo(scenario, solution, trials=args.trials, seed=args.seed)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    flagged = report.flagged
    print(f"validated {report.trials} rollouts, {len(report.entries)} assertions, "
          f"{len(flagged)} flagged")
    for entry in flagged:
        print(f"  step {entry.step} prop {entry.prop}: freq {entry.frequency:.4f} "
              f"< {entry.threshold:.4f} - 3se")
    return EXIT_NO_SOLUTION if flagged else EXIT_OK


def _cmd_bench(args) -> int:
    paths = []
    for target in args.scenarios:
        p = Path(target)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.json")))
        else:
            paths.append(p)
    if not paths:
        print("no scenario files found", file=sys.stderr)
        return EXIT_USAGE
    scenarios = [(p.stem, load_scenario(p)) for p in paths]
    base = PlannerConfig(**_config_defaults()) if _config_defaults() else PlannerConfig()
    rows = run_benchmark(
        scenarios, variants=args.variants, trials=args.trials,
        limit=args.limit, seed=args.seed, base_config=base,
    )
    table = benchmark_csv(rows)
    if args.csv:
        Path(args.csv).write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefplan",
        description="Belief-space motion planning for finite-trace temporal tasks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a formula to a minimized DFA")
    p.add_argument("formula")
    p.add_argument("--props", required=True, help="JSON file declaring propositions")
    p.add_argument("--dot", help="write DOT output here")
    p.add_argument("--stats", action="store_true", help="print automaton statistics")
    p.add_argument("--state-cap", type=int, default=10_000)
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("plan", help="search for a satisfying motion plan")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--simba", choices=["sba", "geo", "none"], default=None)
    p.add_argument("--guide-time", type=float, default=None)
    p.add_argument("--search-time", type=float, default=None)
    p.add_argument("--bias", type=float, default=None)
    p.add_argument("--iters-per-sec", type=int, default=None)
    p.add_argument("--n-prop", type=int, default=None)
    p.add_argument("--out", help="write the plan JSON here")
    p.add_argument("--tree-out", help="write a tree snapshot here")
    p.add_argument("--csv-out", help="write the trajectory CSV here")
    p.add_argument("--traj-json", help="write the trajectory JSON here")
    p.add_argument("--log-json", help="write epoch logs as JSON lines")
    p.add_argument("--dump-pruned-dot", help="write the pruned automaton DOT here")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("validate", help="Monte-Carlo validation of a plan")
    p.add_argument("scenario")
    p.add_argument("plan")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the validation report JSON here")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("bench", help="benchmark planner variants")
    p.add_argument("scenarios", nargs="+", help="scenario files or directories")
    p.add_argument("--variants", nargs="+", default=["none", "geo", "sba"],
                   choices=["none", "geo", "sba"])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--limit", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the results CSV here")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except InfeasibleSpecificationError as exc:
        print(f"infeasible specification: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, BeliefPlanError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
