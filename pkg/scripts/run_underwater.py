#!/usr/bin/env python3
"""Solve an underwater scenario and export every artifact next to it.

Example:
    python scripts/run_underwater.py scenarios/underwater_phi2.json \
        --seed 7 --variant sba --out-dir out/
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from beliefplan.planner import PlannerConfig, solve, trajectory_csv, trajectory_json
from beliefplan.scenario import load_scenario
from beliefplan.task_graph import export_pruned_dot


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario", nargs="?", default="scenarios/underwater_phi2.json")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--variant", choices=["sba", "geo", "none"], default="sba")
    parser.add_argument("--time-limit", type=float, default=60.0)
    parser.add_argument("--out-dir", default="out")
    args = parser.parse_args()

    scenario = load_scenario(args.scenario)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logs = []
    artifacts = {}
    config = PlannerConfig(seed=args.seed, time_limit=args.time_limit,
                           guide_kind=args.variant)
    start = time.monotonic()
    solution = solve(scenario, config, log_sink=logs.append, artifacts=artifacts)
    elapsed = time.monotonic() - start

    (out_dir / "epochs.jsonl").write_text(
        "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in logs)
    )
    (out_dir / "pruned.dot").write_text(export_pruned_dot(artifacts["pruned"]) + "\n")
    snapshot = artifacts["tree"].to_dict()
    if artifacts.get("guide_path") is not None:
        snapshot["guide_path"] = artifacts["guide_path"].to_dict()
    (out_dir / "tree.json").write_text(json.dumps(snapshot, sort_keys=True) + "\n")

    if solution is None:
        print(f"no solution within {args.time_limit}s ({elapsed:.1f}s elapsed)")
        return 1
    (out_dir / "plan.json").write_text(solution.to_json())
    (out_dir / "trajectory.csv").write_text(trajectory_csv(scenario, solution))
    (out_dir / "trajectory.json").write_text(trajectory_json(scenario, solution))
    print(f"solved in {elapsed:.1f}s: {solution.plan.steps} steps, "
          f"{solution.epochs} epochs, {solution.vertex_count} tree vertices")
    print(f"artifacts written to {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
