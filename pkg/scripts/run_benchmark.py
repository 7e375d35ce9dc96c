#!/usr/bin/env python3
"""Benchmark the planner variants over the shipped underwater scenarios.

Reproduces the acceptance-style comparison (success rate and mean time
per variant, failures counted at the limit):

    python scripts/run_benchmark.py --trials 20 --limit 30 --csv bench.csv
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from beliefplan.planner import benchmark_csv, run_benchmark
from beliefplan.scenario import load_scenario

DEFAULT_SCENARIOS = [
    "scenarios/underwater.json",
    "scenarios/underwater_phi2.json",
    "scenarios/underwater_phi3.json",
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenarios", nargs="*", default=DEFAULT_SCENARIOS)
    parser.add_argument("--variants", nargs="+", default=["none", "geo", "sba"],
                        choices=["none", "geo", "sba"])
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--limit", type=float, default=30.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="also write the results here")
    args = parser.parse_args()

    scenarios = [(Path(p).stem, load_scenario(p)) for p in args.scenarios]
    rows = run_benchmark(scenarios, args.variants, trials=args.trials,
                         limit=args.limit, seed=args.seed)
    table = benchmark_csv(rows)
    sys.stdout.write(table)
    if args.csv:
        Path(args.csv).write_text(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
