#!/usr/bin/env python3
"""Author the shipped scenario files.

The underwater scenarios share one desk-scale world: a surface strip
with accurate position fixes, dead reckoning below, a wall splitting the
basin with a passable gap near the surface, and goal boxes on either
side of the wall.  Increasingly nested formulas reuse the same world.
"""

import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "scenarios"


def box(x0, x1, y0, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def underwater_world(formula: str, name: str) -> dict:
    dt = 0.25
    a = np.eye(4)
    a[0, 2] = dt
    a[1, 3] = dt
    b = np.array([
        [dt * dt / 2, 0.0],
        [0.0, dt * dt / 2],
        [dt, 0.0],
        [0.0, dt],
    ])
    accel_sigma = 0.055
    q = (accel_sigma ** 2) * (b @ b.T)
    c = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    return {
        "name": name,
        "workspace": {"dims": [0, 1], "low": [0.0, 0.0], "high": [10.0, 6.0]},
        "system": {
            "A": a.tolist(),
            "B": b.tolist(),
            "C": c.tolist(),
            "Q": q.tolist(),
            "dt": dt,
            "lqr": {
                "state_weight": np.diag([10.0, 10.0, 2.0, 2.0]).tolist(),
                "input_weight": np.diag([1.0, 1.0]).tolist(),
            },
            "input_bounds": {"low": [-1.0, -1.0], "high": [1.0, 1.0]},
            "state_bounds": {
                "low": [0.0, 0.0, -0.95, -0.95],
                "high": [10.0, 6.0, 0.95, 0.95],
            },
        },
        "regions": [
            {"name": "a", "vertices": box(7.5, 9.5, 0.4, 2.0)},
            {"name": "b", "vertices": box(0.5, 2.5, 0.4, 2.0)},
            {"name": "c", "vertices": box(0.0, 10.0, 4.4, 6.0)},
            {"name": "o", "vertices": box(4.0, 6.0, 0.0, 4.2)},
        ],
        "propositions": [
            {"name": "a", "region": "a", "alpha": 0.05, "polarity": "reach"},
            {"name": "b", "region": "b", "alpha": 0.05, "polarity": "reach"},
            {"name": "c", "region": "c", "alpha": 0.05, "polarity": "reach"},
            {"name": "safe", "region": "o", "alpha": 0.05, "polarity": "avoid"},
        ],
        "measurement_zones": [
            {"region": "c", "R": (0.0025 * np.eye(2)).tolist()},
        ],
        "default_R": "none",
        "formula": formula,
        "initial_belief": {
            "mean": [1.0, 5.5, 0.0, 0.0],
            "cov": np.diag([0.01, 0.01, 0.0025, 0.0025]).tolist(),
        },
        "simba": {
            "projection": [0, 1],
            "kind": "sba",
            "v_max": 1.0,
            "lift": [None, None, None, None],
            "assumes_monotone_labels": True,
        },
    }


def pond_world(formula: str, name: str) -> dict:
    """Small single-integrator world for fast tests."""
    dt = 0.5
    return {
        "name": name,
        "workspace": {"dims": [0, 1], "low": [0.0, 0.0], "high": [8.0, 5.0]},
        "system": {
            "A": np.eye(2).tolist(),
            "B": (dt * np.eye(2)).tolist(),
            "C": np.eye(2).tolist(),
            "Q": (4e-4 * np.eye(2)).tolist(),
            "dt": dt,
            "K": np.eye(2).tolist(),
            "input_bounds": {"low": [-0.42, -0.42], "high": [0.42, 0.42]},
            "state_bounds": {"low": [0.0, 0.0], "high": [8.0, 5.0]},
        },
        "regions": [
            {"name": "goal", "vertices": box(6.0, 7.5, 0.5, 2.0)},
            {"name": "dock", "vertices": box(0.0, 8.0, 3.8, 5.0)},
            {"name": "rock", "vertices": box(3.0, 4.5, 0.0, 3.0)},
        ],
        "propositions": [
            {"name": "goal", "region": "goal", "alpha": 0.05, "polarity": "reach"},
            {"name": "dock", "region": "dock", "alpha": 0.05, "polarity": "reach"},
            {"name": "clear", "region": "rock", "alpha": 0.05, "polarity": "avoid"},
        ],
        "measurement_zones": [
            {"region": "dock", "R": (0.0025 * np.eye(2)).tolist()},
        ],
        "default_R": "none",
        "formula": formula,
        "initial_belief": {
            "mean": [0.8, 4.4],
            "cov": (0.01 * np.eye(2)).tolist(),
        },
        "simba": {
            "projection": [0, 1],
            "kind": "sba",
            "v_max": 0.6,
            "lift": [None, None],
            "assumes_monotone_labels": True,
        },
    }


def main():
    OUT.mkdir(exist_ok=True)
    files = {
        "underwater.json": underwater_world("G safe & F a", "underwater_phi1"),
        "underwater_phi2.json": underwater_world("G safe & F (a & F c)", "underwater_phi2"),
        "underwater_phi3.json": underwater_world(
            "G safe & F (a & F c) & F (b & F c)", "underwater_phi3"
        ),
        "pond.json": pond_world("G clear & F goal", "pond"),
        "infeasible.json": pond_world("false", "infeasible"),
    }
    for filename, data in files.items():
        path = OUT / filename
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
