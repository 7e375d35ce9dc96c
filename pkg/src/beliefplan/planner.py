"""Epoch orchestrator: task plan, guide search, belief search, weight update.

Each epoch recomputes the cheapest accepting automaton run under the
current feasibility weights, lets the guide layer look for a simplified
solution (until one is found), then grows the belief tree with sampling
biased around the guide's sub-task segments.  Layer budgets are given in
seconds but quantized into a fixed number of extension attempts
(`iters_per_sec`), so a seeded solve is bit-reproducible; wall-clock
time only decides when to give up.
"""

from __future__ import annotations

import csv
import io
import json
import time
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dfa import Dfa, compile_to_dfa
from .dynamics import (
    Belief,
    NominalPlan,
    propagate_plan,
    psd_sqrt,
    simulate_closed_loop,
)
from .errors import InfeasibleSpecificationError, ScenarioWarning
from .geometry import build_adjacency_graph
from .guide import GuidePath, GuideSearch, biased_target, segment_for, uniform_target
from .scenario import Scenario
from .task_graph import PrunedDfa, prune_letters
from .tree import BeliefTree

_M64 = (1 << 64) - 1
_CLOCK_CHECK = 64  # extensions between wall-clock checks


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _M64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _M64
    return (z ^ (z >> 31)) & _M64


def derive_seed(*parts: int) -> int:
    """Deterministic seed derivation (splitmix-style mixing of the parts)."""
    state = 0
    for part in parts:
        state = (state + 0x9E3779B97F4A7C15 + int(part)) & _M64
        state = _mix64(state)
    return state


@dataclass
class PlannerConfig:
    """Knobs of the epoch loop; budgets are per-epoch seconds."""

    guide_time: float = 1.0
    search_time: float = 1.0
    time_limit: float = 60.0
    iters_per_sec: int = 1500
    bias_prob: float = 0.75
    radius0: Optional[float] = None  # default: twice the guide step length
    radius_growth: float = 1.5
    n_prop: int = 5
    seed: int = 0
    guide_kind: Optional[str] = None  # None: scenario's kind; sba | geo | none
    max_epochs: Optional[int] = None
    dfa_state_cap: int = 10_000

    def __post_init__(self):
        if self.guide_time < 0 or self.search_time < 0:
            raise ValueError("layer budgets must be nonnegative")
        if not 0.0 <= self.bias_prob <= 1.0:
            raise ValueError("bias_prob must lie in [0, 1]")


@dataclass
class Solution:
    """Verified accepting plan with its replayed annotations."""

    scenario: str
    formula: str
    seed: int
    plan: NominalPlan
    beliefs: list
    word: list
    run: list
    epochs: int
    vertex_count: int
    guide_vertex_count: int
    wall_time: float  # informational; excluded from exports for determinism

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "formula": self.formula,
            "seed": self.seed,
            "controls": self.plan.controls.tolist(),
            "states": self.plan.states.tolist(),
            "word": [sorted(symbol) for symbol in self.word],
            "run": list(self.run),
            "epochs": self.epochs,
            "vertex_count": self.vertex_count,
            "guide_vertex_count": self.guide_vertex_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def solution_from_dict(data: dict) -> Solution:
    plan = NominalPlan(np.array(data["controls"], dtype=float).reshape(len(data["controls"]), -1)
                       if data["controls"] else np.zeros((0, 1)),
                       np.array(data["states"], dtype=float))
    return Solution(
        scenario=data["scenario"],
        formula=data["formula"],
        seed=data["seed"],
        plan=plan,
        beliefs=[],
        word=[frozenset(symbol) for symbol in data["word"]],
        run=list(data["run"]),
        epochs=data["epochs"],
        vertex_count=data["vertex_count"],
        guide_vertex_count=data["guide_vertex_count"],
        wall_time=float("nan"),
    )


class _Deadline:
    def __init__(self, limit: float):
        self.start = time.monotonic()
        self.limit = limit

    def exceeded(self) -> bool:
        return time.monotonic() - self.start >= self.limit

    def elapsed(self) -> float:
        return time.monotonic() - self.start


@dataclass
class PlannerState:
    """Wiring shared by the epoch loop; exposed for tests and tooling."""

    scenario: Scenario
    config: PlannerConfig
    dfa: Dfa
    pruned: PrunedDfa
    tree: BeliefTree
    guide_search: Optional[GuideSearch]
    root_q: int


def _build_state(scenario: Scenario, config: PlannerConfig) -> PlannerState:
    dfa = compile_to_dfa(scenario.ast, state_cap=config.dfa_state_cap)
    adjacency = build_adjacency_graph(
        sorted(scenario.regions.values(), key=lambda r: r.name),
        scenario.ws_low, scenario.ws_high,
    )
    pruned = prune_letters(dfa, scenario.props, scenario.regions, adjacency)

    labeler = scenario.labeler()
    root_belief = Belief(scenario.initial_mean, scenario.initial_cov,
                         np.zeros((scenario.system.state_dim,) * 2))
    root_label = labeler(root_belief)
    assert not pruned.symbol_blocked(root_label), \
        "initial label is a pruned symbol; pruning is unsound"
    root_q = pruned.step(dfa.initial, root_label)
    tree = BeliefTree(root_belief, root_q)

    kind = config.guide_kind
    if kind is None:
        kind = scenario.simba.kind if scenario.simba is not None else "none"
    if kind == "geo":
        kind = "geometric"
    guide_search = None
    if kind != "none":
        if scenario.simba is None:
            raise ValueError("scenario declares no simplified model; use guide_kind='none'")
        model = scenario.simba
        if model.kind != kind:
            model = replace(model, kind=kind)
        if kind == "sba" and not model.assumes_monotone_labels:
            warnings.warn(
                "sba guide without the monotone-label assumption flag: "
                "guides may be inadmissible (completeness is unaffected)",
                ScenarioWarning,
                stacklevel=3,
            )
        guide_search = GuideSearch(
            model, scenario.system, pruned,
            scenario.initial_mean, scenario.initial_cov,
            scenario.guide_labeler(model),
        )
    return PlannerState(scenario, config, dfa, pruned, tree, guide_search, root_q)


def solve(
    scenario: Scenario,
    config: Optional[PlannerConfig] = None,
    log_sink: Optional[Callable[[dict], None]] = None,
    artifacts: Optional[dict] = None,
) -> Optional[Solution]:
    """Search for a satisfying motion plan.

    Returns None on timeout; raises InfeasibleSpecificationError when
    the pruned automaton admits no accepting run from the initial label
    (reported distinctly from timeouts).  Given a seed the sequence of
    search decisions is deterministic; the wall clock only truncates.
    When given, `artifacts` is filled with the live planner internals
    (tree, guide search, pruned automaton) for export and inspection.
    """
    config = config or PlannerConfig()
    deadline = _Deadline(config.time_limit)
    state = _build_state(scenario, config)
    pruned, tree = state.pruned, state.tree
    if artifacts is not None:
        artifacts["tree"] = tree
        artifacts["guide_search"] = state.guide_search
        artifacts["pruned"] = pruned
        artifacts["dfa"] = state.dfa
    labeler = scenario.labeler()
    rng = np.random.default_rng(config.seed)

    if pruned.dist_from_acc[state.root_q] == float("inf"):
        pruned.raise_infeasible(state.root_q)

    if state.root_q in state.dfa.accepting:
        word = [labeler(tree.root.belief)]
        plan = NominalPlan(np.zeros((0, scenario.system.input_dim)),
                           tree.root.belief.mean.reshape(1, -1))
        return Solution(
            scenario=scenario.name, formula=scenario.formula, seed=config.seed,
            plan=plan, beliefs=[tree.root.belief], word=word, run=[state.root_q],
            epochs=0, vertex_count=1, guide_vertex_count=0,
            wall_time=deadline.elapsed(),
        )

    sys = scenario.system
    model = state.guide_search.model if state.guide_search else None
    step_len = (model.v_max * sys.dt) if model else scenario.max_step_displacement()
    radius = config.radius0 if config.radius0 is not None else 2.0 * step_len
    if model:
        proj = list(model.projection)
        radius_cap = float(np.linalg.norm(sys.state_high[proj] - sys.state_low[proj]))
    else:
        radius_cap = float(np.linalg.norm(sys.state_high - sys.state_low))

    guide_iters = round(config.guide_time * config.iters_per_sec)
    search_iters = round(config.search_time * config.iters_per_sec)
    guide_path: Optional[GuidePath] = None
    epochs = 0

    while not deadline.exceeded():
        if config.max_epochs is not None and epochs >= config.max_epochs:
            return None
        epochs += 1
        task_plan = pruned.plan_task(start=state.root_q)

        if state.guide_search is not None and guide_path is None and guide_iters > 0:
            remaining = guide_iters
            while remaining > 0 and guide_path is None and not deadline.exceeded():
                block = min(_CLOCK_CHECK, remaining)
                guide_path = state.guide_search.grow(
                    task_plan, block, rng, max_steps=config.n_prop
                )
                remaining -= block
            if guide_path is not None and artifacts is not None:
                artifacts["guide_path"] = guide_path

        if guide_path is not None and model is not None:
            segments = {
                q: segment_for(q, task_plan, guide_path)
                for q in dict.fromkeys(task_plan.states)
            }

            def sampler(q, gen, _segments=segments, _radius=radius):
                return biased_target(
                    _segments[q], _radius, config.bias_prob, model,
                    sys.state_low, sys.state_high, gen,
                )
        else:
            def sampler(q, gen):
                return uniform_target(sys.state_low, sys.state_high, gen)

        remaining = search_iters
        while remaining > 0 and not deadline.exceeded():
            block = min(_CLOCK_CHECK, remaining)
            remaining -= block
            for _ in range(block):
                vertex = tree.extend(
                    sys, pruned, task_plan, sampler, labeler, rng,
                    max_steps=config.n_prop,
                )
                if vertex is not None and vertex.q in state.dfa.accepting:
                    plan, beliefs, word, run = tree.extract(
                        vertex, sys, state.dfa, labeler
                    )
                    return Solution(
                        scenario=scenario.name, formula=scenario.formula,
                        seed=config.seed, plan=plan, beliefs=beliefs,
                        word=word, run=run, epochs=epochs,
                        vertex_count=len(tree),
                        guide_vertex_count=(len(state.guide_search.vertices)
                                            if state.guide_search else 0),
                        wall_time=deadline.elapsed(),
                    )

        counts = tree.counts_by_state()
        for q in range(state.dfa.num_states):
            pruned.tree_cov[q] = counts.get(q, 0)
        radius = min(radius * config.radius_growth, radius_cap)
        if log_sink is not None:
            log_sink({
                "epoch": epochs,
                "task_plan": list(task_plan.states),
                "weights": {str(q): pruned.weight(q) for q in range(state.dfa.num_states)},
                "numsel": {str(q): pruned.numsel[q] for q in range(state.dfa.num_states)},
                "cov": {str(q): pruned.tree_cov[q] for q in range(state.dfa.num_states)},
                "guide_found": guide_path is not None,
                "tree_size": len(tree),
                "guide_size": len(state.guide_search.vertices) if state.guide_search else 0,
                "radius": radius,
                "blocked_label_events": tree.blocked_label_events,
            })
    return None


# ---------------------------------------------------------------------------
# Monte-Carlo validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationEntry:
    step: int
    prop: str
    frequency: float
    threshold: float
    std_error: float
    flagged: bool


@dataclass
class ValidationReport:
    trials: int
    seed: int
    entries: list

    @property
    def flagged(self) -> list:
        return [e for e in self.entries if e.flagged]

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "entries": [
                {
                    "step": e.step,
                    "prop": e.prop,
                    "frequency": e.frequency,
                    "threshold": e.threshold,
                    "std_error": e.std_error,
                    "flagged": e.flagged,
                }
                for e in self.entries
            ],
            "num_flagged": len(self.flagged),
        }


def validate_monte_carlo(
    scenario: Scenario,
    solution: Solution,
    trials: int,
    seed: int = 0,
) -> ValidationReport:
    """Closed-loop rollouts checking each asserted proposition's event.

    For every timestep and proposition asserted by the solution word,
    reports the empirical frequency of the underlying event (true state
    inside the reach region, or outside the avoid region) and flags it
    when the frequency falls more than three binomial standard errors
    below 1 - alpha.
    """
    sys = scenario.system
    props = {p.name: p for p in scenario.props}
    word = solution.word
    steps = len(word) - 1
    if solution.plan.steps != steps:
        raise ValueError("solution word does not match its control sequence")

    asserted = [(k, name) for k, symbol in enumerate(word) for name in sorted(symbol)]
    counts = {key: 0 for key in asserted}

    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        if steps == 0:
            x0 = scenario.initial_mean + psd_sqrt(scenario.initial_cov) @ rng.standard_normal(sys.state_dim)
            states = np.array([x0])
        else:
            result = simulate_closed_loop(sys, solution.plan, scenario.initial_cov, rng)
            states = result.true_states
        for (k, name) in asserted:
            prop = props[name]
            region = scenario.regions[prop.region]
            point = states[k][list(scenario.ws_dims)]
            inside = region.contains(point, tol=0.0)
            event = inside if prop.polarity == "reach" else not inside
            if event:
                counts[(k, name)] += 1

    entries = []
    for (k, name) in asserted:
        prop = props[name]
        freq = counts[(k, name)] / trials
        threshold = 1.0 - prop.alpha
        se = float(np.sqrt(max(threshold * (1.0 - threshold), 1e-12) / trials))
        entries.append(ValidationEntry(
            step=k, prop=name, frequency=freq, threshold=threshold,
            std_error=se, flagged=freq < threshold - 3.0 * se,
        ))
    return ValidationReport(trials=trials, seed=seed, entries=entries)


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkRow:
    scenario: str
    variant: str
    trials: int
    successes: int
    mean_time: float
    sem_time: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


VARIANTS = ("none", "geo", "sba")


def run_benchmark(
    scenarios: Sequence[tuple[str, Scenario]],
    variants: Sequence[str],
    trials: int,
    limit: float,
    seed: int = 0,
    base_config: Optional[PlannerConfig] = None,
) -> list:
    """Per-variant success rate and mean solve time (failures count the limit)."""
    rows = []
    base = base_config or PlannerConfig()
    for s_index, (name, scenario) in enumerate(scenarios):
        for v_index, variant in enumerate(variants):
            if variant not in VARIANTS:
                raise ValueError(f"unknown variant {variant!r}")
            times = []
            successes = 0
            for t in range(trials):
                config = PlannerConfig(
                    guide_time=base.guide_time, search_time=base.search_time,
                    time_limit=limit, iters_per_sec=base.iters_per_sec,
                    bias_prob=base.bias_prob, radius0=base.radius0,
                    radius_growth=base.radius_growth, n_prop=base.n_prop,
                    seed=derive_seed(seed, s_index, v_index, t),
                    guide_kind=variant, dfa_state_cap=base.dfa_state_cap,
                )
                start = time.monotonic()
                solution = solve(scenario, config)
                elapsed = time.monotonic() - start
                if solution is not None:
                    successes += 1
                    times.append(min(elapsed, limit))
                else:
                    times.append(limit)
            mean = float(np.mean(times)) if times else 0.0
            sem = float(np.std(times, ddof=1) / np.sqrt(len(times))) if len(times) > 1 else 0.0
            rows.append(BenchmarkRow(
                scenario=name, variant=variant, trials=trials,
                successes=successes, mean_time=mean, sem_time=sem,
            ))
    return rows


def benchmark_csv(rows: Sequence[BenchmarkRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["scenario", "variant", "trials", "successes",
                     "success_rate", "mean_time_s", "sem_time_s"])
    for row in rows:
        writer.writerow([
            row.scenario, row.variant, row.trials, row.successes,
            f"{row.success_rate:.3f}", f"{row.mean_time:.3f}", f"{row.sem_time:.3f}",
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Trajectory export
# ---------------------------------------------------------------------------


def _solution_beliefs(scenario: Scenario, solution: Solution) -> list:
    if solution.beliefs:
        return solution.beliefs
    sys = scenario.system
    root = Belief(solution.plan.states[0], scenario.initial_cov,
                  np.zeros((sys.state_dim,) * 2))
    return propagate_plan(sys, root, solution.plan.controls) \
        if solution.plan.steps else [root]


def trajectory_json(scenario: Scenario, solution: Solution) -> str:
    """Belief trajectory as JSON rows matching the CSV columns."""
    sys = scenario.system
    beliefs = _solution_beliefs(scenario, solution)
    rows = [
        {
            "step": k,
            "time": k * sys.dt,
            "mean": belief.mean.tolist(),
            "est_var": np.diag(belief.est_cov).tolist(),
            "dev_var": np.diag(belief.dev_cov).tolist(),
            "label": sorted(solution.word[k]),
            "q": solution.run[k],
        }
        for k, belief in enumerate(beliefs)
    ]
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


def trajectory_csv(scenario: Scenario, solution: Solution) -> str:
    """CSV with columns: step, time, mean, diag est cov, diag dev cov, label, q."""
    sys = scenario.system
    beliefs = _solution_beliefs(scenario, solution)
    n = sys.state_dim
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = (["step", "time"]
              + [f"mean_{i}" for i in range(n)]
              + [f"est_var_{i}" for i in range(n)]
              + [f"dev_var_{i}" for i in range(n)]
              + ["label", "q"])
    writer.writerow(header)
    for k, belief in enumerate(beliefs):
        writer.writerow(
            [k, f"{k * sys.dt:.6f}"]
            + [repr(float(v)) for v in belief.mean]
            + [repr(float(v)) for v in np.diag(belief.est_cov)]
            + [repr(float(v)) for v in np.diag(belief.dev_cov)]
            + ["|".join(sorted(solution.word[k])), solution.run[k]]
        )
    return buf.getvalue()
