"""Letter pruning and weighted task planning on the compiled automaton.

Symbols asserting the simultaneous truth of propositions whose chance
constraints cannot co-hold (disjoint reach regions, or a reach inside an
avoid region, with probability mass exceeding one) are blocked.  The
pruned automaton redirects blocked symbols to a rejecting sink, and the
task planner searches only edges that some unblocked symbol can drive.

State weights reward automaton states with many motion-tree vertices and
small hop distance to acceptance, and decay quadratically with the
number of times a state has been selected, steering successive task
plans away from runs that keep failing.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import AbstractSet, Mapping, Optional, Sequence

from .dfa import Dfa, Guard
from .errors import InfeasibleSpecificationError
from .geometry import AdjacencyGraph, AtomicProp, Polytope, polytope_contains

SINK = -1  # virtual rejecting state absorbing blocked symbols

#: weight-formula stand-in for the zero hop distance of accepting states
ACCEPTING_DIST = 1.0


@dataclass(frozen=True)
class BlockedPair:
    """Two propositions that can never be true in the same symbol."""

    first: str
    second: str
    reason: str

    @property
    def names(self) -> frozenset:
        return frozenset((self.first, self.second))


def conflicting_pairs(
    props: Sequence[AtomicProp],
    regions: Mapping[str, Polytope],
    adjacency: AdjacencyGraph,
) -> tuple[BlockedPair, ...]:
    """Pairs of propositions whose thresholds make co-truth impossible."""
    pairs = []
    for i, p in enumerate(props):
        for q in props[i + 1:]:
            if p.polarity == "reach" and q.polarity == "reach":
                if adjacency.intersecting(p.region, q.region):
                    continue
                if (1.0 - p.alpha) + (1.0 - q.alpha) > 1.0:
                    pairs.append(BlockedPair(
                        p.name, q.name,
                        f"disjoint regions {p.region!r} and {q.region!r} with "
                        f"required mass {(1 - p.alpha) + (1 - q.alpha):.2f} > 1",
                    ))
                continue
            if {p.polarity, q.polarity} == {"reach", "avoid"}:
                reach, avoid = (p, q) if p.polarity == "reach" else (q, p)
                if (1.0 - reach.alpha) + (1.0 - avoid.alpha) <= 1.0:
                    continue
                same = reach.region == avoid.region
                if same or polytope_contains(regions[avoid.region], regions[reach.region]):
                    pairs.append(BlockedPair(
                        p.name, q.name,
                        f"reach region {reach.region!r} lies inside avoid "
                        f"region {avoid.region!r} with required mass > 1",
                    ))
    return tuple(pairs)


class PrunedDfa:
    """Automaton plus blocked letters and mutable planning statistics.

    ``tree_cov`` and ``numsel`` are the per-state feedback counters; the
    orchestrator rewrites ``tree_cov`` from motion-tree vertex counts
    between search epochs, ``plan_task`` bumps ``numsel`` on the run it
    returns.
    """

    def __init__(self, base: Dfa, blocked: Sequence[BlockedPair]):
        self.base = base
        self.blocked = tuple(blocked)
        self._blocked_sets = tuple(pair.names for pair in self.blocked)
        self.tree_cov = {q: 0 for q in range(base.num_states)}
        self.numsel = {q: 0 for q in range(base.num_states)}
        self._edges = self._usable_edges()
        self.dist_from_acc = self._hop_distances()

    # -- symbols ----------------------------------------------------------

    def symbol_blocked(self, symbol: AbstractSet[str]) -> bool:
        return any(pair <= symbol for pair in self._blocked_sets)

    def step(self, state: int, symbol: AbstractSet[str]) -> int:
        """Pruned transition: blocked symbols fall into the sink."""
        if state == SINK or self.symbol_blocked(symbol):
            return SINK
        return self.base.step(state, symbol)

    def _guard_usable(self, guard: Guard) -> bool:
        """Some unblocked symbol satisfies the guard.

        Only pairs lying entirely inside the guard's proposition set can
        force a block: any other proposition may simply be false.
        """
        inside = [
            tuple(guard.props.index(n) for n in pair)
            for pair in self._blocked_sets
            if all(n in guard.props for n in pair)
        ]
        for mask in sorted(guard.masks):
            if not any(mask >> i & 1 and mask >> j & 1 for i, j in inside):
                return True
        return False

    def _usable_edges(self) -> list[dict[int, bool]]:
        edges: list[dict[int, bool]] = []
        for q in range(self.base.num_states):
            out: dict[int, bool] = {}
            for guard, target in self.base.transitions[q]:
                if self._guard_usable(guard):
                    out[target] = True
            edges.append(out)
        return edges

    def successors(self, state: int) -> list[int]:
        return sorted(self._edges[state])

    # -- distances and weights ---------------------------------------------

    def _hop_distances(self) -> dict[int, float]:
        if not self.base.accepting:
            raise InfeasibleSpecificationError(
                "the automaton has no accepting state: the formula is unsatisfiable"
            )
        preds: list[list[int]] = [[] for _ in range(self.base.num_states)]
        for q in range(self.base.num_states):
            for target in self.successors(q):
                preds[target].append(q)
        dist = {q: float("inf") for q in range(self.base.num_states)}
        frontier = sorted(self.base.accepting)
        for q in frontier:
            dist[q] = 0.0
        while frontier:
            nxt = []
            for q in frontier:
                for p in preds[q]:
                    if dist[p] == float("inf"):
                        dist[p] = dist[q] + 1.0
                        nxt.append(p)
            frontier = sorted(nxt)
        return dist

    def weight(self, state: int) -> float:
        """Feasibility weight; zero for states that cannot reach acceptance."""
        dist = self.dist_from_acc[state]
        if state in self.base.accepting:
            dist = ACCEPTING_DIST
        if dist == float("inf"):
            return 0.0
        return (self.tree_cov[state] + 1.0) / (dist * (self.numsel[state] + 1.0) ** 2)

    def edge_weight(self, a: int, b: int) -> float:
        wa, wb = self.weight(a), self.weight(b)
        if wa <= 0.0 or wb <= 0.0:
            return float("inf")
        return 1.0 / (wa * wb)

    # -- planning -----------------------------------------------------------

    def plan_task(self, start: Optional[int] = None) -> "TaskPlan":
        """Cheapest accepting run from `start` under current weights.

        Uses a zero-heuristic best-first search (edge weights change
        every epoch, so no consistent nonzero heuristic exists).
        Increments ``numsel`` along the returned run.
        """
        q0 = self.base.initial if start is None else start
        best: dict[int, float] = {q0: 0.0}
        parent: dict[int, int] = {}
        heap = [(0.0, q0)]
        goal = None
        while heap:
            cost, q = heapq.heappop(heap)
            if cost > best.get(q, float("inf")):
                continue
            if q in self.base.accepting:
                goal = q
                break
            for target in self.successors(q):
                w = self.edge_weight(q, target)
                if w == float("inf"):
                    continue
                c = cost + w
                if c < best.get(target, float("inf")):
                    best[target] = c
                    parent[target] = q
                    heapq.heappush(heap, (c, target))
        if goal is None:
            self.raise_infeasible(q0)
        run = [goal]
        while run[-1] != q0:
            run.append(parent[run[-1]])
        run.reverse()
        for q in run:
            self.numsel[q] += 1
        return TaskPlan(states=tuple(run))

    def raise_infeasible(self, q0: int) -> None:
        """Explain why no accepting run is reachable from q0."""
        reachable = {q0}
        stack = [q0]
        while stack:
            q = stack.pop()
            for _, target in self.base.transitions[q]:
                if target not in reachable:
                    reachable.add(target)
                    stack.append(target)
        if reachable & self.base.accepting:
            letters = "; ".join(
                f"{{{pair.first}, {pair.second}}}: {pair.reason}" for pair in self.blocked
            )
            raise InfeasibleSpecificationError(
                "every accepting run requires a pruned letter; blocked pairs: "
                + (letters or "(none)")
            )
        raise InfeasibleSpecificationError(
            "no accepting state is reachable: the formula is unsatisfiable"
        )


@dataclass(frozen=True)
class TaskPlan:
    """An accepting run of the pruned automaton."""

    states: tuple[int, ...]

    def frontier(self, counts: Mapping[int, int]) -> tuple[int, ...]:
        """Run states currently holding at least one tree vertex."""
        return tuple(q for q in dict.fromkeys(self.states) if counts.get(q, 0) > 0)

    def successor_of(self, state: int) -> Optional[int]:
        for i, q in enumerate(self.states[:-1]):
            if q == state:
                return self.states[i + 1]
        return None


def prune_letters(
    dfa: Dfa,
    props: Sequence[AtomicProp],
    regions: Mapping[str, Polytope],
    adjacency: AdjacencyGraph,
) -> PrunedDfa:
    """Block geometrically impossible letters and wrap the automaton."""
    return PrunedDfa(dfa, conflicting_pairs(props, regions, adjacency))


def export_pruned_dot(pruned: PrunedDfa, name: str = "pruned") -> str:
    """DOT rendering with the blocking clause conjoined onto every guard."""
    base = pruned.base
    blocking = " & ".join(
        f"!({pair.first} & {pair.second})" for pair in pruned.blocked
    )
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in range(base.num_states):
        shape = "doublecircle" if q in base.accepting else "circle"
        lines.append(f'  q{q} [shape={shape}, label="q{q}"];')
    lines.append(f"  __start -> q{base.initial};")
    if pruned.blocked:
        lines.append('  sink [shape=circle, label="sink"];')
        blocked_expr = " | ".join(
            f"({pair.first} & {pair.second})" for pair in pruned.blocked
        )
        lines.append('  sink -> sink [label="true"];')
    for q, entries in enumerate(base.transitions):
        for guard, target in entries:
            label = guard.expression()
            if pruned.blocked and label != "false":
                label = f"({label}) & {blocking}" if label != "true" else blocking
            label = label.replace('"', r"\"")
            lines.append(f'  q{q} -> q{target} [label="{label}"];')
        if pruned.blocked:
            lines.append(f'  q{q} -> sink [label="{blocked_expr}"];')
    lines.append("}")
    return "\n".join(lines)
