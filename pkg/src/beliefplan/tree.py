"""Hybrid belief tree: Gaussian belief vertices annotated with automaton states.

Each extension samples an automaton state from the current task plan's
frontier, steers the nearest vertex of that state toward a sampled
target with a single clamped control held for several steps, and
propagates belief, label and automaton state together.  A vertex is kept
only if every intermediate step stays inside the state box and every
label drives an unpruned transition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dfa import Dfa
from .dynamics import Belief, LinearGaussianSystem, NominalPlan, propagate_belief
from .errors import BoundsViolationError
from .task_graph import SINK, PrunedDfa, TaskPlan

Labeler = Callable[[Belief], frozenset]
TargetSampler = Callable[[int, np.random.Generator], np.ndarray]


def check_accepting(vertex: "TreeVertex", dfa: Dfa) -> bool:
    """True when the vertex's discrete component is an accepting state."""
    return vertex.q in dfa.accepting


class PointIndex:
    """Per-automaton-state growing buffers for nearest-neighbor queries."""

    def __init__(self, dim: int):
        self.dim = dim
        self._buffers: dict[int, np.ndarray] = {}
        self._sizes: dict[int, int] = {}
        self._ids: dict[int, list[int]] = {}

    def add(self, state: int, point: np.ndarray, item: int) -> None:
        buf = self._buffers.get(state)
        size = self._sizes.get(state, 0)
        if buf is None:
            buf = np.empty((8, self.dim))
            self._buffers[state] = buf
            self._ids[state] = []
        elif size == buf.shape[0]:
            buf = np.vstack([buf, np.empty_like(buf)])
            self._buffers[state] = buf
        buf[size] = point
        self._sizes[state] = size + 1
        self._ids[state].append(item)

    def count(self, state: int) -> int:
        return self._sizes.get(state, 0)

    def counts(self) -> dict[int, int]:
        return {q: n for q, n in sorted(self._sizes.items())}

    def nearest(self, state: int, target: np.ndarray) -> int:
        size = self._sizes.get(state, 0)
        if size == 0:
            raise KeyError(f"no points for automaton state {state}")
        pts = self._buffers[state][:size]
        dist = np.einsum("ij,ij->i", pts - target, pts - target)
        return self._ids[state][int(np.argmin(dist))]


@dataclass
class TreeVertex:
    index: int
    belief: Belief
    q: int
    parent: Optional[int]
    controls: np.ndarray  # (steps, m) applied from the parent vertex
    depth: int  # propagation steps from the root


class BeliefTree:
    """Single-writer search tree over (belief, automaton state) vertices."""

    def __init__(self, root_belief: Belief, root_q: int):
        self.vertices: list[TreeVertex] = []
        self._index = PointIndex(root_belief.dim)
        self.blocked_label_events = 0
        self._add(root_belief, root_q, None, np.zeros((0, 0)), 0)

    def _add(self, belief: Belief, q: int, parent: Optional[int],
             controls: np.ndarray, depth: int) -> TreeVertex:
        vertex = TreeVertex(len(self.vertices), belief, q, parent, controls, depth)
        self.vertices.append(vertex)
        self._index.add(q, belief.mean, vertex.index)
        return vertex

    @property
    def root(self) -> TreeVertex:
        return self.vertices[0]

    def __len__(self) -> int:
        return len(self.vertices)

    def counts_by_state(self) -> dict[int, int]:
        return self._index.counts()

    def frontier(self, plan: TaskPlan) -> tuple[int, ...]:
        return plan.frontier({q: self._index.count(q) for q in plan.states})

    def nearest(self, q: int, target: np.ndarray) -> TreeVertex:
        return self.vertices[self._index.nearest(q, target)]

    def extend(
        self,
        sys: LinearGaussianSystem,
        pruned: PrunedDfa,
        plan: TaskPlan,
        sampler: TargetSampler,
        labeler: Labeler,
        rng: np.random.Generator,
        max_steps: int = 5,
    ) -> Optional[TreeVertex]:
        """One extension attempt; returns the new vertex or None.

        Stops early as soon as the propagated automaton state becomes
        accepting, so solution vertices appear at the step that first
        discharges the specification.
        """
        frontier = self.frontier(plan)
        if not frontier:
            return None
        q_sel = frontier[int(rng.integers(len(frontier)))]
        target = sampler(q_sel, rng)
        source = self.nearest(q_sel, target)

        control = sys.steer_control(source.belief.mean, target)
        belief = source.belief
        q = source.q
        steps = 0
        for _ in range(max_steps):
            try:
                nxt = propagate_belief(sys, belief, control)
            except BoundsViolationError:
                break  # keep the valid prefix
            label = labeler(nxt)
            if pruned.symbol_blocked(label):
                # pruning is sound for reachable beliefs; count defensively
                self.blocked_label_events += 1
                break
            q_next = pruned.step(q, label)
            if q_next == SINK:
                self.blocked_label_events += 1
                break
            if pruned.dist_from_acc[q_next] == float("inf"):
                break  # dead automaton state: no run through it accepts
            belief, q = nxt, q_next
            steps += 1
            if q in pruned.base.accepting:
                break
        if steps == 0:
            return None
        controls = np.tile(control, (steps, 1))
        return self._add(belief, q, source.index, controls, source.depth + steps)

    def extract(
        self,
        vertex: TreeVertex,
        sys: LinearGaussianSystem,
        base_dfa: Dfa,
        labeler: Labeler,
    ) -> tuple[NominalPlan, list[Belief], list[frozenset], list[int]]:
        """Root-to-vertex plan with replayed beliefs, labels and run.

        Replays the concatenated controls from the root and checks the
        stored vertices bit-exactly; the word is then verified against
        the unpruned automaton.  Failures here indicate planner bugs,
        hence assertions.
        """
        chain = []
        cur: Optional[TreeVertex] = vertex
        while cur is not None:
            chain.append(cur)
            cur = self.vertices[cur.parent] if cur.parent is not None else None
        chain.reverse()
        assert chain[0].index == 0, "chain must start at the root"

        controls = [v.controls for v in chain[1:] if v.controls.size]
        stacked = np.vstack(controls) if controls else np.zeros((0, sys.input_dim))

        beliefs = [chain[0].belief]
        word = [labeler(chain[0].belief)]
        run = [base_dfa.step(base_dfa.initial, word[0])]
        assert run[0] == chain[0].q, "root automaton state mismatch"
        offsets = {0: chain[0]}
        pos = 0
        for v in chain[1:]:
            pos += v.controls.shape[0]
            offsets[pos] = v
        for k, u in enumerate(stacked):
            beliefs.append(propagate_belief(sys, beliefs[-1], u))
            label = labeler(beliefs[-1])
            word.append(label)
            run.append(base_dfa.step(run[-1], label))
            marker = offsets.get(k + 1)
            if marker is not None:
                assert np.array_equal(marker.belief.mean, beliefs[-1].mean), \
                    "replayed mean diverged from stored vertex"
                assert np.array_equal(marker.belief.est_cov, beliefs[-1].est_cov)
                assert np.array_equal(marker.belief.dev_cov, beliefs[-1].dev_cov)
                assert marker.q == run[-1], "replayed automaton state diverged"
        assert run[-1] in base_dfa.accepting, "extracted word is not accepted"
        plan = NominalPlan(stacked, np.array([b.mean for b in beliefs]))
        return plan, beliefs, word, run

    def to_dict(self) -> dict:
        """JSON-ready snapshot (vertices, parents, automaton states)."""
        return {
            "vertices": [
                {
                    "id": v.index,
                    "mean": v.belief.mean.tolist(),
                    "est_cov": v.belief.est_cov.tolist(),
                    "dev_cov": v.belief.dev_cov.tolist(),
                    "q": v.q,
                    "parent": v.parent,
                    "depth": v.depth,
                }
                for v in self.vertices
            ],
            "blocked_label_events": self.blocked_label_events,
        }
