"""Simplified-model guide layer: fast kinematic search that biases the
full belief search.

The simplified model moves a projected state at a fixed speed in a
sampled direction.  The "sba" kind keeps the full system's covariance
recursion alive along the lifted trajectory, so its guides know where
measurements are worth collecting; the "geometric" kind ignores
uncertainty and labels by mean membership alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import LinearGaussianSystem, propagate_covariances
from .task_graph import SINK, PrunedDfa, TaskPlan
from .tree import PointIndex

GuideLabeler = Callable[[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]], frozenset]


@dataclass(frozen=True)
class SimplifiedModel:
    """Projection and kinematics of the guide model.

    `projection` lists the full-state dimensions kept by the projected
    search (it must cover every region/workspace dimension); `lift`
    supplies values for the dropped dimensions when a projected state is
    lifted back (None entries are sampled uniformly when lifting sample
    targets).  `assumes_monotone_labels` records the scenario's claim
    that shrinking covariance never falsifies labels, the admissibility
    precondition for the "sba" kind.
    """

    projection: tuple[int, ...]
    kind: str  # "sba" | "geometric"
    v_max: float
    lift: tuple[Optional[float], ...]
    assumes_monotone_labels: bool = False

    def __post_init__(self):
        if self.kind not in ("sba", "geometric"):
            raise ValueError(f"unknown simplified-model kind {self.kind!r}")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    def lift_point(self, point: np.ndarray, full_dim: int) -> np.ndarray:
        """Deterministic lift: projected dims from the point, rest defaults."""
        full = np.zeros(full_dim)
        for i, value in enumerate(self.lift):
            if value is not None:
                full[i] = value
        full[list(self.projection)] = point
        return full


def fixed_speed_step(point: np.ndarray, direction: np.ndarray, v_max: float, dt: float) -> np.ndarray:
    """One kinematic step: displacement of norm v_max * dt along a unit direction."""
    direction = np.asarray(direction, dtype=float).reshape(-1)
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        raise ValueError("direction must be nonzero")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("direction must have unit norm")
    return np.asarray(point, dtype=float) + v_max * dt * direction


@dataclass(frozen=True)
class GuidePath:
    """Projected waypoints annotated with automaton states."""

    points: np.ndarray  # (length, proj_dim)
    qs: tuple[int, ...]

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        if points.shape[0] != len(self.qs):
            raise ValueError("points and automaton states must align")

    def __len__(self) -> int:
        return len(self.qs)

    def check_speed(self, v_max: float, dt: float, tol: float = 1e-9) -> None:
        steps = np.diff(self.points, axis=0)
        if steps.size and np.max(np.linalg.norm(steps, axis=1)) > v_max * dt + tol:
            raise ValueError("guide path violates the speed constraint")

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "qs": list(self.qs)}


def segment_for(q: int, plan: TaskPlan, guide: GuidePath) -> GuidePath:
    """Sub-task relevant slice: first occurrence of q through its last,
    plus the entry that transitions into the plan's successor state.

    An absent q yields an empty segment; callers fall back to uniform
    sampling.
    """
    hits = [i for i, qi in enumerate(guide.qs) if qi == q]
    if not hits:
        return GuidePath(np.zeros((0, guide.points.shape[1])), ())
    first, last = hits[0], hits[-1]
    end = last
    successor = plan.successor_of(q)
    if successor is not None and last + 1 < len(guide) and guide.qs[last + 1] == successor:
        end = last + 1
    return GuidePath(guide.points[first:end + 1], guide.qs[first:end + 1])


def uniform_target(state_low: np.ndarray, state_high: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(state_low, state_high)


def biased_target(
    segment: GuidePath,
    radius: float,
    bias_prob: float,
    model: SimplifiedModel,
    state_low: np.ndarray,
    state_high: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample a full-state target near the guide segment.

    With probability `bias_prob` (and a nonempty segment) the projected
    component is drawn uniformly from a radius ball around a random
    segment waypoint; otherwise the target is uniform over the state
    box.  Unprojected dimensions take their lift defaults, or a uniform
    draw where no default is declared.
    """
    if not 0.0 <= bias_prob <= 1.0:
        raise ValueError("bias probability must lie in [0, 1]")
    if radius <= 0.0:
        raise ValueError("bias radius must be positive")
    if rng.random() >= bias_prob or len(segment) == 0:
        return rng.uniform(state_low, state_high)
    proj = list(model.projection)
    dim = len(proj)
    low, high = state_low[proj], state_high[proj]
    point = None
    for _ in range(8):
        waypoint = segment.points[int(rng.integers(len(segment)))]
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        candidate = waypoint + direction / norm * radius * rng.random() ** (1.0 / dim)
        if np.all(candidate >= low) and np.all(candidate <= high):
            point = candidate
            break
    if point is None:
        # ball mass mostly outside the workspace: biasing fades to uniform
        return rng.uniform(state_low, state_high)
    target = np.empty(len(state_low))
    for i in range(len(state_low)):
        value = model.lift[i] if i < len(model.lift) else None
        target[i] = value if value is not None else rng.uniform(state_low[i], state_high[i])
    target[proj] = point
    return target


@dataclass
class _GuideVertex:
    index: int
    point: np.ndarray
    q: int
    parent: Optional[int]
    est_cov: Optional[np.ndarray]
    dev_cov: Optional[np.ndarray]


class GuideSearch:
    """Persistent kinematic tree searching for an accepting guide path."""

    def __init__(
        self,
        model: SimplifiedModel,
        sys: LinearGaussianSystem,
        pruned: PrunedDfa,
        init_state: np.ndarray,
        init_est_cov: np.ndarray,
        labeler: GuideLabeler,
    ):
        self.model = model
        self.sys = sys
        self.pruned = pruned
        self.labeler = labeler
        proj = list(model.projection)
        self.low = sys.state_low[proj]
        self.high = sys.state_high[proj]
        point = np.asarray(init_state, dtype=float)[proj]
        if model.kind == "sba":
            est = np.array(init_est_cov, dtype=float)
            dev = np.zeros_like(est)
        else:
            est = dev = None
        label = labeler(point, est, dev)
        if pruned.symbol_blocked(label):
            raise ValueError("initial guide label is a pruned symbol")
        root_q = pruned.step(pruned.base.initial, label)
        self.vertices: list[_GuideVertex] = []
        self._index = PointIndex(len(proj))
        self._add(point, root_q, None, est, dev)

    def _add(self, point, q, parent, est, dev) -> _GuideVertex:
        vertex = _GuideVertex(len(self.vertices), np.asarray(point, float), q, parent, est, dev)
        self.vertices.append(vertex)
        self._index.add(q, vertex.point, vertex.index)
        return vertex

    @property
    def root_q(self) -> int:
        return self.vertices[0].q

    def frontier(self, plan: TaskPlan) -> tuple[int, ...]:
        return plan.frontier({q: self._index.count(q) for q in plan.states})

    def _extend(self, plan: TaskPlan, rng: np.random.Generator, max_steps: int) -> Optional[_GuideVertex]:
        frontier = self.frontier(plan)
        if not frontier:
            # the guide's own labels may start it off the planned run
            # (geometric labels can differ from belief labels at the root)
            frontier = tuple(q for q, n in self._index.counts().items() if n > 0)
        if not frontier:
            return None
        q_sel = frontier[int(rng.integers(len(frontier)))]
        target = rng.uniform(self.low, self.high)
        source = self.vertices[self._index.nearest(q_sel, target)]
        direction = target - source.point
        norm = float(np.linalg.norm(direction))
        if norm < 1e-9:
            return None
        direction = direction / norm
        vertex = source
        step_len = self.model.v_max * self.sys.dt
        for _ in range(max_steps):
            point = vertex.point + step_len * direction
            if np.any(point < self.low) or np.any(point > self.high):
                return None
            if self.model.kind == "sba":
                lifted = self.model.lift_point(point, self.sys.state_dim)
                est, dev = propagate_covariances(self.sys, vertex.est_cov, vertex.dev_cov, lifted)
            else:
                est = dev = None
            label = self.labeler(point, est, dev)
            if self.pruned.symbol_blocked(label):
                return None
            q = self.pruned.step(vertex.q, label)
            if q == SINK or self.pruned.dist_from_acc[q] == float("inf"):
                return None
            vertex = self._add(point, q, vertex.index, est, dev)
            if q in self.pruned.base.accepting:
                return vertex
        return vertex

    def grow(self, plan: TaskPlan, iterations: int, rng: np.random.Generator,
             max_steps: int = 5) -> Optional[GuidePath]:
        """Run extension attempts; return a path when one reaches acceptance."""
        for _ in range(iterations):
            vertex = self._extend(plan, rng, max_steps)
            if vertex is not None and vertex.q in self.pruned.base.accepting:
                return self.extract(vertex)
        return None

    def extract(self, vertex: _GuideVertex) -> GuidePath:
        chain = []
        cur: Optional[_GuideVertex] = vertex
        while cur is not None:
            chain.append(cur)
            cur = self.vertices[cur.parent] if cur.parent is not None else None
        chain.reverse()
        points = np.array([v.point for v in chain])
        qs = tuple(v.q for v in chain)
        return GuidePath(points, qs)


def plan_guide(
    model: SimplifiedModel,
    sys: LinearGaussianSystem,
    pruned: PrunedDfa,
    plan: TaskPlan,
    init_state: np.ndarray,
    init_est_cov: np.ndarray,
    labeler: GuideLabeler,
    iterations: int,
    rng: np.random.Generator,
    max_steps: int = 5,
) -> Optional[GuidePath]:
    """One-shot guide search with a fresh tree (see GuideSearch for reuse)."""
    search = GuideSearch(model, sys, pruned, init_state, init_est_cov, labeler)
    return search.grow(plan, iterations, rng, max_steps=max_steps)
