"""Convex polytopic regions, chance-constraint bounds and belief labeling.

Regions are intersections of unit-normal halfspaces `a.x <= b`.  The
probability of a Gaussian belief lying inside (or outside) a region is
bounded in closed form: a union bound over face tails for containment,
the best separating face for avoidance.  Both bounds are conservative,
which is what makes label words trustworthy downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import ndtr

from .errors import InvalidCovarianceError, UnboundedRegionError

REMAINDER = "remainder"

#: interior-overlap margin and closure-adjacency tolerance, workspace units
INTERIOR_MARGIN = 1e-9
ADJACENCY_TOL = 1e-6

_COV_TOL = 1e-9


@dataclass(frozen=True)
class Polytope:
    """Bounded convex region {x : normals @ x <= offsets}, unit normals."""

    name: str
    normals: np.ndarray  # (n_faces, dim)
    offsets: np.ndarray  # (n_faces,)

    def __post_init__(self):
        normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError("face count mismatch between normals and offsets")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError(f"region {self.name!r} has a zero normal")
        normals = normals / norms[:, None]
        offsets = offsets / norms
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @classmethod
    def from_halfspaces(cls, name: str, halfspaces: Iterable[tuple[Sequence[float], float]]) -> "Polytope":
        pairs = list(halfspaces)
        normals = np.array([a for a, _ in pairs], dtype=float)
        offsets = np.array([b for _, b in pairs], dtype=float)
        return cls(name, normals, offsets)

    @classmethod
    def from_vertices(cls, name: str, vertices: Sequence[Sequence[float]]) -> "Polytope":
        verts = np.atleast_2d(np.asarray(vertices, dtype=float))
        dim = verts.shape[1]
        if dim == 1:
            lo, hi = float(verts.min()), float(verts.max())
            if hi - lo < 1e-12:
                raise UnboundedRegionError(f"region {name!r} has empty interior")
            return cls(name, np.array([[-1.0], [1.0]]), np.array([-lo, hi]))
        from scipy.spatial import ConvexHull  # deferred: qhull import is slow

        try:
            hull = ConvexHull(verts)
        except Exception as exc:  # qhull raises its own error type
            raise UnboundedRegionError(f"region {name!r}: degenerate vertex set ({exc})") from exc
        # hull.equations rows are [normal, offset] with normal.x + offset <= 0
        normals = hull.equations[:, :-1]
        offsets = -hull.equations[:, -1]
        return cls(name, normals, offsets)

    def contains(self, point: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.normals @ np.asarray(point, float) <= self.offsets + tol))

    def validate_bounded_interior(self) -> None:
        """Raise unless the region is bounded with nonempty interior."""
        dim = self.dim
        for i in range(dim):
            for sign in (1.0, -1.0):
                c = np.zeros(dim)
                c[i] = sign
                res = linprog(c, A_ub=self.normals, b_ub=self.offsets,
                              bounds=[(None, None)] * dim, method="highs")
                if res.status == 3:
                    raise UnboundedRegionError(f"region {self.name!r} is unbounded")
                if res.status == 2:
                    raise UnboundedRegionError(f"region {self.name!r} is empty")
        if self.inradius() <= 0:
            raise UnboundedRegionError(f"region {self.name!r} has empty interior")

    def inradius(self) -> float:
        """Radius of the largest ball inside the region (Chebyshev LP)."""
        dim = self.dim
        c = np.zeros(dim + 1)
        c[-1] = -1.0
        a_ub = np.hstack([self.normals, np.ones((self.normals.shape[0], 1))])
        res = linprog(c, A_ub=a_ub, b_ub=self.offsets,
                      bounds=[(None, None)] * dim + [(0, None)], method="highs")
        if not res.success:
            return 0.0
        return float(res.x[-1])

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        dim = self.dim
        lo = np.empty(dim)
        hi = np.empty(dim)
        for i in range(dim):
            c = np.zeros(dim)
            c[i] = 1.0
            lo[i] = linprog(c, A_ub=self.normals, b_ub=self.offsets,
                            bounds=[(None, None)] * dim, method="highs").x[i]
            hi[i] = -1 * linprog(-c, A_ub=self.normals, b_ub=self.offsets,
                                 bounds=[(None, None)] * dim, method="highs").fun
        return lo, hi


@dataclass(frozen=True)
class AtomicProp:
    """Chance-constrained proposition over a region.

    A reach proposition holds when the belief lies in the region with
    probability above 1 - alpha; an avoid proposition holds when the
    belief lies outside with probability at least 1 - alpha.
    """

    name: str
    region: str
    alpha: float
    polarity: Literal["reach", "avoid"]

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"proposition {self.name!r}: alpha must be in [0, 1]")
        if self.polarity not in ("reach", "avoid"):
            raise ValueError(f"proposition {self.name!r}: polarity must be reach or avoid")


def check_covariance(cov: np.ndarray, tol: float = _COV_TOL) -> np.ndarray:
    """Validate symmetry and positive semidefiniteness."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.shape[0] != cov.shape[1]:
        raise InvalidCovarianceError(f"covariance is not square: shape {cov.shape}")
    if np.max(np.abs(cov - cov.T)) > tol:
        raise InvalidCovarianceError("covariance is not symmetric")
    eigmin = float(np.linalg.eigvalsh(cov).min())
    if eigmin < -tol:
        raise InvalidCovarianceError(f"covariance has negative eigenvalue {eigmin:.3e}")
    return cov


def halfspace_prob(mean, cov, normal, offset, *, _checked: bool = False) -> float:
    """Exact P(normal . x <= offset) for x ~ N(mean, cov).

    Degenerate direction (zero variance along the normal) collapses to
    the indicator of the mean satisfying the halfspace.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    if not _checked:
        cov = check_covariance(cov)
    normal = np.asarray(normal, dtype=float).reshape(-1)
    var = float(normal @ cov @ normal)
    slack = float(offset) - float(normal @ mean)
    if var <= 0.0:
        return 1.0 if slack >= 0.0 else 0.0
    return float(ndtr(slack / np.sqrt(var)))


def _face_exit_probs(mean, cov, region: Polytope) -> np.ndarray:
    """P(normal_j . x > offset_j) for every face, vectorized.

    Zero-variance directions collapse to indicators on the mean.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    slack = region.offsets - region.normals @ mean
    var = np.einsum("ij,jk,ik->i", region.normals, np.asarray(cov, dtype=float),
                    region.normals)
    tails = np.empty_like(slack)
    degenerate = var <= 0.0
    tails[degenerate] = np.where(slack[degenerate] >= 0.0, 0.0, 1.0)
    live = ~degenerate
    tails[live] = ndtr(-slack[live] / np.sqrt(var[live]))
    return tails


def polytope_prob_lower_bound(mean, cov, region: Polytope, *, _checked: bool = False) -> float:
    """Union-bound lower bound on P(x in region)."""
    if not _checked:
        cov = check_covariance(cov)
    return max(0.0, 1.0 - float(_face_exit_probs(mean, cov, region).sum()))


def polytope_avoid_lower_bound(mean, cov, region: Polytope, *, _checked: bool = False) -> float:
    """Best-separating-face lower bound on P(x not in region)."""
    if not _checked:
        cov = check_covariance(cov)
    return float(_face_exit_probs(mean, cov, region).max())


def label_belief(
    mean,
    cov,
    props: Sequence[AtomicProp],
    regions: Mapping[str, Polytope],
    *,
    _checked: bool = False,
) -> frozenset[str]:
    """Conservative label: the set of propositions provably true.

    Reach propositions require the containment lower bound to exceed
    1 - alpha strictly; avoid propositions require the avoidance lower
    bound to reach 1 - alpha.  Means and covariances live in region
    (workspace) coordinates.
    """
    if not _checked:
        cov = check_covariance(cov)
    true_props = []
    for prop in props:
        region = regions.get(prop.region)
        if region is None:
            raise KeyError(f"proposition {prop.name!r} references unknown region {prop.region!r}")
        if prop.polarity == "reach":
            if polytope_prob_lower_bound(mean, cov, region, _checked=True) > 1.0 - prop.alpha:
                true_props.append(prop.name)
        else:
            if polytope_avoid_lower_bound(mean, cov, region, _checked=True) >= 1.0 - prop.alpha:
                true_props.append(prop.name)
    return frozenset(true_props)


# ---------------------------------------------------------------------------
# Region adjacency
# ---------------------------------------------------------------------------

EdgeKind = Literal["adjacent", "intersecting"]


@dataclass(frozen=True)
class AdjacencyGraph:
    """Symmetric region graph; `remainder` stands for the free workspace."""

    nodes: tuple[str, ...]
    edges: Mapping[frozenset, EdgeKind] = field(default_factory=dict)

    def kind(self, a: str, b: str) -> Optional[EdgeKind]:
        return self.edges.get(frozenset((a, b)))

    def intersecting(self, a: str, b: str) -> bool:
        return self.kind(a, b) == "intersecting"

    def connected(self, a: str, b: str) -> bool:
        return self.kind(a, b) is not None


def _joint_margin(p: Polytope, q: Polytope, ws_low: np.ndarray, ws_high: np.ndarray) -> float:
    """Largest t with some x satisfying both polytopes shrunk by t.

    Positive t means the interiors overlap by a ball of radius t;
    t == 0 means the closures touch; negative t measures separation
    (both polytopes inflated by |t| just meet).
    """
    a_faces = np.vstack([p.normals, q.normals])
    b_faces = np.concatenate([p.offsets, q.offsets])
    a_ub = np.hstack([a_faces, np.ones((a_faces.shape[0], 1))])
    diam = float(np.linalg.norm(ws_high - ws_low)) + 1.0
    c = np.zeros(p.dim + 1)
    c[-1] = -1.0
    bounds = list(zip(ws_low, ws_high)) + [(-diam, diam)]
    res = linprog(c, A_ub=a_ub, b_ub=b_faces, bounds=bounds, method="highs")
    if not res.success:
        return -np.inf
    return float(res.x[-1])


def build_adjacency_graph(
    regions: Sequence[Polytope],
    ws_low,
    ws_high,
    adjacency_tol: float = ADJACENCY_TOL,
    interior_margin: float = INTERIOR_MARGIN,
) -> AdjacencyGraph:
    """Pairwise overlap/adjacency via LP feasibility.

    Interiors overlapping (with a tiny margin) gives an intersecting
    edge; closures within `adjacency_tol` but disjoint interiors gives
    an adjacent edge.  Every region also connects to the remainder
    node: a false adjacency only weakens downstream pruning, never its
    soundness.
    """
    ws_low = np.asarray(ws_low, dtype=float).reshape(-1)
    ws_high = np.asarray(ws_high, dtype=float).reshape(-1)
    for region in regions:
        region.validate_bounded_interior()
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise ValueError("duplicate region names")
    edges: dict[frozenset, EdgeKind] = {}
    for i, p in enumerate(regions):
        for q in regions[i + 1:]:
            margin = _joint_margin(p, q, ws_low, ws_high)
            if margin > interior_margin:
                edges[frozenset((p.name, q.name))] = "intersecting"
            elif margin >= -adjacency_tol:
                edges[frozenset((p.name, q.name))] = "adjacent"
    for name in names:
        edges[frozenset((name, REMAINDER))] = "adjacent"
    return AdjacencyGraph(nodes=tuple(names) + (REMAINDER,), edges=edges)


def polytope_contains(outer: Polytope, inner: Polytope, tol: float = 1e-9) -> bool:
    """True when every point of `inner` satisfies every face of `outer`."""
    bounds = [(None, None)] * inner.dim
    for normal, offset in zip(outer.normals, outer.offsets):
        res = linprog(-normal, A_ub=inner.normals, b_ub=inner.offsets,
                      bounds=bounds, method="highs")
        if not res.success:
            return False
        if -res.fun > offset + tol:
            return False
    return True


def workspace_marginal(mean, cov, dims: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Extract the workspace block of a full-state mean and covariance."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    idx = np.asarray(dims, dtype=int)
    return mean[idx], cov[np.ix_(idx, idx)]
