"""Scenario files: schema validation and wiring into planner objects.

A scenario is a JSON document describing the system matrices, the
workspace and its regions, the chance-constrained propositions, the
formula, measurement zones, the initial belief and the simplified guide
model.  Validation errors carry a JSON-pointer-style path to the
offending field.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

import numpy as np

from . import ltlf
from .dynamics import LinearGaussianSystem, MeasurementZone, lqr_gain
from .errors import ScenarioError, ScenarioWarning
from .geometry import (
    REMAINDER,
    AtomicProp,
    Polytope,
    check_covariance,
    workspace_marginal,
)
from .guide import SimplifiedModel

_NAME_RE = re.compile(r"^[A-Za-z_]\w*$")
_RESERVED = {"X", "U", "F", "G", "true", "false", REMAINDER}


def _require(raw: Mapping, key: str, pointer: str):
    if key not in raw:
        raise ScenarioError(f"{pointer}/{key}", "missing required field")
    return raw[key]


def _matrix(value, pointer: str, shape=None) -> np.ndarray:
    try:
        mat = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(pointer, f"not a numeric matrix: {exc}") from None
    if mat.ndim == 1:
        mat = mat.reshape(1, -1) if shape is None or shape[0] == 1 else mat.reshape(-1, 1)
    if shape is not None and mat.shape != tuple(shape):
        raise ScenarioError(pointer, f"expected shape {tuple(shape)}, got {mat.shape}")
    return mat


def _vector(value, pointer: str, length=None) -> np.ndarray:
    try:
        vec = np.array(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(pointer, f"not a numeric vector: {exc}") from None
    if length is not None and vec.shape[0] != length:
        raise ScenarioError(pointer, f"expected length {length}, got {vec.shape[0]}")
    return vec


def _noise_matrix(value, pointer: str, size: int) -> Optional[np.ndarray]:
    if value is None or value == "none":
        return None
    mat = _matrix(value, pointer, (size, size))
    try:
        check_covariance(mat)
    except Exception as exc:
        raise ScenarioError(pointer, str(exc)) from None
    return mat


@dataclass
class Scenario:
    """Validated in-memory scenario."""

    name: str
    system: LinearGaussianSystem
    regions: dict[str, Polytope]
    props: tuple[AtomicProp, ...]
    formula: str
    ast: ltlf.Formula
    initial_mean: np.ndarray
    initial_cov: np.ndarray
    ws_dims: tuple[int, ...]
    ws_low: np.ndarray
    ws_high: np.ndarray
    simba: Optional[SimplifiedModel]
    raw: dict

    @property
    def prop_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.props)

    def labeler(self) -> Callable:
        """Belief -> conservative label over the workspace marginal."""
        from .geometry import label_belief

        dims = self.ws_dims
        props = self.props
        regions = self.regions

        def _label(belief) -> frozenset:
            # propagation symmetrizes covariances, so skip re-validation
            mean, cov = workspace_marginal(belief.mean, belief.total_cov, dims)
            return label_belief(mean, cov, props, regions, _checked=True)

        return _label

    def guide_labeler(self, model: SimplifiedModel) -> Callable:
        """Projected-point labeler for the guide layer.

        The "sba" kind labels with the tracked covariance marginal; the
        geometric kind uses a zero covariance, i.e. mean membership.
        """
        from .geometry import label_belief

        proj = list(model.projection)
        ws_pos = [proj.index(d) for d in self.ws_dims]
        dims = self.ws_dims
        props = self.props
        regions = self.regions
        zero = np.zeros((len(dims), len(dims)))

        def _label(point, est_cov, dev_cov) -> frozenset:
            mean = np.asarray(point, dtype=float)[ws_pos]
            if est_cov is None:
                cov = zero
            else:
                _, cov = workspace_marginal(
                    np.zeros(self.system.state_dim), est_cov + dev_cov, dims
                )
            return label_belief(mean, cov, props, regions, _checked=True)

        return _label

    def min_region_inradius(self) -> float:
        radii = [r.inradius() for r in self.regions.values()]
        return min(radii) if radii else float("inf")

    def max_step_displacement(self) -> float:
        """Largest one-step workspace displacement over the state/input boxes.

        The displacement (A - I) x + B u is linear, so the maximum of its
        workspace norm is attained at box corners.
        """
        sys = self.system
        n, m = sys.state_dim, sys.input_dim
        ws = list(self.ws_dims)
        drift = (sys.a - np.eye(n))[ws]
        push = sys.b[ws]
        # row-wise worst case per corner sign pattern is just interval arithmetic
        drift_hi = np.maximum(drift, 0.0) @ sys.state_high + np.minimum(drift, 0.0) @ sys.state_low
        drift_lo = np.minimum(drift, 0.0) @ sys.state_high + np.maximum(drift, 0.0) @ sys.state_low
        push_hi = np.maximum(push, 0.0) @ sys.input_high + np.minimum(push, 0.0) @ sys.input_low
        push_lo = np.minimum(push, 0.0) @ sys.input_high + np.maximum(push, 0.0) @ sys.input_low
        worst = np.maximum(np.abs(drift_hi + push_hi), np.abs(drift_lo + push_lo))
        best = float(np.linalg.norm(worst))
        if self.simba is not None:
            best = max(best, self.simba.v_max * sys.dt)
        return best


def _parse_region(entry, pointer: str, dim: int) -> Polytope:
    name = _require(entry, "name", pointer)
    if not isinstance(name, str) or not _NAME_RE.match(name) or name in _RESERVED:
        raise ScenarioError(f"{pointer}/name", f"invalid region name {name!r}")
    if "vertices" in entry:
        verts = _matrix(entry["vertices"], f"{pointer}/vertices")
        if verts.shape[1] != dim:
            raise ScenarioError(
                f"{pointer}/vertices", f"vertices must have {dim} coordinates"
            )
        return Polytope.from_vertices(name, verts)
    if "halfspaces" in entry:
        pairs = []
        for i, hs in enumerate(entry["halfspaces"]):
            normal = _vector(_require(hs, "normal", f"{pointer}/halfspaces/{i}"),
                             f"{pointer}/halfspaces/{i}/normal", dim)
            offset = _require(hs, "offset", f"{pointer}/halfspaces/{i}")
            pairs.append((normal, float(offset)))
        return Polytope.from_halfspaces(name, pairs)
    raise ScenarioError(pointer, "region needs either vertices or halfspaces")


def load_scenario(source: Union[str, Path, Mapping]) -> Scenario:
    """Load and validate a scenario from a path, JSON text or dict."""
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ScenarioError("/", f"no such file: {path}") from None
        except json.JSONDecodeError as exc:
            raise ScenarioError("/", f"invalid JSON: {exc}") from None

    name = raw.get("name", "scenario")

    ws = _require(raw, "workspace", "")
    ws_dims = tuple(int(d) for d in _require(ws, "dims", "/workspace"))
    if len(set(ws_dims)) != len(ws_dims):
        raise ScenarioError("/workspace/dims", "duplicate dimensions")
    ws_low = _vector(_require(ws, "low", "/workspace"), "/workspace/low", len(ws_dims))
    ws_high = _vector(_require(ws, "high", "/workspace"), "/workspace/high", len(ws_dims))
    if np.any(ws_high <= ws_low):
        raise ScenarioError("/workspace", "high must exceed low")

    sysraw = _require(raw, "system", "")
    a = _matrix(_require(sysraw, "A", "/system"), "/system/A")
    n = a.shape[0]
    if a.shape != (n, n):
        raise ScenarioError("/system/A", "A must be square")
    b = _matrix(_require(sysraw, "B", "/system"), "/system/B")
    if b.shape[0] != n:
        raise ScenarioError("/system/B", f"B must have {n} rows, got {b.shape}")
    m = b.shape[1]
    c = _matrix(_require(sysraw, "C", "/system"), "/system/C")
    if c.shape[1] != n:
        raise ScenarioError("/system/C", f"C must have {n} columns, got {c.shape}")
    p = c.shape[0]
    d = _matrix(sysraw.get("D", np.zeros((p, m))), "/system/D", (p, m))
    q = _matrix(_require(sysraw, "Q", "/system"), "/system/Q", (n, n))
    try:
        check_covariance(q)
    except Exception as exc:
        raise ScenarioError("/system/Q", str(exc)) from None
    dt = float(sysraw.get("dt", 1.0))
    if dt <= 0:
        raise ScenarioError("/system/dt", "dt must be positive")
    if max(ws_dims) >= n:
        raise ScenarioError("/workspace/dims", f"dimension out of range for n={n}")

    bounds = _require(sysraw, "input_bounds", "/system")
    input_low = _vector(_require(bounds, "low", "/system/input_bounds"),
                        "/system/input_bounds/low", m)
    input_high = _vector(_require(bounds, "high", "/system/input_bounds"),
                         "/system/input_bounds/high", m)
    bounds = _require(sysraw, "state_bounds", "/system")
    state_low = _vector(_require(bounds, "low", "/system/state_bounds"),
                        "/system/state_bounds/low", n)
    state_high = _vector(_require(bounds, "high", "/system/state_bounds"),
                         "/system/state_bounds/high", n)

    if "K" in sysraw:
        gain = _matrix(sysraw["K"], "/system/K", (m, n))
    elif "lqr" in sysraw:
        lqr = sysraw["lqr"]
        gain = lqr_gain(
            a, b,
            _matrix(_require(lqr, "state_weight", "/system/lqr"), "/system/lqr/state_weight", (n, n)),
            _matrix(_require(lqr, "input_weight", "/system/lqr"), "/system/lqr/input_weight", (m, m)),
        )
    else:
        raise ScenarioError("/system", "either K or lqr weights are required")

    dim = len(ws_dims)
    regions: dict[str, Polytope] = {}
    for i, entry in enumerate(raw.get("regions", [])):
        region = _parse_region(entry, f"/regions/{i}", dim)
        if region.name in regions:
            raise ScenarioError(f"/regions/{i}/name", f"duplicate region {region.name!r}")
        try:
            region.validate_bounded_interior()
        except Exception as exc:
            raise ScenarioError(f"/regions/{i}", str(exc)) from None
        regions[region.name] = region

    props: list[AtomicProp] = []
    seen = set()
    for i, entry in enumerate(raw.get("propositions", [])):
        pname = _require(entry, "name", f"/propositions/{i}")
        if not isinstance(pname, str) or not _NAME_RE.match(pname) or pname in _RESERVED:
            raise ScenarioError(f"/propositions/{i}/name", f"invalid name {pname!r}")
        if pname in seen:
            raise ScenarioError(f"/propositions/{i}/name", f"duplicate proposition {pname!r}")
        seen.add(pname)
        region = _require(entry, "region", f"/propositions/{i}")
        if region not in regions:
            raise ScenarioError(
                f"/propositions/{i}/region", f"references undeclared region {region!r}"
            )
        try:
            prop = AtomicProp(
                pname, region,
                float(_require(entry, "alpha", f"/propositions/{i}")),
                _require(entry, "polarity", f"/propositions/{i}"),
            )
        except ValueError as exc:
            raise ScenarioError(f"/propositions/{i}", str(exc)) from None
        props.append(prop)

    zones = []
    for i, entry in enumerate(raw.get("measurement_zones", [])):
        zname = _require(entry, "region", f"/measurement_zones/{i}")
        if zname not in regions:
            raise ScenarioError(
                f"/measurement_zones/{i}/region", f"references undeclared region {zname!r}"
            )
        noise = _noise_matrix(_require(entry, "R", f"/measurement_zones/{i}"),
                              f"/measurement_zones/{i}/R", p)
        zones.append(MeasurementZone(regions[zname], noise))
    default_noise = _noise_matrix(raw.get("default_R", "none"), "/default_R", p)

    try:
        system = LinearGaussianSystem(
            a=a, b=b, c=c, d=d, process_cov=q, gain=gain,
            input_low=input_low, input_high=input_high,
            state_low=state_low, state_high=state_high,
            workspace_dims=ws_dims, dt=dt,
            zones=tuple(zones), default_noise_cov=default_noise,
        )
    except ValueError as exc:
        raise ScenarioError("/system", str(exc)) from None

    formula = _require(raw, "formula", "")
    try:
        ast = ltlf.parse_formula(formula, [pr.name for pr in props])
    except Exception as exc:
        raise ScenarioError("/formula", str(exc)) from None

    init = _require(raw, "initial_belief", "")
    initial_mean = _vector(_require(init, "mean", "/initial_belief"), "/initial_belief/mean", n)
    initial_cov = _matrix(_require(init, "cov", "/initial_belief"), "/initial_belief/cov", (n, n))
    try:
        check_covariance(initial_cov)
    except Exception as exc:
        raise ScenarioError("/initial_belief/cov", str(exc)) from None
    if np.any(initial_mean < state_low) or np.any(initial_mean > state_high):
        raise ScenarioError("/initial_belief/mean", "initial mean outside state bounds")

    simba = None
    if "simba" in raw:
        sraw = raw["simba"]
        projection = tuple(int(i) for i in _require(sraw, "projection", "/simba"))
        if any(i < 0 or i >= n for i in projection):
            raise ScenarioError("/simba/projection", "projection index out of range")
        if not set(ws_dims) <= set(projection):
            raise ScenarioError(
                "/simba/projection", "projection must contain every workspace dimension"
            )
        kind = sraw.get("kind", "sba")
        if kind == "geo":
            kind = "geometric"
        lift_raw = sraw.get("lift", [None] * n)
        if len(lift_raw) != n:
            raise ScenarioError("/simba/lift", f"lift must list all {n} state dimensions")
        lift = tuple(None if v is None else float(v) for v in lift_raw)
        try:
            simba = SimplifiedModel(
                projection=projection,
                kind=kind,
                v_max=float(_require(sraw, "v_max", "/simba")),
                lift=lift,
                assumes_monotone_labels=bool(sraw.get("assumes_monotone_labels", False)),
            )
        except ValueError as exc:
            raise ScenarioError("/simba", str(exc)) from None

    scenario = Scenario(
        name=name, system=system, regions=regions, props=tuple(props),
        formula=formula, ast=ast, initial_mean=initial_mean, initial_cov=initial_cov,
        ws_dims=ws_dims, ws_low=ws_low, ws_high=ws_high, simba=simba, raw=raw,
    )

    min_inradius = scenario.min_region_inradius()
    step = scenario.max_step_displacement()
    if props and step > 0.5 * min_inradius:
        warnings.warn(
            f"per-step displacement {step:.3f} exceeds half the smallest region "
            f"inradius {min_inradius:.3f}; labels may be skipped between steps",
            ScenarioWarning,
            stacklevel=2,
        )
    return scenario
