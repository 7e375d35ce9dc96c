"""Linear-Gaussian system model, belief propagation and closed-loop simulation.

The belief about the true state is parameterized about a nominal
trajectory as N(mean, est_cov + dev_cov):

* ``est_cov`` is the covariance of the online estimation error
  (true state minus filter estimate),
* ``dev_cov`` is the covariance of the filter estimate about the
  nominal mean; it accumulates the measurement-driven corrections that
  the feedback controller will chase online.

Propagation follows the Kalman recursions with the measurement noise
taken from the zone containing the new nominal mean.  A zone with no
noise model means no measurement there: the update is skipped, which is
the infinite-noise limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    BoundsViolationError,
    NumericalError,
    UnstableGainError,
)
from .geometry import Polytope

_SYM_TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=None)
    if out.flags.owndata:
        out.setflags(write=False)
    return out


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric factor S with S @ S.T == mat, tolerant of zero eigenvalues."""
    vals, vecs = np.linalg.eigh(np.asarray(mat, dtype=float))
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return (mat + mat.T) / 2.0


@dataclass(frozen=True)
class Belief:
    """Gaussian belief split into estimation and nominal-deviation parts."""

    mean: np.ndarray
    est_cov: np.ndarray
    dev_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.reshape(self.mean, -1)))
        object.__setattr__(self, "est_cov", _frozen(self.est_cov))
        object.__setattr__(self, "dev_cov", _frozen(self.dev_cov))
        for name in ("est_cov", "dev_cov"):
            cov = getattr(self, name)
            if np.max(np.abs(cov - cov.T)) > _SYM_TOL:
                raise ValueError(f"{name} is not symmetric")

    @property
    def total_cov(self) -> np.ndarray:
        return self.est_cov + self.dev_cov

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class MeasurementZone:
    """Polytopal zone with its own measurement noise; None disables updates."""

    region: Polytope
    noise_cov: Optional[np.ndarray]

    def __post_init__(self):
        if self.noise_cov is not None:
            object.__setattr__(self, "noise_cov", _frozen(self.noise_cov))


@dataclass(frozen=True)
class LinearGaussianSystem:
    """Discrete-time linear system with state-dependent measurement noise.

    Dynamics x' = A x + B u + w, measurements z = C x + D u + v where
    Cov(w) = process_cov and Cov(v) comes from the first declared zone
    containing the workspace projection of the state (default noise
    otherwise).  The feedback gain must stabilize A - B K.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    process_cov: np.ndarray
    gain: np.ndarray
    input_low: np.ndarray
    input_high: np.ndarray
    state_low: np.ndarray
    state_high: np.ndarray
    workspace_dims: tuple[int, ...]
    dt: float
    zones: tuple[MeasurementZone, ...] = ()
    default_noise_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "process_cov", "gain",
                     "input_low", "input_high", "state_low", "state_high"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.default_noise_cov is not None:
            object.__setattr__(self, "default_noise_cov", _frozen(self.default_noise_cov))
        n, m = self.b.shape
        p = self.c.shape[0]
        if self.a.shape != (n, n):
            raise ValueError(f"A must be {n}x{n}, got {self.a.shape}")
        if self.c.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {self.c.shape}")
        if self.d.shape != (p, m):
            raise ValueError(f"D must be {p}x{m}, got {self.d.shape}")
        if self.process_cov.shape != (n, n):
            raise ValueError("process noise covariance has wrong shape")
        if self.gain.shape != (m, n):
            raise ValueError(f"gain must be {m}x{n}, got {self.gain.shape}")
        radius = max(abs(np.linalg.eigvals(self.a - self.b @ self.gain)))
        if radius >= 1.0:
            raise UnstableGainError(
                f"closed-loop spectral radius {radius:.4f} >= 1"
            )
        object.__setattr__(self, "_closed_loop", _frozen(self.a - self.b @ self.gain))
        object.__setattr__(self, "_b_pinv", _frozen(np.linalg.pinv(self.b)))

    @property
    def state_dim(self) -> int:
        return self.b.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b.shape[1]

    @property
    def closed_loop(self) -> np.ndarray:
        return self._closed_loop

    @property
    def b_pinv(self) -> np.ndarray:
        return self._b_pinv

    def clamp_input(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.input_low, self.input_high)

    def steer_control(self, x: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Bounded nominal control toward a sampled target state.

        Least-squares solution of B u = target - A x, clamped to the
        input box; with the sampled-velocity targets of the planner this
        behaves like sampling a valid nominal control.
        """
        return self.clamp_input(self.b_pinv @ (np.asarray(target, dtype=float) - self.a @ x))

    def in_state_bounds(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.state_low) and np.all(x <= self.state_high))

    def workspace_point(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(-1)[list(self.workspace_dims)]

    def measurement_noise_at(self, state: np.ndarray) -> Optional[np.ndarray]:
        """Noise of the first declared zone containing the state, else default."""
        point = self.workspace_point(state)
        for zone in self.zones:
            if zone.region.contains(point):
                return zone.noise_cov
        return self.default_noise_cov

    def nominal_step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.a @ x + self.b @ u


def propagate_covariances(
    sys: LinearGaussianSystem,
    est_cov: np.ndarray,
    dev_cov: np.ndarray,
    eval_state: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Covariance half of the recursion; noise evaluated at `eval_state`.

    Used both by full belief propagation (evaluated at the new nominal
    mean) and by the simplified guide model (evaluated at the lifted
    kinematic state).
    """
    predicted = _symmetrize(sys.a @ est_cov @ sys.a.T + sys.process_cov)
    noise = sys.measurement_noise_at(eval_state)
    closed = sys.closed_loop
    if noise is None:
        # no measurement here: zero Kalman gain
        est = predicted
        correction = np.zeros_like(predicted)
    else:
        innovation = sys.c @ predicted @ sys.c.T + noise
        try:
            gain_t = np.linalg.solve(innovation, sys.c @ predicted)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular innovation matrix: {exc}") from exc
        kalman = gain_t.T
        eye = np.eye(sys.state_dim)
        joseph = eye - kalman @ sys.c
        est = _symmetrize(joseph @ predicted @ joseph.T + kalman @ noise @ kalman.T)
        correction = _symmetrize(kalman @ sys.c @ predicted)
    dev = _symmetrize(closed @ dev_cov @ closed.T + correction)
    return est, dev


def propagate_belief(sys: LinearGaussianSystem, belief: Belief, control) -> Belief:
    """One step of the covariance recursions about the nominal trajectory.

    Raises BoundsViolationError when the control or the new nominal
    mean leaves its box, NumericalError on a singular innovation.
    """
    u = np.asarray(control, dtype=float).reshape(-1)
    if np.any(u < sys.input_low - 1e-9) or np.any(u > sys.input_high + 1e-9):
        raise BoundsViolationError("control outside input bounds")
    mean = sys.nominal_step(belief.mean, u)
    if not sys.in_state_bounds(mean):
        raise BoundsViolationError("nominal state outside state bounds")
    est, dev = propagate_covariances(sys, belief.est_cov, belief.dev_cov, mean)
    return Belief(mean, est, dev)


@dataclass(frozen=True)
class NominalPlan:
    """Control sequence with its nominal state rollout."""

    controls: np.ndarray  # (steps, m)
    states: np.ndarray  # (steps + 1, n)

    def __post_init__(self):
        controls = np.array(self.controls, dtype=float)
        states = np.array(self.states, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if states.shape[0] != controls.shape[0] + 1:
            raise ValueError("states must be one longer than controls")
        controls.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_controls(cls, sys: LinearGaussianSystem, x0, controls) -> "NominalPlan":
        controls = np.asarray(controls, dtype=float)
        if controls.size == 0:
            controls = controls.reshape(0, sys.input_dim)
        controls = np.atleast_2d(controls)
        states = [np.asarray(x0, dtype=float).reshape(-1)]
        for u in controls:
            states.append(sys.nominal_step(states[-1], u))
        return cls(controls, np.array(states))

    def check_consistency(self, sys: LinearGaussianSystem, tol: float = 1e-9) -> None:
        for k, u in enumerate(self.controls):
            residual = self.states[k + 1] - sys.nominal_step(self.states[k], u)
            if np.max(np.abs(residual)) > tol:
                raise ValueError(f"nominal rollout residual {residual} at step {k}")

    @property
    def steps(self) -> int:
        return self.controls.shape[0]


def lqr_gain(a, b, state_weight, input_weight) -> np.ndarray:
    """Infinite-horizon discrete LQR feedback gain."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    qw = np.asarray(state_weight, dtype=float)
    rw = np.asarray(input_weight, dtype=float)
    s = scipy.linalg.solve_discrete_are(a, b, qw, rw)
    return np.linalg.solve(rw + b.T @ s @ b, b.T @ s @ a)


@dataclass
class SimulationResult:
    """One closed-loop rollout; measurement rows are NaN where skipped."""

    true_states: np.ndarray  # (steps + 1, n)
    estimates: np.ndarray  # (steps + 1, n)
    measurements: np.ndarray  # (steps, p)
    inputs: np.ndarray  # (steps, m)
    state_violations: list
    input_saturations: list


def simulate_closed_loop(
    sys: LinearGaussianSystem,
    plan: NominalPlan,
    init_cov,
    rng: np.random.Generator,
    true_init: Optional[np.ndarray] = None,
) -> SimulationResult:
    """Execute the plan with the feedback law u = u_nom - K (est - nom).

    The true state starts at a draw from N(nominal, init_cov) unless
    given; the filter starts at the nominal mean, matching the planner's
    convention that the initial estimate equals the known initial mean.
    Measurement noise is drawn from the zone of the true state; entering
    a zone with no noise model skips the filter update.  Trajectories
    are returned even when bounds are violated; violations are flagged.
    """
    if plan.steps == 0:
        raise ValueError("plan is empty")
    n = sys.state_dim
    p = sys.c.shape[0]
    init_cov = np.asarray(init_cov, dtype=float)
    x0 = np.asarray(true_init, dtype=float) if true_init is not None else (
        plan.states[0] + psd_sqrt(init_cov) @ rng.standard_normal(n)
    )
    proc_factor = psd_sqrt(sys.process_cov)
    noise_factors: dict[int, np.ndarray] = {}

    true_states = np.empty((plan.steps + 1, n))
    estimates = np.empty((plan.steps + 1, n))
    measurements = np.full((plan.steps, p), np.nan)
    inputs = np.empty((plan.steps, sys.input_dim))
    state_violations = []
    input_saturations = []

    true_states[0] = x0
    estimates[0] = plan.states[0]
    est_cov = init_cov.copy()

    for k in range(plan.steps):
        raw_u = plan.controls[k] - sys.gain @ (estimates[k] - plan.states[k])
        u = sys.clamp_input(raw_u)
        if np.max(np.abs(u - raw_u)) > 1e-12:
            input_saturations.append(k)
        inputs[k] = u

        w = proc_factor @ rng.standard_normal(n)
        x_next = sys.a @ true_states[k] + sys.b @ u + w
        true_states[k + 1] = x_next
        if not sys.in_state_bounds(x_next):
            state_violations.append(k + 1)

        predicted_mean = sys.a @ estimates[k] + sys.b @ u
        predicted_cov = _symmetrize(sys.a @ est_cov @ sys.a.T + sys.process_cov)
        noise = sys.measurement_noise_at(x_next)
        if noise is None:
            estimates[k + 1] = predicted_mean
            est_cov = predicted_cov
            continue
        key = id(noise)
        factor = noise_factors.get(key)
        if factor is None:
            factor = psd_sqrt(noise)
            noise_factors[key] = factor
        v = factor @ rng.standard_normal(p)
        z = sys.c @ x_next + sys.d @ u + v
        measurements[k] = z
        innovation = sys.c @ predicted_cov @ sys.c.T + noise
        try:
            kalman = np.linalg.solve(innovation, sys.c @ predicted_cov).T
        except np.linalg.LinAlgError:
            # exactly singular (e.g. fully noiseless): least-squares gain
            kalman = (np.linalg.pinv(innovation) @ (sys.c @ predicted_cov)).T
        estimates[k + 1] = predicted_mean + kalman @ (z - sys.c @ predicted_mean - sys.d @ u)
        joseph = np.eye(n) - kalman @ sys.c
        est_cov = _symmetrize(joseph @ predicted_cov @ joseph.T + kalman @ noise @ kalman.T)

    return SimulationResult(
        true_states=true_states,
        estimates=estimates,
        measurements=measurements,
        inputs=inputs,
        state_violations=state_violations,
        input_saturations=input_saturations,
    )


def propagate_plan(sys: LinearGaussianSystem, belief0: Belief, controls) -> list[Belief]:
    """Beliefs along a control sequence, initial belief included."""
    beliefs = [belief0]
    controls = np.asarray(controls, dtype=float)
    if controls.size == 0:
        return beliefs
    for u in np.atleast_2d(controls):
        beliefs.append(propagate_belief(sys, beliefs[-1], u))
    return beliefs
