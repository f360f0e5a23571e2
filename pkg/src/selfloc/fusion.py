"""Extended Kalman filter over the state [x, y, phi_ref, alpha].

One filter time step corresponds to one detected step.  Prediction advances
the position by the stride model and leaves the two parameters untouched;
its Jacobian couples position uncertainty to the heading-reference and
stride-coefficient uncertainties.  Measurement updates consume a vector of
AP distance estimates; ranging requests are gated on the predicted position
standard deviation so the radio can stay quiet while the filter is
confident.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .calibration import CalibrationBuffer, Theta
from .errors import DegenerateGeometryError, InvalidInputError, SingularInnovationError
from .orientation import wrap_to_pi
from .pdr import StepEvent, heading_direction, heading_direction_derivative
from .ranging import RangingParams, SelectedObservations, estimate_distance


@dataclass
class FilterState:
    """State vector z = [x, y, phi_ref, alpha] with covariance P."""

    z: np.ndarray          # (4,)
    P: np.ndarray          # (4, 4)
    step_index: int

    @property
    def position(self) -> np.ndarray:
        return self.z[:2].copy()

    @property
    def phi_ref(self) -> float:
        return float(self.z[2])

    @property
    def alpha(self) -> float:
        return float(self.z[3])


@dataclass
class NoiseConfig:
    """Filter noise settings; every value is an engineering choice, not a fit.

    The parameter entries (heading reference, stride coefficient) carry tiny
    process noise: both are near-constants of a walk, and inflating them
    couples straight into position spread, which defeats the ranging gate.
    """

    init_sigmas: tuple[float, float, float, float] = (2.0, 2.0, 0.1, 0.05)
    process_diag: tuple[float, float, float, float] = (2e-5, 2e-5, 1e-6, 1e-8)
    meas_var_rss: float = 3.0  # per-AP distance variance, m^2
    meas_var_rtt: float = 0.25

    def __post_init__(self):
        if any(s <= 0 for s in self.init_sigmas) or any(q < 0 for q in self.process_diag):
            raise InvalidInputError("sigmas must be positive and process noise non-negative")
        if self.meas_var_rss <= 0 or self.meas_var_rtt <= 0:
            raise InvalidInputError("measurement variances must be positive")

    def meas_var(self, kind: str) -> float:
        return self.meas_var_rss if kind == "rss" else self.meas_var_rtt

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.process_diag)


@dataclass(frozen=True)
class GatePolicy:
    """Covariance-derived trigger for issuing a new ranging request."""

    rho: float = 0.0

    def __post_init__(self):
        if self.rho < 0:
            raise InvalidInputError(f"rho must be non-negative, got {self.rho}")


def init_state(cal: Theta, p_init, noise: NoiseConfig,
               step_index: int) -> FilterState:
    """Filter state at the end of the calibration burst."""
    p_init = np.asarray(p_init, dtype=float)
    z = np.array([p_init[0], p_init[1], cal.pdr.phi_ref, cal.pdr.alpha])
    P = np.diag(np.asarray(noise.init_sigmas, dtype=float) ** 2)
    return FilterState(z=z, P=P, step_index=step_index)


def predict(state: FilterState, step: StepEvent, noise: NoiseConfig) -> FilterState:
    """Advance the state by one detected step and grow the covariance."""
    phi = state.phi_ref + step.heading
    move = heading_direction(phi)
    z = state.z.copy()
    z[:2] += state.alpha * step.beta * move

    v_phi = state.alpha * step.beta * heading_direction_derivative(phi)
    v_alpha = step.beta * move
    F = np.eye(4)
    F[0:2, 2] = v_phi
    F[0:2, 3] = v_alpha
    P = F @ state.P @ F.T + noise.Q
    return FilterState(z=z, P=P, step_index=state.step_index + 1)


def should_range(state: FilterState, policy: GatePolicy) -> bool:
    """True when predicted position spread exceeds the gate threshold."""
    if policy.rho == 0.0:
        return True
    return math.sqrt(state.P[0, 0] + state.P[1, 1]) > policy.rho


def update(state: FilterState, distances, ap_positions,
           meas_var: float) -> FilterState:
    """Correct the predicted state with a vector of AP distance estimates.

    APs closer than 1e-6 m to the predicted position are dropped (their
    measurement direction is undefined); if none remain the update is
    degenerate.  The posterior covariance is re-symmetrised.
    """
    d = np.atleast_1d(np.asarray(distances, dtype=float))
    pos = np.atleast_2d(np.asarray(ap_positions, dtype=float))
    if d.shape[0] != pos.shape[0] or d.shape[0] < 1:
        raise InvalidInputError("distances and AP positions disagree in length")

    diff = state.z[:2] - pos                       # (N, 2)
    expected = np.linalg.norm(diff, axis=1)
    keep = expected >= 1e-6
    if not np.any(keep):
        raise DegenerateGeometryError("every AP coincides with the predicted position")
    diff, expected, d = diff[keep], expected[keep], d[keep]

    n = d.shape[0]
    H = np.zeros((n, 4))
    H[:, 0:2] = diff / expected[:, None]
    innovation = d - expected

    S = H @ state.P @ H.T + meas_var * np.eye(n)
    try:
        K = np.linalg.solve(S, H @ state.P).T      # (4, N)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc

    z = state.z + K @ innovation
    z[2] = wrap_to_pi(z[2])
    P = (np.eye(4) - K @ H) @ state.P
    P = 0.5 * (P + P.T)
    return FilterState(z=z, P=P, step_index=state.step_index)


SnapshotSource = Union[SelectedObservations, Callable[[], SelectedObservations], None]


def step_engine(state: FilterState, step: StepEvent,
                snapshot_source: SnapshotSource, params: RangingParams,
                policy: GatePolicy, noise: NoiseConfig,
                buffer: Optional[CalibrationBuffer] = None
                ) -> tuple[FilterState, bool]:
    """One full engine step: predict, gate, and conditionally update.

    ``snapshot_source`` may be a ready snapshot or a zero-argument callable
    issued only when the gate fires (a ranging request).  When ranging does
    not happen the posterior is simply the prediction.  Used snapshots are
    appended to the calibration buffer when one is supplied.
    """
    predicted = predict(state, step, noise)
    if not should_range(predicted, policy) or snapshot_source is None:
        return predicted, False
    snapshot = snapshot_source() if callable(snapshot_source) else snapshot_source
    if snapshot is None:
        return predicted, False
    distances = np.atleast_1d(estimate_distance(params, snapshot.sources))
    updated = update(predicted, distances, snapshot.positions,
                     noise.meas_var(snapshot.kind))
    if buffer is not None:
        buffer.push(snapshot)
    return updated, True
