"""Pedestrian dead reckoning: step detection and stride-based position updates.

The vertical (global z) acceleration is low-pass filtered and scanned for
peak/valley pairs; each pair is one step.  Step length is ``alpha * beta``
where ``beta = (a_zmax - a_zmin)^(1/4)`` comes from the filtered extremes and
``alpha`` is the trainable per-user coefficient.  A step moves the position
by the step length along ``g(phi) = [-sin(phi), cos(phi)]`` at the corrected
heading ``phi_ref + phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import butter, lfilter

from .errors import InsufficientDataError, InvalidInputError

DEFAULT_SAMPLE_RATE = 100.0  # Hz
LOWPASS_CUTOFF = 3.0         # Hz, walking cadence stays below this
LOWPASS_ORDER = 2
MIN_PROMINENCE = 0.8         # m/s^2, peak-to-valley swing for a valid step
MIN_STEP_INTERVAL = 0.25     # s
MAX_STEP_INTERVAL = 2.0      # s, longest plausible peak-to-valley span
FILTER_WARMUP_SAMPLES = 10


@dataclass(frozen=True)
class PdrParams:
    """Trainable dead-reckoning parameters: start pose and stride coefficient."""

    x0: float
    y0: float
    phi_ref: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise InvalidInputError(f"alpha must be in (0, 2), got {self.alpha}")
        if not (-math.pi < self.phi_ref <= math.pi):
            raise InvalidInputError(f"phi_ref must be in (-pi, pi], got {self.phi_ref}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.phi_ref, self.alpha])


@dataclass(frozen=True)
class StepEvent:
    """One detected step: time, stride factor, and heading at detection."""

    timestamp: float
    beta: float
    heading: float

    def __post_init__(self):
        if not (self.beta > 0):
            raise InvalidInputError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class StepExtremes:
    """Peak/valley pair of one step before a heading is attached."""

    timestamp: float
    az_max: float
    az_min: float

    @property
    def beta(self) -> float:
        return (self.az_max - self.az_min) ** 0.25

    def with_heading(self, heading: float) -> StepEvent:
        return StepEvent(self.timestamp, self.beta, heading)


def heading_direction(phi: float) -> np.ndarray:
    """Unit movement direction g(phi) = [-sin(phi), cos(phi)]."""
    return np.array([-math.sin(phi), math.cos(phi)])


def heading_direction_derivative(phi: float) -> np.ndarray:
    """d/dphi of the movement direction: [-cos(phi), -sin(phi)]."""
    return np.array([-math.cos(phi), -math.sin(phi)])


def lowpass(z_accel_stream: Sequence[tuple[float, float]],
            sample_rate: float = DEFAULT_SAMPLE_RATE) -> list[tuple[float, float]]:
    """Second-order Butterworth low-pass (3 Hz cutoff, unity DC gain)."""
    stream = list(z_accel_stream)
    if len(stream) < FILTER_WARMUP_SAMPLES:
        raise InsufficientDataError(
            f"need at least {FILTER_WARMUP_SAMPLES} samples, got {len(stream)}")
    times = np.array([t for t, _ in stream])
    values = np.array([v for _, v in stream])
    b, a = butter(LOWPASS_ORDER, LOWPASS_CUTOFF, fs=sample_rate)
    filtered = lfilter(b, a, values)
    return list(zip(times.tolist(), filtered.tolist()))


def lowpass_coefficients(sample_rate: float = DEFAULT_SAMPLE_RATE):
    """Filter coefficients (b, a), exposed for response analysis."""
    return butter(LOWPASS_ORDER, LOWPASS_CUTOFF, fs=sample_rate)


def lowpass_gain(freq: float, sample_rate: float = DEFAULT_SAMPLE_RATE) -> float:
    """Steady-state magnitude response of the step-detection filter."""
    b, a = lowpass_coefficients(sample_rate)
    z_inv = np.exp(-1j * 2.0 * np.pi * freq / sample_rate * np.arange(len(b)))
    return float(abs(np.dot(b, z_inv) / np.dot(a, z_inv)))


def detect_steps(filtered: Sequence[tuple[float, float]]) -> list[StepExtremes]:
    """Turn a filtered z-acceleration stream into peak/valley step events.

    A local maximum followed by the next local minimum forms a candidate;
    it is kept when the swing exceeds the prominence threshold, the pair
    spans a plausible duration and it is not too close to the previous
    accepted step.  The valley time stamps the step.
    """
    times = [t for t, _ in filtered]
    vals = [v for _, v in filtered]
    n = len(vals)
    events: list[StepExtremes] = []
    last_step_time = None
    pending_peak = None  # (time, value)
    for i in range(1, n - 1):
        if vals[i] >= vals[i - 1] and vals[i] > vals[i + 1]:
            if pending_peak is None or vals[i] > pending_peak[1]:
                pending_peak = (times[i], vals[i])
        elif vals[i] <= vals[i - 1] and vals[i] < vals[i + 1] and pending_peak is not None:
            peak_t, peak_v = pending_peak
            swing = peak_v - vals[i]
            span = times[i] - peak_t
            if swing >= MIN_PROMINENCE and span <= MAX_STEP_INTERVAL:
                if last_step_time is None or times[i] - last_step_time >= MIN_STEP_INTERVAL:
                    events.append(StepExtremes(times[i], peak_v, vals[i]))
                    last_step_time = times[i]
            pending_peak = None
    return events


def step_length(alpha: float, beta: float) -> float:
    """Stride length in meters for one step."""
    if alpha <= 0 or beta < 0:
        raise InvalidInputError("alpha must be positive and beta non-negative")
    return alpha * beta


def dead_reckon(p_prev, params: PdrParams, step: StepEvent) -> np.ndarray:
    """Advance a position by one detected step."""
    p_prev = np.asarray(p_prev, dtype=float)
    if not np.all(np.isfinite(p_prev)):
        raise InvalidInputError("previous position must be finite")
    phi = params.phi_ref + step.heading
    return p_prev + params.alpha * step.beta * heading_direction(phi)


def roll_forward(params: PdrParams, steps: Sequence[StepEvent]) -> np.ndarray:
    """Positions after each step starting from the configured start pose.

    Returns an ``(len(steps), 2)`` array; row k is the pose after step k+1.
    """
    pos = np.array([params.x0, params.y0])
    out = np.empty((len(steps), 2))
    for k, step in enumerate(steps):
        pos = dead_reckon(pos, params, step)
        out[k] = pos
    return out
