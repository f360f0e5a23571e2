"""Deterministic synthetic world: AP layouts, scripted walks, measurements.

Everything here is reproducible from a seed: the same world configuration
produces bit-identical RSS/RTT measurement streams and IMU traces.  The
raw-RTT distortion is synthesised as the exact preimage of the linear
calibration polynomial, so "correctly calibrated" has a well-defined ground
truth.  IMU synthesis targets the step detector's passband (a sinusoidal
bounce at walking cadence) rather than biomechanical realism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .orientation import STANDARD_GRAVITY, ImuSample, wrap_to_pi
from .pdr import PdrParams, StepEvent, lowpass_gain
from .ranging import (AccessPoint, ApRegistry, RangingSnapshot, RssParams,
                      RttParams)


@dataclass(frozen=True)
class Walk:
    """Scripted trajectory: waypoints walked at constant speed and cadence."""

    waypoints: tuple[tuple[float, float], ...]
    speed: float = 1.2      # m/s
    cadence: float = 2.0    # steps/s

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise InvalidInputError("a walk needs at least 2 waypoints")
        if self.speed <= 0 or self.cadence <= 0:
            raise InvalidInputError("speed and cadence must be positive")

    @property
    def length(self) -> float:
        pts = np.asarray(self.waypoints)
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    @property
    def duration(self) -> float:
        return self.length / self.speed


@dataclass(frozen=True)
class RssWorldModel:
    params: RssParams
    sigma_shadow: float = 0.0  # dB, log-normal shadowing spread

    def __post_init__(self):
        if self.sigma_shadow < 0:
            raise InvalidInputError("sigma_shadow must be non-negative")


@dataclass(frozen=True)
class RttWorldModel:
    params: RttParams          # linear polynomial; raw values are its preimage
    sigma: float = 0.0         # m, raw-distance noise

    def __post_init__(self):
        if self.params.degree != 1:
            raise InvalidInputError("raw-RTT synthesis requires a linear polynomial")
        if self.params.coeffs[1] <= 0:
            raise InvalidInputError("RTT slope coefficient must be positive")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be non-negative")


@dataclass
class WorldConfig:
    """Ground truth of a synthetic site: APs, model parameters, start pose."""

    registry: ApRegistry
    pdr: PdrParams
    rss: Optional[RssWorldModel] = None
    rtt: Optional[RttWorldModel] = None
    seed: int = 0


@dataclass
class TruthTrajectory:
    """Dense ground-truth samples; heading is the instantaneous move direction."""

    times: np.ndarray      # (T,)
    positions: np.ndarray  # (T, 2)
    headings: np.ndarray   # (T,) movement direction chi, wrapped
    walk_start: float      # time the walk begins (after any stationary hold)

    def position_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x = np.interp(t, self.times, self.positions[:, 0])
        y = np.interp(t, self.times, self.positions[:, 1])
        return np.stack([x, y], axis=-1)


class SyntheticWorld:
    """A seeded world instance; all measurement noise comes from its one RNG."""

    def __init__(self, config: WorldConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)

    @property
    def registry(self) -> ApRegistry:
        return self.config.registry


def move_direction_angle(ux: float, uy: float) -> float:
    """Heading angle whose movement direction [-sin, cos] equals (ux, uy)."""
    return math.atan2(-ux, uy)


def synth_truth(walk: Walk, dt: float = 0.02, hold: float = 0.0) -> TruthTrajectory:
    """Piecewise-linear ground truth, optionally held at the start pose first."""
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    pts = np.asarray(walk.waypoints, dtype=float)
    seg_vecs = np.diff(pts, axis=0)
    seg_lens = np.linalg.norm(seg_vecs, axis=1)
    if np.any(seg_lens == 0):
        raise InvalidInputError("consecutive waypoints must be distinct")
    seg_dirs = seg_vecs / seg_lens[:, None]
    seg_angles = [move_direction_angle(ux, uy) for ux, uy in seg_dirs]
    cum_len = np.concatenate([[0.0], np.cumsum(seg_lens)])

    total = hold + walk.duration
    times = np.arange(0.0, total + dt / 2, dt)
    positions = np.empty((len(times), 2))
    headings = np.empty(len(times))
    for i, t in enumerate(times):
        s = max(0.0, min((t - hold) * walk.speed, cum_len[-1]))
        seg = min(np.searchsorted(cum_len, s, side="right") - 1, len(seg_lens) - 1)
        seg = max(seg, 0)
        positions[i] = pts[seg] + seg_dirs[seg] * (s - cum_len[seg])
        headings[i] = seg_angles[seg]
    return TruthTrajectory(times, positions, headings, walk_start=hold)


def synth_rss(world: SyntheticWorld, position, ap: AccessPoint) -> float:
    """One pathloss-model RSS draw at the given device position."""
    model = world.config.rss
    if model is None:
        raise InvalidInputError("world has no RSS model configured")
    p = np.asarray(position, dtype=float)
    d = math.hypot(p[0] - ap.x, p[1] - ap.y)
    if d <= 0:
        raise InvalidInputError("device position coincides with the AP")
    shadow = world.rng.normal(0.0, model.sigma_shadow) if model.sigma_shadow > 0 else 0.0
    pr = model.params
    return pr.p0 - 10.0 * pr.eta * math.log10(d / pr.d0) + shadow


def synth_ftm(world: SyntheticWorld, position, ap: AccessPoint) -> float:
    """One raw RTT distance draw: the preimage of the calibration polynomial."""
    model = world.config.rtt
    if model is None:
        raise InvalidInputError("world has no RTT model configured")
    p = np.asarray(position, dtype=float)
    d = math.hypot(p[0] - ap.x, p[1] - ap.y)
    if d <= 0:
        raise InvalidInputError("device position coincides with the AP")
    c0, c1 = model.params.coeffs
    noise = world.rng.normal(0.0, model.sigma) if model.sigma > 0 else 0.0
    return (d - c0) / c1 + noise


def snapshot_at(world: SyntheticWorld, t: float, position,
                kind: str) -> RangingSnapshot:
    """One ranging epoch against every AP of the given kind."""
    aps = world.registry.of_kind(kind)
    if not aps:
        raise InvalidInputError(f"world has no APs of kind {kind!r}")
    synth = synth_rss if kind == "rss" else synth_ftm
    observations = tuple((ap.ap_id, synth(world, position, ap)) for ap in aps)
    return RangingSnapshot(timestamp=t, observations=observations)


def accel_amplitude_for(alpha: float, step_length: float, cadence: float,
                        sample_rate: float = 100.0) -> float:
    """Raw bounce amplitude so detected strides come out at ``step_length``.

    Accounts for the low-pass attenuation at the walking cadence, since the
    stride factor is read off the filtered signal.
    """
    beta = step_length / alpha
    return beta**4 / (2.0 * lowpass_gain(cadence, sample_rate))


def synth_imu(truth: TruthTrajectory, walk: Walk, phi_ref: float,
              accel_amp: float, sample_rate: float = 100.0) -> list[ImuSample]:
    """IMU stream consistent with the ground truth and the heading reference.

    The device bounces sinusoidally on the global z axis while walking and
    yaws so that an identity-initialised integrator reads heading
    ``chi(t) - phi_ref``.  During the stationary hold the yaw sweeps
    smoothly from zero to its walking value, so any configured reference
    direction is realisable without discontinuities.
    """
    dt = 1.0 / sample_rate
    t_end = float(truth.times[-1])
    times = np.arange(0.0, t_end + dt / 2, dt)
    n = len(times)

    # target yaw: chi(t) - phi_ref while walking, smooth sweep during hold
    chi = np.interp(times, truth.times, np.unwrap(truth.headings))
    yaw_walk = chi - phi_ref
    hold = truth.walk_start
    yaw = yaw_walk.copy()
    if hold > 0:
        in_hold = times < hold
        yaw0 = yaw_walk[np.searchsorted(times, hold)]
        ramp = 0.5 * (1.0 - np.cos(np.pi * times[in_hold] / hold))
        yaw[in_hold] = yaw0 * ramp
    # light smoothing keeps corner turn rates physical
    win = max(1, int(round(0.3 * sample_rate)) | 1)
    if win > 1:
        kernel = np.ones(win) / win
        padded = np.concatenate([np.full(win // 2, yaw[0]), yaw,
                                 np.full(win // 2, yaw[-1])])
        yaw = np.convolve(padded, kernel, mode="valid")

    gyro_z = np.zeros(n)
    gyro_z[:-1] = np.diff(yaw) / dt

    walking = (times >= hold) & (times <= hold + walk.duration)
    az = np.full(n, STANDARD_GRAVITY)
    az[walking] += accel_amp * np.sin(2.0 * math.pi * walk.cadence * (times[walking] - hold))

    return [ImuSample(float(times[i]), (0.0, 0.0, float(gyro_z[i])),
                      (0.0, 0.0, float(az[i]))) for i in range(n)]


def simulate_steps(truth: TruthTrajectory, walk: Walk,
                   pdr: PdrParams) -> tuple[list[StepEvent], np.ndarray]:
    """Exact step events along the truth, bypassing IMU synthesis.

    Stride factors and headings are chosen so dead reckoning under the true
    parameters reproduces the ground-truth positions at the step instants
    exactly.  Returns the events and the matching truth positions.
    """
    period = 1.0 / walk.cadence
    t_first = truth.walk_start + period
    t_last = truth.walk_start + walk.duration
    instants = np.arange(t_first, t_last + 1e-9, period)

    events: list[StepEvent] = []
    positions = []
    prev = truth.position_at(truth.walk_start)
    for t in instants:
        pos = truth.position_at(float(t))
        chord = pos - prev
        length = float(np.linalg.norm(chord))
        if length <= 1e-12:
            continue
        chi = move_direction_angle(chord[0] / length, chord[1] / length)
        events.append(StepEvent(timestamp=float(t), beta=length / pdr.alpha,
                                heading=wrap_to_pi(chi - pdr.phi_ref)))
        positions.append(pos)
        prev = pos
    return events, np.asarray(positions)
