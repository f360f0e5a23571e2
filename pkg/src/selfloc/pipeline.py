"""End-to-end scenario execution: simulate, calibrate, fuse, report.

The pipeline mirrors real operation: a ranging epoch is taken at each of
the first B detected steps, initial calibration fits every parameter to
that burst, the filter starts from the calibrated pose, and from then on
ranging requests are covariance-gated while the ranging model is
periodically self-calibrated against a window of recent epochs.  A
benchmark run injects the true parameters and skips all calibration,
providing the accuracy ceiling for comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .calibration import (CalibrationBuffer, CalibrationTrace, GdConfig,
                          InitialCalResult, Theta, initial_calibrate,
                          self_calibrate)
from .errors import InsufficientDataError, ScenarioError
from .fusion import (FilterState, GatePolicy, NoiseConfig, init_state,
                     step_engine)
from .metrics import RunReport, compute_report
from .orientation import (IDENTITY, STANDARD_GRAVITY, ImuSample,
                          _rotate_to_global, _yaw, update_orientation)
from .pdr import (DEFAULT_SAMPLE_RATE, PdrParams, StepEvent, detect_steps,
                  lowpass, roll_forward)
from .ranging import (ApRegistry, RangingParams, RssParams, RttParams,
                      SelectedObservations, select_aps)
from .simulator import (RssWorldModel, RttWorldModel, SyntheticWorld, Walk,
                        WorldConfig, accel_amplitude_for, snapshot_at,
                        synth_imu, synth_truth)


@dataclass
class ImuConfig:
    sample_rate: float = DEFAULT_SAMPLE_RATE
    hold: float = 2.0  # stationary settle time before the walk starts


@dataclass
class EngineConfig:
    n_max: int = 6
    burst_steps: int = 8
    selfcal_period: float = 30.0
    buffer_capacity: int = 100
    gd: GdConfig = field(default_factory=GdConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)


@dataclass
class ScenarioConfig:
    name: str
    registry: ApRegistry
    walk: Walk
    pdr_truth: PdrParams
    rss: Optional[RssWorldModel] = None
    rtt: Optional[RttWorldModel] = None
    seed: int = 0
    rho_values: tuple[float, ...] = (0.0, 0.2, 0.4, 0.8)
    engine: EngineConfig = field(default_factory=EngineConfig)
    imu: ImuConfig = field(default_factory=ImuConfig)


class StateTraceRow(NamedTuple):
    k: int
    t: float
    x: float
    y: float
    phi_ref: float
    alpha: float
    p11: float
    p22: float
    ranged: int


@dataclass
class RunResult:
    report: RunReport
    state_trace: list[StateTraceRow]
    initial_trace: Optional[CalibrationTrace]
    selfcal_traces: list[CalibrationTrace]
    ranging_times: list[float]
    steps: list[StepEvent]
    final_ranging: RangingParams
    final_state: FilterState


def steps_from_imu(samples: list[ImuSample],
                   sample_rate: float = DEFAULT_SAMPLE_RATE
                   ) -> tuple[list[StepEvent], np.ndarray, np.ndarray]:
    """Orientation-track an IMU stream and detect heading-stamped steps.

    Returns the step events plus the per-sample (times, yaw) series.
    """
    n = len(samples)
    times = np.empty(n)
    yaws = np.empty(n)
    az = np.empty(n)
    q = IDENTITY
    for i, s in enumerate(samples):
        times[i] = s.timestamp
        yaws[i] = _yaw(q)
        ax, ay, azl = s.accel
        az[i] = _rotate_to_global(q, ax, ay, azl)[2] - STANDARD_GRAVITY
        if i + 1 < n:
            dt = samples[i + 1].timestamp - s.timestamp
            q = update_orientation(q, s, dt)

    filtered = lowpass(list(zip(times.tolist(), az.tolist())), sample_rate)
    events = detect_steps(filtered)
    t0 = times[0]
    steps = []
    for ev in events:
        idx = int(np.clip(round((ev.timestamp - t0) * sample_rate), 0, n - 1))
        steps.append(ev.with_heading(float(yaws[idx])))
    return steps, times, yaws


def default_initial_guess(mode: str, burst: list[SelectedObservations]) -> Theta:
    """Fresh-start parameter guess: generic model values, strongest-AP pose."""
    start = burst[0].positions[0]
    if mode == "rss":
        ranging: RangingParams = RssParams(p0=-40.0, eta=2.0)
    else:
        ranging = RttParams((0.0, 1.0))
    return Theta(ranging=ranging,
                 pdr=PdrParams(float(start[0]), float(start[1]), 0.0, 0.5))


def true_theta(scenario: ScenarioConfig, mode: str) -> Theta:
    if mode == "rss":
        if scenario.rss is None:
            raise ScenarioError("scenario has no RSS ground truth")
        return Theta(ranging=scenario.rss.params, pdr=scenario.pdr_truth)
    if scenario.rtt is None:
        raise ScenarioError("scenario has no RTT ground truth")
    return Theta(ranging=scenario.rtt.params, pdr=scenario.pdr_truth)


def oracle_fit_ranging(scenario: ScenarioConfig, mode: str,
                       seed: Optional[int] = None) -> RangingParams:
    """Benchmark ranging parameters: least-squares fit against true distances.

    Mirrors how an operator with ground truth would calibrate: collect
    measurements along the test path, pair them with the actual distances,
    and fit the model.  For the pathloss model the fit is ordinary least
    squares of RSS on log-distance; for RTT it is a straight regression of
    true distance on raw distance.  This is the accuracy ceiling the online
    method is compared against; with noiseless measurements it returns the
    world-generating parameters.
    """
    world_cfg = WorldConfig(registry=scenario.registry, pdr=scenario.pdr_truth,
                            rss=scenario.rss, rtt=scenario.rtt,
                            seed=scenario.seed if seed is None else seed)
    world = SyntheticWorld(world_cfg)
    truth = synth_truth(scenario.walk, dt=0.02, hold=scenario.imu.hold)
    period = 1.0 / scenario.walk.cadence
    instants = np.arange(truth.walk_start + period,
                         truth.walk_start + scenario.walk.duration, period)
    distances, sources = [], []
    for t in instants:
        pos = truth.position_at(float(t))
        snap = snapshot_at(world, float(t), pos, mode)
        # fit on the same AP subset the runtime pipeline would select, so
        # the ceiling is not skewed by selection favouring lucky draws
        selected = select_aps(snap, scenario.registry, scenario.engine.n_max)
        for ap_pos, src in zip(selected.positions, selected.sources):
            distances.append(float(np.hypot(pos[0] - ap_pos[0],
                                            pos[1] - ap_pos[1])))
            sources.append(float(src))
    d = np.array(distances)
    s = np.array(sources)
    if mode == "rss":
        # regression of RSS on log-distance: slope -10*eta, intercept p0;
        # equivalent to a relative-error distance fit, which stays unbiased
        # in the median under log-normal shadowing
        design = np.stack([np.ones_like(d), np.log10(d)], axis=1)
        intercept, slope = np.linalg.lstsq(design, s, rcond=None)[0]
        return RssParams(p0=float(intercept), eta=float(-slope / 10.0))
    design = np.stack([np.ones_like(s), s], axis=1)
    c0, c1 = np.linalg.lstsq(design, d, rcond=None)[0]
    return RttParams((float(c0), float(c1)))


def run_scenario(scenario: ScenarioConfig, mode: str, rho: float,
                 seed: Optional[int] = None, benchmark: bool = False) -> RunResult:
    """Execute one full positioning run and score it against ground truth."""
    if mode not in ("rss", "rtt"):
        raise ScenarioError(f"mode must be 'rss' or 'rtt', got {mode!r}")
    if not scenario.registry.of_kind(mode):
        raise ScenarioError(f"scenario has no APs of kind {mode!r}")

    eng = scenario.engine
    world_cfg = WorldConfig(registry=scenario.registry, pdr=scenario.pdr_truth,
                            rss=scenario.rss, rtt=scenario.rtt,
                            seed=scenario.seed if seed is None else seed)
    world = SyntheticWorld(world_cfg)
    truth = synth_truth(scenario.walk, dt=0.02, hold=scenario.imu.hold)
    amp = accel_amplitude_for(scenario.pdr_truth.alpha,
                              scenario.walk.speed / scenario.walk.cadence,
                              scenario.walk.cadence, scenario.imu.sample_rate)
    samples = synth_imu(truth, scenario.walk, scenario.pdr_truth.phi_ref, amp,
                        scenario.imu.sample_rate)
    steps, _, _ = steps_from_imu(samples, scenario.imu.sample_rate)
    if len(steps) < eng.burst_steps + 2:
        raise InsufficientDataError(
            f"walk produced only {len(steps)} steps; need more than "
            f"{eng.burst_steps} for calibration plus tracking")

    def ranging_epoch(t: float) -> SelectedObservations:
        snap = snapshot_at(world, t, truth.position_at(t), mode)
        return select_aps(snap, scenario.registry, eng.n_max)

    burst = steps[:eng.burst_steps]
    burst_snaps = [ranging_epoch(s.timestamp) for s in burst]
    ranging_times = [s.timestamp for s in burst]

    initial_trace = None
    if benchmark:
        theta = Theta(ranging=oracle_fit_ranging(scenario, mode, seed),
                      pdr=scenario.pdr_truth)
    else:
        result: InitialCalResult = initial_calibrate(
            default_initial_guess(mode, burst_snaps), burst, burst_snaps, eng.gd)
        theta = result.theta
        initial_trace = result.trace

    p_after_burst = roll_forward(theta.pdr, burst)[-1]
    state = init_state(theta, p_after_burst, eng.noise,
                       step_index=eng.burst_steps)
    buffer = CalibrationBuffer(eng.buffer_capacity)
    for snap in burst_snaps:
        buffer.push(snap)

    params = theta.ranging
    policy = GatePolicy(rho)
    last_selfcal = burst[-1].timestamp
    selfcal_traces: list[CalibrationTrace] = []
    trace = [StateTraceRow(state.step_index, burst[-1].timestamp,
                           float(state.z[0]), float(state.z[1]),
                           float(state.z[2]), float(state.z[3]),
                           float(state.P[0, 0]), float(state.P[1, 1]), 0)]

    for step in steps[eng.burst_steps:]:
        state, ranged = step_engine(
            state, step, lambda t=step.timestamp: ranging_epoch(t), params,
            policy, eng.noise, buffer)
        if ranged:
            ranging_times.append(step.timestamp)
        trace.append(StateTraceRow(state.step_index, step.timestamp,
                                   float(state.z[0]), float(state.z[1]),
                                   float(state.z[2]), float(state.z[3]),
                                   float(state.P[0, 0]), float(state.P[1, 1]),
                                   int(ranged)))
        if (not benchmark and len(buffer) > 0
                and step.timestamp - last_selfcal >= eng.selfcal_period):
            result = self_calibrate(params, buffer, eng.gd)
            params = result.params
            selfcal_traces.append(result.trace)
            last_selfcal = step.timestamp

    est_times = np.array([row.t for row in trace])
    est_pos = np.array([[row.x, row.y] for row in trace])
    report = compute_report(est_times, est_pos, truth.times, truth.positions,
                            ranging_times, eng.burst_steps)
    return RunResult(report=report, state_trace=trace,
                     initial_trace=initial_trace, selfcal_traces=selfcal_traces,
                     ranging_times=ranging_times, steps=steps,
                     final_ranging=params, final_state=state)
