"""File formats: CSV streams/traces and the scenario JSON schema.

Floats are serialised with ``repr`` so identical runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .calibration import CalibrationTrace, GdConfig
from .errors import ScenarioError
from .fusion import NoiseConfig
from .orientation import ImuSample
from .pdr import PdrParams, StepEvent
from .pipeline import EngineConfig, ImuConfig, ScenarioConfig, StateTraceRow
from .ranging import AccessPoint, ApRegistry, RangingSnapshot, RssParams, RttParams
from .simulator import RssWorldModel, RttWorldModel, Walk


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# --- IMU stream: t,gx,gy,gz,ax,ay,az ---------------------------------------

def write_imu_csv(path, samples: Iterable[ImuSample]) -> None:
    _write_csv(path, ["t", "gx", "gy", "gz", "ax", "ay", "az"],
               ((s.timestamp, *s.gyro, *s.accel) for s in samples))


def read_imu_csv(path) -> list[ImuSample]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ImuSample(float(row["t"]),
                                 (float(row["gx"]), float(row["gy"]), float(row["gz"])),
                                 (float(row["ax"]), float(row["ay"]), float(row["az"]))))
    return out


# --- AP registry: id,x,y,kind -----------------------------------------------

def write_ap_csv(path, registry: ApRegistry) -> None:
    _write_csv(path, ["id", "x", "y", "kind"],
               ((ap.ap_id, ap.x, ap.y, ap.kind) for ap in registry))


def read_ap_csv(path) -> ApRegistry:
    with open(path, newline="") as fh:
        return ApRegistry(AccessPoint(row["id"], float(row["x"]), float(row["y"]),
                                      row["kind"])
                          for row in csv.DictReader(fh))


# --- ranging snapshot log: t,ap_id,source -----------------------------------

def write_snapshot_csv(path, snapshots: Iterable[RangingSnapshot]) -> None:
    rows = []
    for snap in snapshots:
        rows.extend((snap.timestamp, ap_id, src) for ap_id, src in snap.observations)
    _write_csv(path, ["t", "ap_id", "source"], rows)


def read_snapshot_csv(path) -> list[RangingSnapshot]:
    grouped: dict[float, list[tuple[str, float]]] = {}
    order: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t = float(row["t"])
            if t not in grouped:
                grouped[t] = []
                order.append(t)
            grouped[t].append((row["ap_id"], float(row["source"])))
    return [RangingSnapshot(t, tuple(grouped[t])) for t in order]


# --- step log: t,beta,heading -------------------------------------------------

def write_step_csv(path, steps: Iterable[StepEvent]) -> None:
    _write_csv(path, ["t", "beta", "heading"],
               ((s.timestamp, s.beta, s.heading) for s in steps))


def read_step_csv(path) -> list[StepEvent]:
    with open(path, newline="") as fh:
        return [StepEvent(float(r["t"]), float(r["beta"]), float(r["heading"]))
                for r in csv.DictReader(fh)]


# --- filter state trace -------------------------------------------------------

def write_state_trace_csv(path, rows: Iterable[StateTraceRow]) -> None:
    _write_csv(path, ["k", "t", "x", "y", "phi_ref", "alpha", "p11", "p22", "ranged"],
               rows)


# --- calibration trace: iter,cost,param_1..param_k ----------------------------

def write_calibration_trace_csv(path, trace: CalibrationTrace) -> None:
    _write_csv(path, ["iter", "cost", *trace.param_names], trace.rows)


# --- error CDF -----------------------------------------------------------------

def write_cdf_csv(path, points: Iterable[tuple[float, float]]) -> None:
    _write_csv(path, ["error", "cum_fraction"], points)


# --- run report ------------------------------------------------------------------

def write_report_json(path, headline: dict, metadata: dict) -> None:
    payload = dict(metadata)
    payload.update(headline)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --- scenario JSON ----------------------------------------------------------------

def validate_scenario(data) -> list[str]:
    """Schema and invariant checks; returns diagnostics, raises nothing."""
    diags: list[str] = []
    if not isinstance(data, dict):
        return ["scenario: top level must be a JSON object"]

    def _num(value) -> bool:
        return isinstance(value, (int, float)) and math.isfinite(value)

    aps = data.get("aps")
    kinds: dict[str, int] = {}
    if not isinstance(aps, list) or not aps:
        diags.append("aps: required non-empty list")
    else:
        seen = set()
        for i, ap in enumerate(aps):
            if not isinstance(ap, dict):
                diags.append(f"aps[{i}]: must be an object")
                continue
            if not isinstance(ap.get("id"), str) or not ap.get("id"):
                diags.append(f"aps[{i}].id: required non-empty string")
            elif ap["id"] in seen:
                diags.append(f"aps[{i}].id: duplicate id {ap['id']!r}")
            else:
                seen.add(ap["id"])
            for axis in ("x", "y"):
                if not _num(ap.get(axis)):
                    diags.append(f"aps[{i}].{axis}: required finite number")
            kind = ap.get("kind")
            if kind not in ("rss", "rtt"):
                diags.append(f"aps[{i}].kind: must be 'rss' or 'rtt'")
            else:
                kinds[kind] = kinds.get(kind, 0) + 1

    walk = data.get("walk")
    if not isinstance(walk, dict):
        diags.append("walk: required object")
    else:
        wps = walk.get("waypoints")
        if (not isinstance(wps, list) or len(wps) < 2
                or any(not (isinstance(p, list) and len(p) == 2
                            and all(_num(v) for v in p)) for p in wps)):
            diags.append("walk.waypoints: need >= 2 [x, y] pairs of finite numbers")
        if not _num(walk.get("speed")) or walk.get("speed", 0) <= 0:
            diags.append("walk.speed: required positive number")
        if not _num(walk.get("cadence")) or walk.get("cadence", 0) <= 0:
            diags.append("walk.cadence: required positive number")

    truth = data.get("truth")
    if not isinstance(truth, dict):
        diags.append("truth: required object")
    else:
        pdr = truth.get("pdr")
        if not isinstance(pdr, dict):
            diags.append("truth.pdr: required object")
        else:
            alpha = pdr.get("alpha")
            if not _num(alpha) or not (0 < alpha < 2):
                diags.append("truth.pdr.alpha: required number in (0, 2)")
            phi = pdr.get("phi_ref", 0.0)
            if not _num(phi) or not (-math.pi < phi <= math.pi):
                diags.append("truth.pdr.phi_ref: must lie in (-pi, pi]")
        rss = truth.get("rss")
        if rss is not None:
            if not _num(rss.get("p0")):
                diags.append("truth.rss.p0: required finite number")
            if not _num(rss.get("eta")) or rss.get("eta", 0) <= 0:
                diags.append("truth.rss.eta: required positive number")
            if not _num(rss.get("sigma_shadow", 0.0)) or rss.get("sigma_shadow", 0.0) < 0:
                diags.append("truth.rss.sigma_shadow: must be non-negative")
        rtt = truth.get("rtt")
        if rtt is not None:
            if not _num(rtt.get("c0")):
                diags.append("truth.rtt.c0: required finite number")
            if not _num(rtt.get("c1")) or rtt.get("c1", 0) <= 0:
                diags.append("truth.rtt.c1: required positive number")
            if not _num(rtt.get("sigma", 0.0)) or rtt.get("sigma", 0.0) < 0:
                diags.append("truth.rtt.sigma: must be non-negative")
        if kinds.get("rss") and rss is None:
            diags.append("truth.rss: required because the scenario has RSS APs")
        if kinds.get("rtt") and rtt is None:
            diags.append("truth.rtt: required because the scenario has RTT APs")

    rho = data.get("rho", [0.0])
    if not isinstance(rho, list) or not rho:
        diags.append("rho: must be a non-empty list")
    else:
        for i, r in enumerate(rho):
            if not _num(r) or r < 0:
                diags.append(f"rho[{i}]: must be a non-negative number")

    if "seed" in data and not isinstance(data["seed"], int):
        diags.append("seed: must be an integer")

    if kinds.get("rtt", 0) and kinds["rtt"] < 3:
        diags.append("aps: fewer than 3 RTT APs; the least-squares anchor "
                     "needs at least 3 for self-calibration")
    return diags


def scenario_from_dict(data: dict, name: str = "scenario") -> ScenarioConfig:
    diags = validate_scenario(data)
    if diags:
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(diags))

    registry = ApRegistry(AccessPoint(ap["id"], float(ap["x"]), float(ap["y"]),
                                      ap["kind"]) for ap in data["aps"])
    walk = Walk(waypoints=tuple((float(x), float(y)) for x, y in
                                data["walk"]["waypoints"]),
                speed=float(data["walk"]["speed"]),
                cadence=float(data["walk"]["cadence"]))
    truth = data["truth"]
    start = walk.waypoints[0]
    pdr = PdrParams(start[0], start[1],
                    float(truth["pdr"].get("phi_ref", 0.0)),
                    float(truth["pdr"]["alpha"]))
    rss = None
    if truth.get("rss") is not None:
        t = truth["rss"]
        rss = RssWorldModel(RssParams(float(t["p0"]), float(t["eta"])),
                            float(t.get("sigma_shadow", 0.0)))
    rtt = None
    if truth.get("rtt") is not None:
        t = truth["rtt"]
        rtt = RttWorldModel(RttParams((float(t["c0"]), float(t["c1"]))),
                            float(t.get("sigma", 0.0)))

    eng_data = data.get("engine", {})
    gd_data = eng_data.get("gd", {})
    noise_data = eng_data.get("noise", {})
    defaults = NoiseConfig()
    noise = NoiseConfig(
        init_sigmas=tuple(noise_data.get("init_sigmas", defaults.init_sigmas)),
        process_diag=tuple(noise_data.get("process_diag", defaults.process_diag)),
        meas_var_rss=float(noise_data.get("meas_var_rss", defaults.meas_var_rss)),
        meas_var_rtt=float(noise_data.get("meas_var_rtt", defaults.meas_var_rtt)),
    )
    gd = GdConfig(
        learning_rate=float(gd_data.get("learning_rate", 1e-3)),
        selfcal_learning_rate=float(gd_data.get("selfcal_learning_rate", 1e-3)),
        max_iters=int(gd_data.get("max_iters", 5000)),
        min_improvement=float(gd_data.get("min_improvement", 1e-3)),
        improvement_window=int(gd_data.get("improvement_window", 10)),
    )
    engine = EngineConfig(
        n_max=int(eng_data.get("n_max", 6)),
        burst_steps=int(eng_data.get("burst_steps", 8)),
        selfcal_period=float(eng_data.get("selfcal_period", 30.0)),
        buffer_capacity=int(eng_data.get("buffer_capacity", 100)),
        gd=gd,
        noise=noise,
    )
    imu_data = data.get("imu", {})
    imu = ImuConfig(sample_rate=float(imu_data.get("sample_rate", 100.0)),
                    hold=float(imu_data.get("hold", 2.0)))
    return ScenarioConfig(
        name=data.get("name", name), registry=registry, walk=walk,
        pdr_truth=pdr, rss=rss, rtt=rtt, seed=int(data.get("seed", 0)),
        rho_values=tuple(float(r) for r in data.get("rho", [0.0])),
        engine=engine, imu=imu)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    return scenario_from_dict(data, name=path.stem)
