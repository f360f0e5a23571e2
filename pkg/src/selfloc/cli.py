"""Command-line scenario runner and experiment sweeper.

``selfloc run`` executes the full simulate -> calibrate -> fuse -> report
pipeline for each requested gate threshold and writes all artifacts below
the output directory.  ``selfloc validate`` checks a scenario file and
prints diagnostics without side effects.

Exit codes: 0 success, 2 scenario parse/validation problems, 3 runtime
divergence of a calibration descent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import io as sio
from .errors import DivergenceError, ScenarioError, SelflocError
from .metrics import cdf_points
from .pipeline import RunResult, run_scenario

DEFAULT_OUT_ENV = "SELFLOC_OUT"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


def _rho_label(rho: float) -> str:
    return format(rho, "g").replace(".", "p")


def write_run_artifacts(out_dir: Path, result: RunResult, metadata: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    sio.write_report_json(out_dir / "report.json", result.report.headline(), metadata)
    sio.write_state_trace_csv(out_dir / "state_trace.csv", result.state_trace)
    sio.write_cdf_csv(out_dir / "cdf.csv", cdf_points(result.report.errors))
    sio.write_step_csv(out_dir / "steps.csv", result.steps)
    if result.initial_trace is not None:
        sio.write_calibration_trace_csv(out_dir / "calibration_initial.csv",
                                        result.initial_trace)
    for i, trace in enumerate(result.selfcal_traces, start=1):
        sio.write_calibration_trace_csv(out_dir / f"calibration_selfcal_{i:02d}.csv",
                                        trace)


def _cmd_run(args) -> int:
    try:
        scenario = sio.load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    rho_values = args.rho if args.rho is not None else list(scenario.rho_values)
    if any(r < 0 for r in rho_values):
        print("error: rho values must be non-negative", file=sys.stderr)
        return EXIT_VALIDATION
    seed = args.seed if args.seed is not None else scenario.seed
    out_root = Path(args.out or os.environ.get(DEFAULT_OUT_ENV, "selfloc_out"))

    runs: list[tuple[str, float, bool]] = []
    if args.benchmark:
        runs.append(("benchmark", 0.0, True))
    runs.extend((f"rho_{_rho_label(r)}", r, False) for r in rho_values)

    try:
        for label, rho, benchmark in runs:
            result = run_scenario(scenario, args.mode, rho, seed=seed,
                                  benchmark=benchmark)
            run_dir = out_root / f"{scenario.name}_{args.mode}_seed{seed}" / label
            metadata = {
                "scenario": scenario.name,
                "mode": args.mode,
                "rho": rho,
                "seed": seed,
                "benchmark": benchmark,
            }
            write_run_artifacts(run_dir, result, metadata)
            r = result.report
            print(f"{scenario.name} mode={args.mode} {label} seed={seed}: "
                  f"mae={r.mae:.3f} m rmse={r.rmse:.3f} m p75={r.p75:.3f} m "
                  f"ranging_interval={r.mean_ranging_interval:.2f} s -> {run_dir}")
    except DivergenceError as exc:
        print(f"error: calibration diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ScenarioError, SelflocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_validate(args) -> int:
    path = Path(args.scenario)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        print(f"error: {path}: no such file", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"error: {path}: JSON parse error at line {exc.lineno}, "
              f"column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_VALIDATION

    diagnostics = sio.validate_scenario(data)
    for diag in diagnostics:
        print(diag)
    if diagnostics:
        return EXIT_VALIDATION
    print(f"{path}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfloc",
        description="Calibration-free indoor positioning experiments on "
                    "synthetic worlds")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario and write artifacts")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--mode", required=True, choices=["rss", "rtt"],
                     help="ranging source to use")
    run.add_argument("--rho", type=lambda s: [float(v) for v in s.split(",")],
                     default=None,
                     help="comma-separated gate thresholds (default: scenario)")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    run.add_argument("--out", default=None,
                     help=f"output root (default: ${DEFAULT_OUT_ENV} or ./selfloc_out)")
    run.add_argument("--benchmark", action="store_true",
                     help="also run with true parameters injected (rho=0, "
                          "no calibration)")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True, help="scenario JSON file")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
