"""Evaluation metrics for estimated trajectories and ranging activity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

TRUTH_ALIGN_TOLERANCE = 0.5  # s, estimates further from any truth sample are dropped


@dataclass
class RunReport:
    mae: float
    rmse: float
    p75: float
    mean_ranging_interval: float  # nan when fewer than 2 counted epochs
    errors: np.ndarray            # per-estimate position error series

    def headline(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "p75": self.p75,
            "mean_ranging_interval": self.mean_ranging_interval,
            "n_estimates": int(len(self.errors)),
        }


def position_errors(estimate_times, estimate_positions, truth_times,
                    truth_positions) -> np.ndarray:
    """Errors of each estimate against the nearest-in-time truth sample."""
    est_t = np.asarray(estimate_times, dtype=float)
    est_p = np.asarray(estimate_positions, dtype=float)
    tru_t = np.asarray(truth_times, dtype=float)
    tru_p = np.asarray(truth_positions, dtype=float)
    if est_t.size == 0 or tru_t.size == 0:
        raise InsufficientDataError("empty estimate or truth series")

    idx = np.searchsorted(tru_t, est_t)
    idx = np.clip(idx, 1, len(tru_t) - 1)
    left = idx - 1
    nearest = np.where(np.abs(tru_t[left] - est_t) <= np.abs(tru_t[idx] - est_t),
                       left, idx)
    aligned = np.abs(tru_t[nearest] - est_t) <= TRUTH_ALIGN_TOLERANCE
    if not np.any(aligned):
        raise InsufficientDataError("no estimate aligns with the truth series")
    return np.linalg.norm(est_p[aligned] - tru_p[nearest[aligned]], axis=1)


def mean_ranging_interval(ranging_timestamps, burst_count: int) -> float:
    """Average spacing of ranging epochs, excluding the initial burst."""
    t = np.sort(np.asarray(ranging_timestamps, dtype=float))[burst_count:]
    if len(t) < 2:
        return float("nan")
    return float(np.mean(np.diff(t)))


def compute_report(estimate_times, estimate_positions, truth_times,
                   truth_positions, ranging_timestamps,
                   burst_count: int) -> RunReport:
    """Headline accuracy metrics plus the per-estimate error series."""
    errors = position_errors(estimate_times, estimate_positions,
                             truth_times, truth_positions)
    return RunReport(
        mae=float(np.mean(errors)),
        rmse=float(np.sqrt(np.mean(errors**2))),
        p75=float(np.percentile(errors, 75)),
        mean_ranging_interval=mean_ranging_interval(ranging_timestamps, burst_count),
        errors=errors,
    )


def cdf_points(errors: Sequence[float] | np.ndarray) -> list[tuple[float, float]]:
    """Sorted (error, cumulative fraction) pairs; pool runs by concatenating."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise InvalidInputError("cannot build a CDF from an empty error series")
    n = e.size
    return [(float(e[i]), (i + 1) / n) for i in range(n)]
