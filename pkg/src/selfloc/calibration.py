"""Online calibration of ranging and dead-reckoning parameters.

Two procedures live here.  *Initial calibration* jointly fits every system
parameter (ranging model plus start pose, reference heading and stride
coefficient) by gradient descent on the squared mismatch between
dead-reckoned AP distances and model distance estimates over the first B
steps.  *Self-calibration* periodically refines the ranging parameters
alone, anchoring each buffered ranging epoch at the linear least-squares
position so the cost of an epoch is the best it could achieve; the position
anchor is differentiated analytically through the closed-form solution.

Both descents take plain gradient steps ``theta <- theta - rate * grad`` and
accept an iterate only if the total cost did not increase; a rejected step
halves the working step scale and is retried, so recorded cost traces are
non-increasing by construction.  Descent stops at the iteration cap or when
ten consecutive iterations improve the cost by less than 0.1 %.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (DegenerateGeometryError, DivergenceError,
                     InsufficientDataError, InvalidInputError)
from .orientation import wrap_to_pi
from .pdr import PdrParams, StepEvent
from .ranging import (RangingParams, SelectedObservations, eval_distance,
                      eval_distance_gradient, kind_of, reference_distance)

MAX_GEOMETRY_CONDITION = 1e8
MIN_STEP_SCALE = 1e-12


@dataclass
class GdConfig:
    """Gradient-descent settings shared by both calibration procedures."""

    learning_rate: float = 1e-3          # initial calibration
    selfcal_learning_rate: float = 1e-3  # ranging-only self-calibration
    max_iters: int = 5000
    min_improvement: float = 1e-3        # relative, over the window below
    improvement_window: int = 10
    param_scales: np.ndarray | None = None  # per-parameter step multipliers

    def __post_init__(self):
        if self.learning_rate <= 0 or self.selfcal_learning_rate <= 0:
            raise InvalidInputError("learning rates must be positive")
        if self.improvement_window < 1:
            raise InvalidInputError("improvement window must be at least 1")


@dataclass(frozen=True)
class Theta:
    """The full trainable parameter set: ranging model plus PDR pose/stride."""

    ranging: RangingParams
    pdr: PdrParams

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(self.ranging.param_names) + ("x0", "y0", "phi_ref", "alpha")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.ranging.as_vector(), self.pdr.as_vector()])

    def with_vector(self, vec: np.ndarray) -> "Theta":
        nr = self.ranging.n_params
        return Theta(
            ranging=self.ranging.with_vector(vec[:nr]),
            pdr=PdrParams(float(vec[nr]), float(vec[nr + 1]),
                          wrap_to_pi(float(vec[nr + 2])), float(vec[nr + 3])),
        )


@dataclass
class CalibrationTrace:
    """Accepted-iteration history: one row per update, ``(iter, cost, *params)``."""

    param_names: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    @property
    def costs(self) -> np.ndarray:
        return np.array([row[1] for row in self.rows])

    @property
    def iterations(self) -> int:
        return 0 if not self.rows else int(self.rows[-1][0])


@dataclass
class InitialCalResult:
    theta: Theta
    trace: CalibrationTrace


@dataclass
class SelfCalResult:
    params: RangingParams
    trace: CalibrationTrace
    skipped: int  # snapshots excluded for degenerate geometry


class CalibrationBuffer:
    """FIFO of the most recent selected ranging epochs (oldest evicted first)."""

    def __init__(self, capacity: int = 100):
        if capacity < 1:
            raise InvalidInputError("buffer capacity must be at least 1")
        self.capacity = capacity
        self._snapshots: deque[SelectedObservations] = deque(maxlen=capacity)

    def push(self, snapshot: SelectedObservations) -> None:
        self._snapshots.append(snapshot)

    def __len__(self) -> int:
        return len(self._snapshots)

    def __iter__(self):
        return iter(self._snapshots)

    def snapshots(self) -> list[SelectedObservations]:
        return list(self._snapshots)


# ---------------------------------------------------------------------------
# shared descent driver

def _descend(cost_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
             vec0: np.ndarray, rate: float, cfg: GdConfig,
             param_names: tuple[str, ...]) -> tuple[np.ndarray, CalibrationTrace]:
    scales = np.ones_like(vec0) if cfg.param_scales is None \
        else np.asarray(cfg.param_scales, dtype=float)
    if scales.shape != vec0.shape:
        raise InvalidInputError("param_scales shape does not match parameter count")

    cost, grad = cost_grad(vec0)
    if not np.isfinite(cost):
        raise DivergenceError("initial cost is not finite", last_params=vec0.copy())

    trace = CalibrationTrace(param_names, [(0, cost, *vec0.tolist())])
    vec = vec0.copy()
    step_scale = 1.0
    costs = [cost]
    window = cfg.improvement_window

    for it in range(1, cfg.max_iters + 1):
        if not np.all(np.isfinite(grad)):
            raise DivergenceError("gradient is not finite", last_params=vec.copy())
        accepted = False
        while step_scale >= MIN_STEP_SCALE:
            cand = vec - rate * step_scale * scales * grad
            cand_cost, cand_grad = cost_grad(cand)
            if np.isfinite(cand_cost) and cand_cost <= cost:
                accepted = True
                break
            step_scale *= 0.5
        if not accepted:
            break
        vec, cost, grad = cand, cand_cost, cand_grad
        costs.append(cost)
        trace.rows.append((it, cost, *vec.tolist()))
        if len(costs) > window:
            ref = costs[-1 - window]
            if ref <= 0.0 or (ref - cost) / ref < cfg.min_improvement:
                break
    return vec, trace


# ---------------------------------------------------------------------------
# initial calibration

def _check_burst(steps: Sequence[StepEvent],
                 snapshots: Sequence[SelectedObservations]) -> None:
    if len(steps) != len(snapshots):
        raise InvalidInputError(
            f"{len(steps)} steps but {len(snapshots)} ranging snapshots")
    if len(steps) < 2:
        raise InsufficientDataError("initial calibration needs at least 2 steps")
    for snap in snapshots:
        if len(snap) < 1:
            raise InsufficientDataError("every burst snapshot needs at least one AP")


def _initial_cost_grad(vec: np.ndarray, kind: str, d0: float,
                       betas: np.ndarray, headings: np.ndarray,
                       snapshots: Sequence[SelectedObservations],
                       want_grad: bool = True) -> tuple[float, np.ndarray]:
    nr = len(vec) - 4
    rvec = vec[:nr]
    x0, y0, phi_ref, alpha = vec[nr:]

    phis = phi_ref + headings
    move = np.stack([-np.sin(phis), np.cos(phis)], axis=1)        # g
    move_d = np.stack([-np.cos(phis), -np.sin(phis)], axis=1)     # dg/dphi
    p_hat = np.array([x0, y0]) + np.cumsum(alpha * betas[:, None] * move, axis=0)
    dp_dphi = np.cumsum(alpha * betas[:, None] * move_d, axis=0)
    dp_dalpha = np.cumsum(betas[:, None] * move, axis=0)

    cost = 0.0
    grad = np.zeros_like(vec)
    for k, snap in enumerate(snapshots):
        dhat = np.atleast_1d(eval_distance(kind, rvec, snap.sources, d0))
        diff = p_hat[k] - snap.positions
        dist = np.maximum(np.linalg.norm(diff, axis=1), 1e-12)
        resid = dist - dhat
        cost += float(resid @ resid)
        if want_grad:
            ddhat = np.atleast_2d(eval_distance_gradient(kind, rvec, snap.sources, d0))
            unit = diff / dist[:, None]
            two_r = 2.0 * resid
            grad[:nr] -= two_r @ ddhat
            grad[nr + 0] += two_r @ unit[:, 0]
            grad[nr + 1] += two_r @ unit[:, 1]
            grad[nr + 2] += two_r @ (unit @ dp_dphi[k])
            grad[nr + 3] += two_r @ (unit @ dp_dalpha[k])
    return cost, grad


def initial_cost(theta: Theta, steps: Sequence[StepEvent],
                 snapshots: Sequence[SelectedObservations]) -> float:
    """Joint squared-error cost of the candidate parameters over the burst."""
    _check_burst(steps, snapshots)
    betas = np.array([s.beta for s in steps])
    headings = np.array([s.heading for s in steps])
    cost, _ = _initial_cost_grad(theta.as_vector(), kind_of(theta.ranging),
                                 reference_distance(theta.ranging),
                                 betas, headings, snapshots, want_grad=False)
    return cost


def initial_cost_gradient(theta: Theta, steps: Sequence[StepEvent],
                          snapshots: Sequence[SelectedObservations]) -> np.ndarray:
    """Analytic gradient of :func:`initial_cost` in ``theta.param_names`` order."""
    _check_burst(steps, snapshots)
    betas = np.array([s.beta for s in steps])
    headings = np.array([s.heading for s in steps])
    _, grad = _initial_cost_grad(theta.as_vector(), kind_of(theta.ranging),
                                 reference_distance(theta.ranging),
                                 betas, headings, snapshots)
    return grad


def initial_calibrate(init: Theta, steps: Sequence[StepEvent],
                      snapshots: Sequence[SelectedObservations],
                      cfg: GdConfig | None = None) -> InitialCalResult:
    """Jointly fit all parameters to the first-B-steps burst by gradient descent."""
    cfg = cfg or GdConfig()
    _check_burst(steps, snapshots)
    betas = np.array([s.beta for s in steps])
    headings = np.array([s.heading for s in steps])
    kind = kind_of(init.ranging)
    d0 = reference_distance(init.ranging)

    def cost_grad(vec):
        return _initial_cost_grad(vec, kind, d0, betas, headings, snapshots)

    vec, trace = _descend(cost_grad, init.as_vector(), cfg.learning_rate, cfg,
                          init.param_names)
    return InitialCalResult(theta=init.with_vector(vec), trace=trace)


# ---------------------------------------------------------------------------
# least-squares position anchor

def _ls_operator(ap_positions: np.ndarray) -> np.ndarray:
    """(A^T A)^-1 A^T for the differencing linearisation, shape (2, N-1)."""
    pos = np.asarray(ap_positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 3:
        raise DegenerateGeometryError(
            f"least-squares anchor needs >= 3 APs, got shape {pos.shape}")
    a = 2.0 * (pos[1:] - pos[0])
    gram = a.T @ a
    if np.linalg.cond(gram) >= MAX_GEOMETRY_CONDITION:
        raise DegenerateGeometryError("AP geometry is collinear or near-collinear")
    return np.linalg.solve(gram, a.T)


def _ls_rhs(distances: np.ndarray, ap_positions: np.ndarray) -> np.ndarray:
    normsq = np.sum(ap_positions**2, axis=1)
    return normsq[1:] - normsq[0] - distances[1:]**2 + distances[0]**2


def ls_position(distances, ap_positions) -> np.ndarray:
    """Closed-form least-squares position from AP distances.

    The first AP anchors the differencing, exactly as the self-calibration
    gradient assumes.
    """
    d = np.asarray(distances, dtype=float)
    pos = np.asarray(ap_positions, dtype=float)
    if d.shape[0] != pos.shape[0]:
        raise InvalidInputError("distances and AP positions disagree in length")
    op = _ls_operator(pos)
    return op @ _ls_rhs(d, pos)


def ls_position_gradient(params: RangingParams,
                         snapshot: SelectedObservations) -> np.ndarray:
    """d(p*)/d(theta) for each ranging parameter, shape (2, n_params)."""
    op = _ls_operator(snapshot.positions)
    kind = kind_of(params)
    d0 = reference_distance(params)
    vec = params.as_vector()
    dhat = np.atleast_1d(eval_distance(kind, vec, snapshot.sources, d0))
    ddhat = np.atleast_2d(eval_distance_gradient(kind, vec, snapshot.sources, d0))
    db = -2.0 * dhat[1:, None] * ddhat[1:] + 2.0 * dhat[0] * ddhat[0]
    return op @ db


# ---------------------------------------------------------------------------
# self-calibration of the ranging module

@dataclass
class _SnapshotBatch:
    """Same-size snapshots stacked for vectorised cost/gradient evaluation."""

    positions: np.ndarray  # (M, N, 2)
    sources: np.ndarray    # (M, N)
    ls_ops: np.ndarray     # (M, 2, N-1)


def _prepare_batches(snapshots: Iterable[SelectedObservations]) \
        -> tuple[list[_SnapshotBatch], int]:
    by_size: dict[int, list[tuple[SelectedObservations, np.ndarray]]] = {}
    skipped = 0
    for snap in snapshots:
        try:
            op = _ls_operator(snap.positions)
        except DegenerateGeometryError:
            skipped += 1
            continue
        by_size.setdefault(len(snap), []).append((snap, op))
    batches = [
        _SnapshotBatch(
            positions=np.stack([s.positions for s, _ in group]),
            sources=np.stack([s.sources for s, _ in group]),
            ls_ops=np.stack([op for _, op in group]),
        )
        for group in by_size.values()
    ]
    return batches, skipped


def _selfcal_cost_grad(vec: np.ndarray, kind: str, d0: float,
                       batches: list[_SnapshotBatch],
                       want_grad: bool = True) -> tuple[float, np.ndarray]:
    cost = 0.0
    grad = np.zeros_like(vec)
    for batch in batches:
        pos, src, ops = batch.positions, batch.sources, batch.ls_ops
        dhat = eval_distance(kind, vec, src, d0)                     # (M, N)
        normsq = np.sum(pos**2, axis=2)
        b = normsq[:, 1:] - normsq[:, :1] - dhat[:, 1:]**2 + dhat[:, :1]**2
        p_star = np.einsum("mij,mj->mi", ops, b)                     # (M, 2)
        diff = p_star[:, None, :] - pos                              # (M, N, 2)
        dist = np.maximum(np.sqrt(np.sum(diff**2, axis=2)), 1e-12)
        resid = dist - dhat
        cost += float(np.sum(resid**2))
        if want_grad:
            ddhat = eval_distance_gradient(kind, vec, src, d0)       # (M, N, P)
            db = (-2.0 * dhat[:, 1:, None] * ddhat[:, 1:, :]
                  + 2.0 * dhat[:, :1, None] * ddhat[:, :1, :])       # (M, N-1, P)
            dp = np.einsum("mij,mjp->mip", ops, db)                  # (M, 2, P)
            proj = np.einsum("mni,mip->mnp", diff / dist[:, :, None], dp)
            grad += np.einsum("mn,mnp->p", 2.0 * resid, proj - ddhat)
    return cost, grad


def selfcal_cost(params: RangingParams,
                 snapshots: Iterable[SelectedObservations]) -> float:
    """Total best-achievable ranging cost of the given epochs."""
    batches, _ = _prepare_batches(snapshots)
    if not batches:
        raise InsufficientDataError("no snapshot has usable AP geometry")
    cost, _ = _selfcal_cost_grad(params.as_vector(), kind_of(params),
                                 reference_distance(params), batches,
                                 want_grad=False)
    return cost


def selfcal_cost_gradient(params: RangingParams,
                          snapshot: SelectedObservations) -> np.ndarray:
    """Analytic gradient of one epoch's best-achievable cost w.r.t. the params.

    Route-equivalent to the batched evaluation used inside
    :func:`self_calibrate`; exposed for verification and diagnostics.
    """
    vec = params.as_vector()
    kind = kind_of(params)
    d0 = reference_distance(params)
    dhat = np.atleast_1d(eval_distance(kind, vec, snapshot.sources, d0))
    ddhat = np.atleast_2d(eval_distance_gradient(kind, vec, snapshot.sources, d0))
    p_star = ls_position(dhat, snapshot.positions)
    dp = ls_position_gradient(params, snapshot)                      # (2, P)
    diff = p_star - snapshot.positions
    dist = np.maximum(np.linalg.norm(diff, axis=1), 1e-12)
    resid = dist - dhat
    proj = (diff / dist[:, None]) @ dp                               # (N, P)
    return (2.0 * resid) @ (proj - ddhat)


def self_calibrate(params: RangingParams, buffer: CalibrationBuffer,
                   cfg: GdConfig | None = None) -> SelfCalResult:
    """Refine ranging parameters against the buffered epochs.

    Each iteration sums the per-epoch gradients of the best-achievable cost
    (anchored at the least-squares position) and takes one descent step.
    Epochs whose AP geometry cannot support the position anchor are skipped
    and counted, not fatal.
    """
    cfg = cfg or GdConfig()
    if len(buffer) == 0:
        raise InsufficientDataError("calibration buffer is empty")
    batches, skipped = _prepare_batches(buffer)
    if not batches:
        raise InsufficientDataError("all buffered snapshots have degenerate geometry")
    kind = kind_of(params)
    d0 = reference_distance(params)

    def cost_grad(vec):
        return _selfcal_cost_grad(vec, kind, d0, batches)

    vec, trace = _descend(cost_grad, params.as_vector(),
                          cfg.selfcal_learning_rate, cfg, tuple(params.param_names))
    return SelfCalResult(params=params.with_vector(vec), trace=trace,
                         skipped=skipped)
