"""Wi-Fi ranging models: trainable source-to-distance conversion and AP selection.

Two model variants are supported.  The RSS variant inverts a log-distance
pathloss law with trainable reference power ``p0`` and pathloss exponent
``eta`` (the reference distance ``d0`` is fixed at 1 m by convention; ``p0``
absorbs any rescaling).  The RTT variant corrects raw round-trip-time
distances with a trainable polynomial, clamped at zero so calibrated
distances are never negative.

All numeric operations accept scalars or numpy arrays of source values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import InvalidInputError

LN10 = math.log(10.0)


@dataclass(frozen=True)
class AccessPoint:
    ap_id: str
    x: float
    y: float
    kind: str  # "rss" | "rtt"

    def __post_init__(self):
        if self.kind not in ("rss", "rtt"):
            raise InvalidInputError(f"unknown AP kind {self.kind!r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"AP {self.ap_id}: position must be finite")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


class ApRegistry:
    """Immutable lookup of access points by id."""

    def __init__(self, aps: Iterable[AccessPoint]):
        self._aps: dict[str, AccessPoint] = {}
        for ap in aps:
            if ap.ap_id in self._aps:
                raise InvalidInputError(f"duplicate AP id {ap.ap_id!r}")
            self._aps[ap.ap_id] = ap

    def __len__(self) -> int:
        return len(self._aps)

    def __iter__(self):
        return iter(self._aps.values())

    def __getitem__(self, ap_id: str) -> AccessPoint:
        try:
            return self._aps[ap_id]
        except KeyError:
            raise InvalidInputError(f"unknown AP id {ap_id!r}") from None

    def of_kind(self, kind: str) -> list[AccessPoint]:
        return [ap for ap in self._aps.values() if ap.kind == kind]


@dataclass(frozen=True)
class RssParams:
    """Pathloss-model parameters: reference power [dBm] and pathloss exponent."""

    p0: float
    eta: float
    d0: float = 1.0  # reference distance, fixed constant

    def __post_init__(self):
        if not (self.eta > 0):
            raise InvalidInputError(f"eta must be positive, got {self.eta}")
        if not (self.d0 > 0):
            raise InvalidInputError(f"d0 must be positive, got {self.d0}")

    n_params = 2
    param_names = ("p0", "eta")

    def as_vector(self) -> np.ndarray:
        return np.array([self.p0, self.eta])

    def with_vector(self, vec) -> "RssParams":
        return RssParams(float(vec[0]), float(vec[1]), self.d0)


@dataclass(frozen=True)
class RttParams:
    """Polynomial correction coefficients (c0, c1, ..., cm) for raw distances."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        degree = len(self.coeffs) - 1
        if degree not in (1, 2):
            raise InvalidInputError(f"polynomial degree must be 1 or 2, got {degree}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def n_params(self) -> int:
        return len(self.coeffs)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(f"c{i}" for i in range(len(self.coeffs)))

    def as_vector(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)

    def with_vector(self, vec) -> "RttParams":
        return RttParams(tuple(float(c) for c in vec))


RangingParams = Union[RssParams, RttParams]


@dataclass(frozen=True)
class RangingSnapshot:
    """One ranging epoch: per-AP source values (RSS dBm or raw RTT meters)."""

    timestamp: float
    observations: tuple[tuple[str, float], ...]  # (ap_id, source value)

    def __post_init__(self):
        if len(self.observations) < 1:
            raise InvalidInputError("snapshot needs at least one observation")
        ids = [ap_id for ap_id, _ in self.observations]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("snapshot contains duplicate AP ids")


@dataclass(frozen=True)
class SelectedObservations:
    """A snapshot joined with AP positions after selection, ready for math."""

    timestamp: float
    ap_ids: tuple[str, ...]
    positions: np.ndarray  # (N, 2)
    sources: np.ndarray    # (N,)
    kind: str

    def __len__(self) -> int:
        return len(self.ap_ids)


def eval_distance(kind: str, vec: np.ndarray, source, d0: float = 1.0):
    """Distance model evaluated on a raw parameter vector, any array shape.

    Performs no parameter validation so optimizers can probe candidate
    vectors freely; invalid regions simply yield large or non-finite costs.
    """
    source = np.asarray(source, dtype=float)
    if kind == "rss":
        p0, eta = vec[0], vec[1]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return d0 * 10.0 ** ((p0 - source) / (10.0 * eta))
    poly = sum(c * source**i for i, c in enumerate(vec))
    return np.maximum(poly, 0.0)


def eval_distance_gradient(kind: str, vec: np.ndarray, source, d0: float = 1.0):
    """Per-parameter partials of :func:`eval_distance`, stacked on a new last axis."""
    source = np.asarray(source, dtype=float)
    if kind == "rss":
        p0, eta = vec[0], vec[1]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            d = d0 * 10.0 ** ((p0 - source) / (10.0 * eta))
            dp0 = d * LN10 / (10.0 * eta)
            deta = -d * LN10 * (p0 - source) / (10.0 * eta**2)
        return np.stack([dp0, deta], axis=-1)
    poly = sum(c * source**i for i, c in enumerate(vec))
    active = (poly > 0.0).astype(float)
    return np.stack([active * source**i for i in range(len(vec))], axis=-1)


def kind_of(params: RangingParams) -> str:
    return "rss" if isinstance(params, RssParams) else "rtt"


def reference_distance(params: RangingParams) -> float:
    return params.d0 if isinstance(params, RssParams) else 1.0


def estimate_distance(params: RangingParams, source):
    """Distance estimate from a ranging source value (array-friendly)."""
    src = np.asarray(source, dtype=float)
    if not np.all(np.isfinite(src)):
        raise InvalidInputError("ranging source must be finite")
    out = eval_distance(kind_of(params), params.as_vector(), src,
                        reference_distance(params))
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def distance_gradient(params: RangingParams, source):
    """Partials of the distance estimate with respect to each model parameter.

    Returns shape ``(n_params,)`` for a scalar source or ``(N, n_params)``
    for an array.  In the clamped region of the RTT model the subgradient
    is defined as zero.
    """
    return eval_distance_gradient(kind_of(params), params.as_vector(), source,
                                  reference_distance(params))


def rss_from_distance(params: RssParams, distance) -> np.ndarray:
    """Noiseless pathloss-model RSS at a given distance (model inverse)."""
    distance = np.asarray(distance, dtype=float)
    return params.p0 - 10.0 * params.eta * np.log10(distance / params.d0)


def select_aps(snapshot: RangingSnapshot, registry: ApRegistry,
               n_max: int = 6) -> SelectedObservations:
    """Pick the most informative APs of an epoch, deterministically ordered.

    RSS observations are ranked strongest-first, RTT observations by
    smallest raw distance; ties break on the lexically smaller AP id.
    """
    if n_max < 1:
        raise InvalidInputError("n_max must be at least 1")
    aps = [registry[ap_id] for ap_id, _ in snapshot.observations]
    kinds = {ap.kind for ap in aps}
    if len(kinds) != 1:
        raise InvalidInputError("snapshot mixes AP kinds")
    kind = kinds.pop()
    if kind == "rss":
        key = lambda pair: (-pair[1], pair[0])
    else:
        key = lambda pair: (pair[1], pair[0])
    chosen = sorted(snapshot.observations, key=key)[:n_max]
    return SelectedObservations(
        timestamp=snapshot.timestamp,
        ap_ids=tuple(ap_id for ap_id, _ in chosen),
        positions=np.array([[registry[a].x, registry[a].y] for a, _ in chosen]),
        sources=np.array([s for _, s in chosen]),
        kind=kind,
    )
