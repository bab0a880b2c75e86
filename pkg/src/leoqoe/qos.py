"""QoS score mapping, composite scores, the weighted objective and fairness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LOWER_IS_BETTER = "lower"
HIGHER_IS_BETTER = "higher"


@dataclass(frozen=True)
class ScoreBounds:
    omega_max: float = 5.0
    omega_min: float = 1.0

    def __post_init__(self):
        if not self.omega_max > self.omega_min:
            raise ValueError("omega_max must exceed omega_min")

    @property
    def span(self) -> float:
        return self.omega_max - self.omega_min


DEFAULT_BOUNDS = ScoreBounds()


def map_score(
    value: float,
    lo_bound: float,
    hi_bound: float,
    orientation: str = LOWER_IS_BETTER,
    bounds: ScoreBounds = DEFAULT_BOUNDS,
) -> float:
    """Clamped linear map of a metric onto ``[omega_min, omega_max]``.

    For lower-is-better metrics (latency, drops) ``value <= lo_bound`` earns
    ``omega_max`` and ``value >= hi_bound`` earns ``omega_min``; the
    higher-is-better case (throughput) is mirrored.
    """
    if not lo_bound < hi_bound:
        raise ValueError(f"lo_bound ({lo_bound}) must be below hi_bound ({hi_bound})")
    frac = (value - lo_bound) / (hi_bound - lo_bound)
    frac = min(max(frac, 0.0), 1.0)
    if orientation == LOWER_IS_BETTER:
        return bounds.omega_max - frac * bounds.span
    if orientation == HIGHER_IS_BETTER:
        return bounds.omega_min + frac * bounds.span
    raise ValueError(f"unknown orientation {orientation!r}")


def composite_score(
    omega_delta: float, omega_tau: float, omega_l: float, zeta: Sequence[float]
) -> float:
    zd, zt, zl = zeta
    return zd * omega_delta + zt * omega_tau + zl * omega_l


def objective(
    weights: Sequence[float], scores: Sequence[float], bounds: ScoreBounds = DEFAULT_BOUNDS
) -> float:
    """Weighted score sum normalised by ``omega_max * sum(weights)``."""
    w = np.asarray(weights, dtype=float)
    s = np.asarray(scores, dtype=float)
    if w.size == 0:
        raise ValueError("objective needs at least one flow")
    if w.shape != s.shape:
        raise ValueError("weights and scores differ in length")
    return float(np.dot(w, s) / (bounds.omega_max * w.sum()))


def fairness_index(scores: Sequence[float], bounds: ScoreBounds = DEFAULT_BOUNDS) -> float:
    """QoE fairness: ``1 - 2*sigma / (omega_max - omega_min)``.

    ``sigma`` is the population standard deviation of the scores, so the
    index is 1 for identical scores and 0 for a maximal two-point spread.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("fairness_index needs at least one score")
    return float(1.0 - 2.0 * s.std() / bounds.span)


@dataclass(frozen=True)
class FlowMetrics:
    """Window averages for one aggregated flow, measured at the destination."""

    avg_latency: float  # seconds; nan when nothing was delivered
    throughput: float  # packets/slot
    drop_rate: float
    generated: int = 0
    delivered: int = 0
    dropped: int = 0


@dataclass(frozen=True)
class FlowScores:
    omega_delta: float
    omega_tau: float
    omega_l: float
    omega_total: float


def score_flow(profile, metrics: FlowMetrics, bounds: ScoreBounds = DEFAULT_BOUNDS) -> FlowScores:
    if metrics.delivered == 0 or math.isnan(metrics.avg_latency):
        # Starved flows take the worst latency score rather than being skipped.
        od = bounds.omega_min
    else:
        od = map_score(metrics.avg_latency, *profile.latency_bounds, LOWER_IS_BETTER, bounds)
    ot = map_score(metrics.throughput, *profile.throughput_bounds, HIGHER_IS_BETTER, bounds)
    ol = map_score(metrics.drop_rate, *profile.drop_bounds, LOWER_IS_BETTER, bounds)
    return FlowScores(od, ot, ol, composite_score(od, ot, ol, profile.zeta))
