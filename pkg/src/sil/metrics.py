"""Evaluation statistics: Pearson r, MSE, and the bootstrap estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, UndefinedCorrelationError
from .seeding import rng_for


@dataclass
class PairedSeries:
    """Two aligned float series keyed by item id."""

    ids: list[str]
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if not (len(self.ids) == len(self.x) == len(self.y)):
            raise ContractError("ids, x, y must have equal lengths")
        if len(self.x) < 2:
            raise ContractError("paired series needs at least 2 items")


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient.

    Raises UndefinedCorrelationError when either series has zero variance
    (never silently returns 0).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("pearson expects two 1-D series of equal length")
    if len(x) < 2:
        raise ContractError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError(
            "correlation undefined: a series has zero variance")
    return float(dx @ dy) / (sx * sy)


def mse(predicted, target) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(np.mean((predicted - target) ** 2))


def bootstrap_ceiling(ratings_per_item: list, B: int, seed: int) -> float:
    """Inter-annotator agreement ceiling via rating resampling.

    For each of B replicates, every item's participant ratings are resampled
    with replacement, the resampled per-item means are correlated with the
    original means, and the B correlations are averaged.
    """
    if B < 1:
        raise ContractError("bootstrap replicate count must be >= 1")
    ratings = [np.asarray(r, dtype=np.float64) for r in ratings_per_item]
    for i, r in enumerate(ratings):
        if len(r) < 1:
            raise ContractError(f"item {i} has no participant ratings")
    if len(ratings) < 2:
        raise ContractError("need at least 2 items to correlate")

    original_means = np.array([r.mean() for r in ratings])
    rng = rng_for(seed, "bootstrap-ceiling")
    rs = np.empty(B)
    for b in range(B):
        resampled = np.array([
            r[rng.integers(0, len(r), size=len(r))].mean() for r in ratings
        ])
        rs[b] = pearson(resampled, original_means)
    return float(rs.mean())


def bootstrap_ci(groups: dict, B: int, level: float = 0.95,
                 seed: int = 0) -> dict:
    """Percentile bootstrap of the mean for each group of values.

    Returns {key: (mean, lo, hi)}. A group of identical values collapses to
    (v, v, v).
    """
    if B < 1:
        raise ContractError("bootstrap replicate count must be >= 1")
    if not 0.0 < level < 1.0:
        raise ContractError("confidence level must be in (0, 1)")
    alpha = (1.0 - level) / 2.0
    out = {}
    rng = rng_for(seed, "bootstrap-ci")
    for key in groups:
        values = np.asarray(groups[key], dtype=np.float64)
        if len(values) == 0:
            raise ContractError(f"group {key!r} is empty")
        n = len(values)
        idx = rng.integers(0, n, size=(B, n))
        means = values[idx].mean(axis=1)
        lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
        out[key] = (float(values.mean()), float(lo), float(hi))
    return out
