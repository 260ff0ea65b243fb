"""Clustering accuracy, the single-cluster baseline and rank correlation."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _gold_array(salad) -> np.ndarray:
    return np.array([g == "B" for g in salad.gold], dtype=int)


def clustering_accuracy(salad, pred: Sequence[int]) -> float:
    """Fraction of correctly clustered sentences under the better of the two label mappings."""
    pred = np.asarray(pred, dtype=int)
    gold = _gold_array(salad)
    if pred.shape != gold.shape:
        raise MetricError(f"assignment has {pred.size} labels for {gold.size} items")
    if pred.size and not np.isin(pred, (0, 1)).all():
        raise MetricError("assignment labels must be 0 or 1")
    # integer counts keep the result exact (hits / n, not 1 - mean)
    hits = int(np.count_nonzero(pred == gold))
    return max(hits, gold.size - hits) / gold.size


def unif_baseline(salad) -> list[int]:
    return [0] * len(salad)


def mean_ca(salads, preds) -> float:
    if len(salads) != len(preds):
        raise MetricError("salads and predictions are not aligned")
    if not salads:
        raise MetricError("no salads to average over")
    return float(np.mean([clustering_accuracy(s, p) for s, p in zip(salads, preds)]))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("undefined correlation: series lengths differ")
    if x.size < 3:
        raise MetricError("undefined correlation: need at least 3 points")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0.0:
        raise MetricError("undefined correlation: constant series")
    return float(np.clip(rx @ ry / denom, -1.0, 1.0))
