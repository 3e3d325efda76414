"""Binary classification metrics with pinned tie handling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import DomainError, ShapeError, UndefinedMetricError


def _validate(labels, scores):
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.ndim != 1 or s.shape != y.shape:
        raise ShapeError(f"labels {y.shape} and scores {s.shape} must be equal-length vectors")
    if y.size == 0:
        raise DomainError("metrics need at least one example")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise DomainError("scores must be finite")
    return y.astype(np.int64), s


def accuracy(labels, scores, threshold: float = 0.5) -> float:
    y, s = _validate(labels, scores)
    return float(np.mean((s >= threshold).astype(np.int64) == y))


def auroc(labels, scores) -> float:
    """Mann-Whitney statistic with midranks for tied scores."""
    y, s = _validate(labels, scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(labels, scores) -> float:
    """Average precision: sum over distinct thresholds of recall step times precision.

    Examples sharing a score enter together, so tied groups contribute one step.
    """
    y, s = _validate(labels, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    tp = np.cumsum(y[order])
    # last index of every tie group
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp_at = tp[ends]
    precision = tp_at / (ends + 1)
    gained = np.diff(np.r_[0, tp_at])
    # sum gained * precision over thresholds, divide once; all-positive sets give exactly 1
    total = 0.0
    for g, p in zip(gained.tolist(), precision.tolist()):
        if g:
            total += g * p
    return total / n_pos


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    auroc: float
    auprc: float
    n: int

    def lines(self) -> list:
        return [f"accuracy={self.accuracy:.6f}", f"auroc={self.auroc:.6f}",
                f"auprc={self.auprc:.6f}", f"n={self.n}"]


def classification_report(labels, scores) -> MetricsReport:
    return MetricsReport(accuracy(labels, scores), auroc(labels, scores),
                         auprc(labels, scores), len(labels))
