"""Confusion counts and point metrics with abnormal (label 1) as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBeta, ShapeError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f_beta: float
    beta: float = 1.0


def confusion(truth, predicted) -> ConfusionCounts:
    t = np.asarray(truth).astype(int).reshape(-1)
    p = np.asarray(predicted).astype(int).reshape(-1)
    if t.shape != p.shape:
        raise ShapeError(f"truth has {t.size} labels, predictions {p.size}")
    if t.size == 0:
        raise ShapeError("no samples to tally")
    return ConfusionCounts(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


def f_beta_score(precision: float, recall: float, beta: float = 1.0) -> float:
    if not beta > 0:
        raise InvalidBeta(f"beta must be > 0, got {beta}")
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


def compute_metrics(counts: ConfusionCounts, beta: float = 1.0) -> MetricReport:
    """Accuracy, precision, recall and F-beta.

    Zero denominators give 0 rather than raising, so a detector that never
    fires gets precision 0, recall 0 and F 0.
    """
    if not beta > 0:
        raise InvalidBeta(f"beta must be > 0, got {beta}")
    if counts.total <= 0:
        raise ShapeError("confusion counts are empty")
    acc = (counts.tp + counts.tn) / counts.total
    prec = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    rec = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    return MetricReport(acc, prec, rec, f_beta_score(prec, rec, beta), beta)
