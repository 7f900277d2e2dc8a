"""Evaluation metrics: threshold-free AUC-ROC, confusion-matrix scores, and
the fair-coin random baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError
from .rng import named_rng


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve by the Mann-Whitney rank statistic.

    Ties in scores contribute one half. Raises UndefinedMetricError when the
    labels carry only one class."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels disagree on shape")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    below = np.cumsum(counts) - counts
    avg_rank = below + (counts + 1) / 2.0  # mean rank of each tie group
    ranks = avg_rank[inverse]
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class ClassificationReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    degenerate: bool  # some score had a zero denominator and was reported as 0


def classification_metrics(scores, labels, threshold: float = 0.5) -> ClassificationReport:
    """Precision, recall, F1 and accuracy at a probability threshold.

    Zero-denominator precision, recall or F1 come back as 0.0 with the
    degenerate flag set instead of raising."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ValueError("empty input")
    pred = scores >= threshold
    actual = labels == 1
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))

    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    accuracy = float(np.mean(pred == actual))
    return ClassificationReport(precision, recall, f1, accuracy, degenerate)


def random_baseline(labels, repeats: int = 50, seed: int = 0) -> tuple[float, float]:
    """Mean and sample standard deviation of AUC for a coin-toss classifier.

    Each repeat scores every row with an independent fair coin; with the
    tie-aware AUC this is the no-information reference."""
    labels = np.asarray(labels)
    rng = named_rng(seed, "baseline")
    aucs = np.empty(repeats)
    for r in range(repeats):
        scores = rng.integers(0, 2, size=labels.shape).astype(np.float64)
        aucs[r] = auc_roc(scores, labels)
    return float(np.mean(aucs)), float(np.std(aucs, ddof=1))
