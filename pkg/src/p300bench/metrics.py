"""Binary classification metrics.

The positive class throughout is the "target" stimulus (label 1).  AUC is
computed from the Mann-Whitney rank statistic with average ranks for tied
scores, which is equivalent to counting concordant score pairs with ties
worth one half.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import check_binary_labels


@dataclass(frozen=True)
class MetricSet:
    """Accuracy, precision, recall and AUC as fractions in [0, 1].

    ``auc`` is None when the labels contain a single class.  Precision
    (recall) is reported as 0.0 when there are no predicted (actual)
    positives.
    """

    accuracy: float
    precision: float
    recall: float
    auc: float | None

    def __post_init__(self):
        for name in ("accuracy", "precision", "recall"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.auc is not None and not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"auc must lie in [0, 1], got {self.auc}")

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
        }


def tied_ranks(values) -> np.ndarray:
    """1-based ranks with tied values assigned the mean of their ranks."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        # mean of ranks i+1 .. j+1; exact in float64 (a dyadic rational)
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_mann_whitney(scores, labels) -> float | None:
    """AUC via the rank-sum statistic; None if only one class is present.

    AUC = (R+ - n+(n+ + 1)/2) / (n+ * n-), with R+ the rank sum of the
    positive-class scores under average ranking of ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = tied_ranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def compute_metrics(scores, labels, threshold: float) -> MetricSet:
    """Confusion-matrix metrics at ``score > threshold`` plus rank AUC.

    Parameters
    ----------
    scores : array of shape (n,)
        Real-valued decision scores, larger meaning "more target-like".
    labels : array of shape (n,)
        Binary ground truth (target = 1).
    threshold : float
        Decision threshold; the prediction is target iff the score is
        strictly greater.  Use 0.0 for LDA/SVM decision values and 0.5
        for CNN target-class probabilities.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise ValueError(f"scores must be a non-empty vector, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    labels = check_binary_labels(labels, n=scores.shape[0])

    predicted = scores > threshold
    actual = labels == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    tn = int(np.sum(~predicted & ~actual))

    n = scores.shape[0]
    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return MetricSet(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        auc=auc_mann_whitney(scores, labels),
    )
