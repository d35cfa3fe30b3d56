"""Fairness and performance metrics.

Unfairness is the largest two-sample Kolmogorov-Smirnov statistic over all
pairs of groups. Performance is MSE for regression outputs and ROC AUC (or the
0-1 risk after thresholding) for scores.
"""

from __future__ import annotations

from itertools import combinations
from typing import Mapping

import numpy as np

from .errors import DegenerateLabels, EmptyInput, InsufficientGroups, InvalidValue, ShapeError
from .fairtransform import classify

__all__ = ["ks_unfairness", "ks_two_sample", "mse", "auc", "misclassification", "task_report"]


def _vector(x, name):
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidValue(f"{name} must be finite")
    return arr


def ks_two_sample(a, b) -> float:
    """``sup_u |F_a(u) - F_b(u)|`` evaluated on the merged support (exact for step ECDFs)."""
    a = np.sort(_vector(a, "a"))
    b = np.sort(_vector(b, "b"))
    if a.size == 0 or b.size == 0:
        raise EmptyInput("both samples must be non-empty")
    support = np.concatenate([a, b])
    fa = np.searchsorted(a, support, side="right") / a.size
    fb = np.searchsorted(b, support, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_unfairness(values, groups) -> float:
    """Maximum pairwise KS distance between group-conditional prediction laws."""
    values = _vector(values, "values")
    groups = np.asarray(groups).reshape(-1)
    if values.shape != groups.shape:
        raise ShapeError("values and groups must have equal length")
    labels = np.unique(groups)
    if labels.size < 2:
        raise InsufficientGroups(f"need at least 2 groups, got {labels.size}")
    per_group = {s: values[groups == s] for s in labels.tolist()}
    return max(ks_two_sample(per_group[s], per_group[r]) for s, r in combinations(per_group, 2))


def mse(pred, label) -> float:
    pred = _vector(pred, "pred")
    label = _vector(label, "label")
    if pred.shape != label.shape:
        raise ShapeError(f"length mismatch: {pred.size} predictions, {label.size} labels")
    if pred.size == 0:
        raise EmptyInput("mse of an empty sample")
    resid = pred - label
    return float(np.mean(resid * resid))


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of ``P(score_pos > score_neg)`` with half credit for ties."""
    scores = _vector(scores, "scores")
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels must have equal length")
    pos = scores[labels == 1]
    neg = np.sort(scores[labels == 0])
    if pos.size == 0 or neg.size == 0:
        raise DegenerateLabels("AUC requires both classes to be present")
    below = np.searchsorted(neg, pos, side="left")
    tied = np.searchsorted(neg, pos, side="right") - below
    # counts are integers; numerator is a multiple of 1/2 and exact
    wins = int(below.sum()) + 0.5 * int(tied.sum())
    return wins / (pos.size * neg.size)


def misclassification(scores, labels, tau: float = 0.5) -> float:
    scores = _vector(scores, "scores")
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels must have equal length")
    if scores.size == 0:
        raise EmptyInput("misclassification of an empty sample")
    return float(np.mean(classify(scores, tau) != labels))


def task_report(
    kind: str, pred, label, groups, *, log_predictions: bool = False
) -> Mapping[str, float]:
    """``{"performance": ..., "unfairness": ...}`` for one task.

    Performance is MSE for ``regression`` and AUC for ``score``. With
    ``log_predictions`` the regression MSE is taken on ``log`` of both
    predictions and labels (which must then be positive).
    """
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if kind == "regression":
        if log_predictions:
            perf = mse(np.log(pred), np.log(label))
        else:
            perf = mse(pred, label)
    else:
        perf = auc(pred, label.astype(np.int64))
    return {"performance": perf, "unfairness": ks_unfairness(pred, groups)}
