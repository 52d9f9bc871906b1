"""Classification metric suite: AUC, sensitivity/specificity, F1, accuracy.

AUC uses the rank statistic with tie-averaged ranks, which counts tied
positive/negative pairs as half. Binary sensitivity/specificity treat class
1 as the positive class; multiclass versions macro-average one-vs-rest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Counts with rows indexing the true class and columns the prediction."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ContractError(f"label/prediction lengths differ: {y_true.shape} vs {y_pred.shape}")
    if y_true.size and (y_true.min() < 0 or y_true.max() >= num_classes):
        raise ContractError("true label out of range")
    if y_pred.size and (y_pred.min() < 0 or y_pred.max() >= num_classes):
        raise ContractError("predicted label out of range")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given the mean rank of their group."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def auc_binary(scores, labels) -> float | None:
    """Rank-statistic AUC of scores for class 1; None if only one class present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_pair_count(scores, labels) -> float | None:
    """Exhaustive pair-counting oracle: correctly ordered pairs, ties half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = scores[labels == 1]
    neg = scores[labels != 1]
    if pos.size == 0 or neg.size == 0:
        return None
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (pos.size * neg.size)


def auc_macro_ovr(probs: np.ndarray, labels) -> float | None:
    """Macro one-vs-rest AUC over classes with both kinds of examples."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    per_class = []
    for c in range(probs.shape[1]):
        a = auc_binary(probs[:, c], (labels == c).astype(np.int64))
        if a is not None:
            per_class.append(a)
    if not per_class:
        return None
    return float(np.mean(per_class))


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) pairs swept over every score threshold, endpoints included."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return []
    order = np.argsort(-scores, kind="stable")
    pts = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        chunk = labels[order[i : j + 1]]
        tp += int((chunk == 1).sum())
        fp += int((chunk != 1).sum())
        pts.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return pts


@dataclass
class MetricsReport:
    """Metric suite for one evaluation; aggregate() builds the fold summary.

    ``auc`` is None when the test set holds a single class. For an
    aggregated report, the scalar fields carry fold means and ``per_fold``,
    ``mean``, ``std`` are populated.
    """

    auc: float | None
    specificity: float
    sensitivity: float
    f1_micro: float
    f1_macro: float
    accuracy: float
    confusion: np.ndarray
    per_fold: list["MetricsReport"] | None = None
    mean: dict[str, float | None] | None = None
    std: dict[str, float | None] | None = None

    SCALAR_FIELDS = ("auc", "specificity", "sensitivity", "f1_micro", "f1_macro", "accuracy")

    def scalars(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in self.SCALAR_FIELDS}

    @classmethod
    def aggregate(cls, reports: list["MetricsReport"]) -> "MetricsReport":
        if not reports:
            raise ContractError("cannot aggregate zero reports")
        mean: dict[str, float | None] = {}
        std: dict[str, float | None] = {}
        for name in cls.SCALAR_FIELDS:
            vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
            if vals:
                mean[name] = float(np.mean(vals))
                std[name] = float(np.std(vals))
            else:
                mean[name] = None
                std[name] = None
        return cls(
            auc=mean["auc"],
            specificity=mean["specificity"],
            sensitivity=mean["sensitivity"],
            f1_micro=mean["f1_micro"],
            f1_macro=mean["f1_macro"],
            accuracy=mean["accuracy"],
            confusion=sum(r.confusion for r in reports),
            per_fold=list(reports),
            mean=mean,
            std=std,
        )


def compute_report(labels, probs: np.ndarray) -> MetricsReport:
    """Full metric suite from per-class probabilities.

    ``probs`` has shape (n, num_classes); predictions are argmax. Binary AUC
    scores class-1 probability; multiclass AUC macro-averages one-vs-rest.
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != labels.size:
        raise ContractError(f"probs shape {probs.shape} does not match {labels.size} labels")
    num_classes = probs.shape[1]
    y_pred = probs.argmax(axis=1)
    cm = confusion_matrix(labels, y_pred, num_classes)
    n = int(cm.sum())

    tp_total = int(np.trace(cm))
    accuracy = tp_total / n
    # micro F1 from global counts; for single-label data FP = FN = n - TP,
    # so 2TP / (2TP + FP + FN) = TP / n and micro F1 equals accuracy exactly
    fp_total = n - tp_total
    fn_total = n - tp_total
    f1_micro = 2 * tp_total / (2 * tp_total + fp_total + fn_total) if n else 0.0

    f1s = []
    recalls = []
    tnrs = []
    for c in range(num_classes):
        tp = int(cm[c, c])
        fn = int(cm[c].sum() - tp)
        fp = int(cm[:, c].sum() - tp)
        tn = n - tp - fn - fp
        f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
        recalls.append(tp / (tp + fn) if (tp + fn) else 0.0)
        tnrs.append(tn / (tn + fp) if (tn + fp) else 0.0)
    f1_macro = float(np.mean(f1s))

    if num_classes == 2:
        sensitivity = recalls[1]
        specificity = tnrs[1]
        auc = auc_binary(probs[:, 1], labels)
    else:
        sensitivity = float(np.mean(recalls))
        specificity = float(np.mean(tnrs))
        auc = auc_macro_ovr(probs, labels)

    return MetricsReport(
        auc=auc,
        specificity=float(specificity),
        sensitivity=float(sensitivity),
        f1_micro=float(f1_micro),
        f1_macro=f1_macro,
        accuracy=float(accuracy),
        confusion=cm,
    )
