"""Evaluation metrics: confusion matrix, per-class and support-weighted F1,
and domain-classifier accuracy.

Weighted F1 is the project's headline metric.  Class weights are ground-truth
class proportions; a class with zero support contributes weight zero, and a
class with no predicted or true instances scores F1 = 0 by convention, so the
metric stays defined on any subset of classes.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class EvalReport:
    """Per-class breakdown of one evaluation pass."""

    confusion: np.ndarray  # [n_classes, n_classes], rows = truth, cols = prediction
    per_class_f1: np.ndarray  # [n_classes]
    weighted_f1: float
    support: np.ndarray  # [n_classes] ground-truth counts
    domain_accuracy: Optional[float] = None
    class_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.class_ids is None:
            self.class_ids = np.arange(1, len(self.support) + 1)

    @property
    def n_evaluated(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "weighted_f1": float(self.weighted_f1),
            "per_class_f1": [float(v) for v in self.per_class_f1],
            "support": [int(v) for v in self.support],
            "domain_accuracy": None if self.domain_accuracy is None else float(self.domain_accuracy),
        }


def confusion_matrix(predictions: Sequence[int], truth: Sequence[int], n_classes: int) -> np.ndarray:
    """Count matrix over class ids 1..n_classes; rows index truth, columns predictions."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    _validate_labels(pred, true, n_classes)
    flat = (true - 1) * n_classes + (pred - 1)
    counts = np.bincount(flat, minlength=n_classes * n_classes)
    return counts.reshape(n_classes, n_classes)


def weighted_f1(predictions: Sequence[int], truth: Sequence[int], n_classes: int = 17) -> EvalReport:
    """Support-weighted mean of per-class F1 scores.

    Per-class F1 = 2*precision*recall / (precision + recall), with 0/0 -> 0.
    A class id that never occurs in ``truth`` but does occur in ``predictions``
    is ordinary confusion (it costs the confused classes precision), never an
    error.
    """
    confusion = confusion_matrix(predictions, truth, n_classes)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)

    precision = np.divide(tp, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(n_classes, dtype=np.float64), where=support > 0)
    pr_sum = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr_sum, out=np.zeros(n_classes), where=pr_sum > 0)

    total = support.sum()
    weights = support / total
    return EvalReport(
        confusion=confusion,
        per_class_f1=f1,
        weighted_f1=float(np.dot(weights, f1)),
        support=support,
    )


def domain_accuracy(predictions: Sequence[int], truth: Sequence[int]) -> float:
    """Fraction of exact matches between predicted and true domain tags."""
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {true.shape} truth")
    if pred.size == 0:
        raise ValueError("cannot score an empty batch")
    return float(np.mean(pred == true))


def _validate_labels(pred: np.ndarray, true: np.ndarray, n_classes: int) -> None:
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {true.shape} truth")
    if pred.size == 0:
        raise ValueError("cannot score an empty batch")
    for name, arr in (("predictions", pred), ("truth", true)):
        if arr.min() < 1 or arr.max() > n_classes:
            bad = arr[(arr < 1) | (arr > n_classes)][0]
            raise ValueError(f"{name} contain class id {bad} outside 1..{n_classes}")
