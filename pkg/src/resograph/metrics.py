"""Classification metrics computed from first principles.

Per-class precision/recall/F1 use the 0/0 -> 0 convention and are averaged
unweighted over classes (macro). AUROC is one-vs-rest per class via the
rank-sum formulation, which handles tied scores by average ranks, then
macro-averaged over the classes that have both positives and negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EvaluationError, ShapeError


@dataclass
class ConfusionCounts:
    """K x K integer matrix; rows are true classes, columns predictions."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.int64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {self.matrix.shape}")
        if (self.matrix < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @staticmethod
    def from_predictions(labels, predictions, classes: int) -> "ConfusionCounts":
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        if labels.shape != predictions.shape:
            raise ShapeError(
                f"labels shape {labels.shape} vs predictions shape {predictions.shape}"
            )
        matrix = np.zeros((classes, classes), dtype=np.int64)
        np.add.at(matrix, (labels, predictions), 1)
        return ConfusionCounts(matrix)

    @property
    def classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())


def accuracy(confusion: ConfusionCounts) -> float:
    if confusion.total == 0:
        raise EvaluationError("accuracy is undefined on zero samples")
    return float(np.trace(confusion.matrix)) / confusion.total


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def precision_recall_f1(confusion: ConfusionCounts):
    """Returns (per_class, macro): rows of (precision, recall, f1) and their means."""
    m = confusion.matrix
    per_class = []
    for k in range(confusion.classes):
        tp = float(m[k, k])
        p = _safe_div(tp, float(m[:, k].sum()))
        r = _safe_div(tp, float(m[k, :].sum()))
        f1 = _safe_div(2.0 * p * r, p + r)
        per_class.append((p, r, f1))
    arr = np.asarray(per_class)
    macro = tuple(float(v) for v in arr.mean(axis=0))
    return per_class, macro


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-sum AUROC; `positives` is a boolean mask over `scores`."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape:
        raise ShapeError(f"scores {scores.shape} vs positives {positives.shape}")
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUROC needs both positives and negatives")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc_ovr(probabilities: np.ndarray, labels) -> float:
    """Macro one-vs-rest AUROC over the classes that are scoreable.

    Classes with no positives or no negatives in `labels` are skipped; if
    every class is skipped the metric is undefined and raises.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.ndim != 2 or probabilities.shape[0] != len(labels):
        raise ShapeError(
            f"probabilities {probabilities.shape} vs {len(labels)} labels"
        )
    per_class = []
    for k in range(probabilities.shape[1]):
        mask = labels == k
        if not mask.any() or mask.all():
            continue
        per_class.append(binary_auroc(probabilities[:, k], mask))
    if not per_class:
        raise EvaluationError("AUROC undefined: no class has both positives and negatives")
    return float(np.mean(per_class))


@dataclass
class EvalReport:
    """All headline metrics of one evaluation pass."""

    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    auroc_macro: float
    confusion: np.ndarray

    def to_text(self) -> str:
        """Stable key order so reports diff cleanly."""
        lines = [
            f"accuracy={self.accuracy:.6f}",
            f"precision_macro={self.precision_macro:.6f}",
            f"recall_macro={self.recall_macro:.6f}",
            f"f1_macro={self.f1_macro:.6f}",
            f"auroc_macro={self.auroc_macro:.6f}",
        ]
        for row in np.asarray(self.confusion, dtype=np.int64):
            lines.append("confusion=" + " ".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def compute_report(probabilities: np.ndarray, labels, classes: int) -> EvalReport:
    """Hard metrics from argmax predictions, AUROC from the probability columns."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    predictions = probabilities.argmax(axis=-1)
    confusion = ConfusionCounts.from_predictions(labels, predictions, classes)
    _, (p, r, f1) = precision_recall_f1(confusion)
    return EvalReport(
        accuracy=accuracy(confusion),
        precision_macro=p,
        recall_macro=r,
        f1_macro=f1,
        auroc_macro=auroc_ovr(probabilities, labels),
        confusion=confusion.matrix,
    )
