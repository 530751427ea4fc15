"""Multiclass evaluation metrics derived from a confusion matrix.

Precision/recall/F1 are reported per class and as support-weighted
averages so rare lesion classes cannot be drowned out by the large ones.
MCC uses the covariance-form multiclass generalization, which reduces to
the familiar binary formula at K=2. Zero denominators never raise: the
metric is 0 and the class is flagged degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LesionKitError


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise LesionKitError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise LesionKitError("confusion matrix entries must be nonnegative")
        if self.class_names is not None and len(self.class_names) != self.counts.shape[0]:
            raise LesionKitError("class_names length must match matrix size")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass
class PerClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool = False


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    accuracy: float
    per_class: list[PerClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    mcc: float
    mcc_degenerate: bool = False
    tie_count: int = 0
    degenerate_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        names = self.confusion.class_names or tuple(
            str(i) for i in range(self.confusion.num_classes)
        )
        return {
            "accuracy": self.accuracy,
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
            "mcc": self.mcc,
            "mcc_degenerate": self.mcc_degenerate,
            "tie_count": self.tie_count,
            "per_class": [
                {
                    "class": names[i],
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate": m.degenerate,
                }
                for i, m in enumerate(self.per_class)
            ],
            "confusion_matrix": self.confusion.counts.tolist(),
            "class_names": list(names),
        }


def confusion_matrix(truths, preds, num_classes: int, class_names=None) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a K x K matrix."""
    truths = np.asarray(truths, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if truths.shape != preds.shape:
        raise LesionKitError(f"length mismatch: {truths.shape} truths vs {preds.shape} preds")
    if truths.size and (truths.min() < 0 or truths.max() >= num_classes):
        raise LesionKitError("truth index out of range")
    if preds.size and (preds.min() < 0 or preds.max() >= num_classes):
        raise LesionKitError("prediction index out of range")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    names = tuple(class_names) if class_names is not None else None
    return ConfusionMatrix(counts=counts, class_names=names)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise LesionKitError("empty evaluation: confusion matrix has no samples")
    return float(np.trace(cm.counts)) / cm.total


def per_class_prf(cm: ConfusionMatrix) -> list[PerClassMetrics]:
    if cm.total == 0:
        raise LesionKitError("empty evaluation: confusion matrix has no samples")
    out = []
    col_sums = cm.counts.sum(axis=0)
    row_sums = cm.counts.sum(axis=1)
    for i in range(cm.num_classes):
        tp = float(cm.counts[i, i])
        pred_total = float(col_sums[i])
        true_total = float(row_sums[i])
        degenerate = False
        if pred_total > 0:
            precision = tp / pred_total
        else:
            precision, degenerate = 0.0, True
        if true_total > 0:
            recall = tp / true_total
        else:
            recall, degenerate = 0.0, True
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        out.append(
            PerClassMetrics(
                precision=precision,
                recall=recall,
                f1=f1,
                support=int(row_sums[i]),
                degenerate=degenerate,
            )
        )
    return out


def weighted_average(values, supports) -> float:
    values = np.asarray(values, dtype=np.float64)
    supports = np.asarray(supports, dtype=np.float64)
    if values.shape != supports.shape:
        raise LesionKitError("values and supports must have equal length")
    total = supports.sum()
    if total <= 0:
        raise LesionKitError("zero total support")
    return float((values * supports).sum() / total)


def mcc(cm: ConfusionMatrix) -> tuple[float, bool]:
    """Matthews correlation over the full matrix; (value, degenerate flag).

    Covariance form: (c*s - t.p) / sqrt((s^2 - p.p)(s^2 - t.t)) with
    c = trace, s = total, t = row sums, p = column sums. A zero denominator
    (e.g. every prediction in one column) yields (0.0, True).
    """
    if cm.total == 0:
        raise LesionKitError("empty evaluation: confusion matrix has no samples")
    counts = cm.counts.astype(np.float64)
    s = counts.sum()
    c = np.trace(counts)
    t = counts.sum(axis=1)
    p = counts.sum(axis=0)
    numerator = c * s - float(t @ p)
    denom_sq = (s * s - float(p @ p)) * (s * s - float(t @ t))
    if denom_sq <= 0:
        return 0.0, True
    return float(numerator / np.sqrt(denom_sq)), False


def argmax_predictions(probs: np.ndarray) -> tuple[np.ndarray, int]:
    """Row-wise argmax with ties resolved to the lowest index; counts ties."""
    probs = np.asarray(probs)
    preds = probs.argmax(axis=1)
    row_max = probs.max(axis=1, keepdims=True)
    ties = int(((probs == row_max).sum(axis=1) > 1).sum())
    return preds, ties


def build_report(cm: ConfusionMatrix, tie_count: int = 0) -> EvaluationReport:
    """Assemble the full metric suite from one confusion matrix."""
    per_class = per_class_prf(cm)
    supports = [m.support for m in per_class]
    mcc_value, mcc_flag = mcc(cm)
    return EvaluationReport(
        confusion=cm,
        accuracy=accuracy(cm),
        per_class=per_class,
        weighted_precision=weighted_average([m.precision for m in per_class], supports),
        weighted_recall=weighted_average([m.recall for m in per_class], supports),
        weighted_f1=weighted_average([m.f1 for m in per_class], supports),
        mcc=mcc_value,
        mcc_degenerate=mcc_flag,
        tie_count=tie_count,
        degenerate_classes=[i for i, m in enumerate(per_class) if m.degenerate],
    )
