"""Confusion matrix and the derived classification measures.

The positive class is 1 (fraud).  A measure whose denominator is zero is
reported as ``None`` ("undefined") instead of being coerced to 0 or 1, so
that the update gate can refuse degenerate models.
"""
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, LengthMismatch, UndefinedMetric

DEFAULT_BETA = 2.0

# block payload names, in display order
WIRE_NAMES = {
    "training_accuracy": "training_accuracy",
    "testing_accuracy": "testing_accuracy",
    "overall_accuracy": "overall_accuracy",
    "precision": "precision",
    "recall": "recall",
    "f1score": "f1score",
    "fbeta": "fbeta",
    "beta": "beta",
    "tpr": "true_positive_rate",
    "tnr": "true_negative_rate",
    "fpr": "false_positive_rate",
    "fnr": "false_negative_rate",
}
GATE_FIELDS = ("precision", "recall", "fbeta", "fnr")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class MetricsReport:
    testing_accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    fbeta: Optional[float]
    f1score: Optional[float]
    fnr: Optional[float]
    tpr: Optional[float]
    tnr: Optional[float]
    fpr: Optional[float]
    beta: float = DEFAULT_BETA
    training_accuracy: Optional[float] = None
    overall_accuracy: Optional[float] = None

    @property
    def undefined(self) -> tuple:
        """Names of measures that could not be computed."""
        return tuple(f.name for f in fields(self) if getattr(self, f.name) is None)

    @property
    def complete(self) -> bool:
        return not self.undefined

    def to_dict(self) -> dict:
        return {wire: getattr(self, attr) for attr, wire in WIRE_NAMES.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{attr: d.get(wire) for attr, wire in WIRE_NAMES.items()})

    def with_accuracies(self, training=None, overall=None) -> "MetricsReport":
        return replace(self, training_accuracy=training, overall_accuracy=overall)


def _as_binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int8)


def confusion_matrix(labels: Sequence[int], predictions: Sequence[int]) -> ConfusionMatrix:
    y = _as_binary(labels, "labels")
    p = _as_binary(predictions, "predictions")
    if y.size != p.size:
        raise LengthMismatch(f"{y.size} labels vs {p.size} predictions")
    if y.size == 0:
        raise EmptyInput("confusion matrix needs at least one sample")
    tp = int(np.count_nonzero((y == 1) & (p == 1)))
    tn = int(np.count_nonzero((y == 0) & (p == 0)))
    fp = int(np.count_nonzero((y == 0) & (p == 1)))
    fn = int(np.count_nonzero((y == 1) & (p == 0)))
    return ConfusionMatrix(tp, tn, fp, fn)


def _ratio(num, den):
    return num / den if den else None


def fbeta_score(precision, recall, beta):
    if precision is None or recall is None:
        return None
    b2 = beta * beta
    den = b2 * precision + recall
    if den == 0:
        return None
    return (1 + b2) * precision * recall / den


def derive_metrics(cm: ConfusionMatrix, beta: float = DEFAULT_BETA, strict: bool = False) -> MetricsReport:
    """Compute the test-side measures from a confusion matrix.

    With ``strict=True`` the first undefined measure raises
    :class:`UndefinedMetric`; otherwise it is left as ``None``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if cm.total == 0:
        raise EmptyInput("confusion matrix is empty")
    tp, tn, fp, fn = cm.tp, cm.tn, cm.fp, cm.fn
    recall = _ratio(tp, tp + fn)
    tnr = _ratio(tn, tn + fp)
    precision = _ratio(tp, tp + fp)
    report = MetricsReport(
        testing_accuracy=(tp + tn) / cm.total,
        precision=precision,
        recall=recall,
        fbeta=fbeta_score(precision, recall, beta),
        f1score=fbeta_score(precision, recall, 1.0),
        # complements share operands so recall + fnr == 1
        fnr=None if recall is None else 1.0 - recall,
        tpr=recall,
        tnr=tnr,
        fpr=None if tnr is None else 1.0 - tnr,
        beta=float(beta),
    )
    if strict:
        missing = [n for n in report.undefined if n not in ("training_accuracy", "overall_accuracy")]
        if missing:
            raise UndefinedMetric(missing[0])
    return report
