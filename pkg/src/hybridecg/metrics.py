"""Confusion matrices and normal-vs-abnormal heartbeat metrics.

Two binary reductions of the 5x5 confusion matrix are provided:

``literal``
    An abnormal beat predicted as a *different* abnormal class counts as a
    false positive, as do normal beats predicted abnormal. This is the
    convention the reported benchmark numbers use.
``conventional``
    Plain normal/abnormal detection: any abnormal beat predicted as any
    abnormal class is a true positive.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .beats import CLASS_NAMES, AamiClass

N_CLASSES = len(AamiClass)
ABNORMAL = [int(c) for c in AamiClass if c != AamiClass.N]
TABLE_COLUMNS = ("Accuracy", "F1 Score", "Sensitivity", "Specificity", "Precision")


def confusion(preds, labels) -> np.ndarray:
    """5x5 counts, rows = true class, columns = predicted class."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {labels.shape} labels")
    flat = np.bincount(labels * N_CLASSES + preds, minlength=N_CLASSES * N_CLASSES)
    return flat.reshape(N_CLASSES, N_CLASSES)


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def binary_counts(cm: np.ndarray, convention: str = "literal") -> BinaryCounts:
    cm = np.asarray(cm, dtype=np.int64)
    n = int(AamiClass.N)
    ab = np.array(ABNORMAL)
    tn = int(cm[n, n])
    fn = int(cm[ab, n].sum())
    abnormal_block = cm[np.ix_(ab, ab)]
    normal_flagged = int(cm[n, ab].sum())
    if convention == "literal":
        tp = int(np.trace(abnormal_block))
        fp = int(abnormal_block.sum() - np.trace(abnormal_block)) + normal_flagged
    elif convention == "conventional":
        tp = int(abnormal_block.sum())
        fp = normal_flagged
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return BinaryCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def _ratio(num: float, den: float, name: str, undefined: list) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


@dataclass
class BinaryMetrics:
    accuracy: float
    f1: float
    sensitivity: float
    specificity: float
    precision: float
    undefined: list[str] = field(default_factory=list)

    def table_row(self) -> dict[str, float]:
        return dict(zip(TABLE_COLUMNS, (self.accuracy, self.f1, self.sensitivity,
                                        self.specificity, self.precision)))


def compute_metrics(bc: BinaryCounts) -> BinaryMetrics:
    """Accuracy, sensitivity, specificity, precision and F1 from binary counts.

    A zero denominator yields 0 and records the metric name in ``undefined``.
    """
    if bc.total == 0:
        raise ValueError("no beats to score")
    undefined: list[str] = []
    acc = (bc.tn + bc.tp) / bc.total
    sens = _ratio(bc.tp, bc.tp + bc.fn, "sensitivity", undefined)
    spec = _ratio(bc.tn, bc.tn + bc.fp, "specificity", undefined)
    prec = _ratio(bc.tp, bc.tp + bc.fp, "precision", undefined)
    f1 = _ratio(2 * sens * prec, sens + prec, "f1", undefined)
    return BinaryMetrics(acc, f1, sens, spec, prec, undefined)


@dataclass
class ClassMetrics:
    name: str
    support: int
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    undefined: list[str] = field(default_factory=list)


def per_class_metrics(cm: np.ndarray) -> list[ClassMetrics]:
    """One-vs-rest sensitivity, specificity, precision and F1 per class."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    out = []
    for c in range(N_CLASSES):
        tp = int(cm[c, c])
        fn = int(cm[c].sum()) - tp
        fp = int(cm[:, c].sum()) - tp
        tn = total - tp - fn - fp
        undefined: list[str] = []
        sens = _ratio(tp, tp + fn, "sensitivity", undefined)
        spec = _ratio(tn, tn + fp, "specificity", undefined)
        prec = _ratio(tp, tp + fp, "precision", undefined)
        f1 = _ratio(2 * sens * prec, sens + prec, "f1", undefined)
        out.append(ClassMetrics(CLASS_NAMES[c], tp + fn, sens, spec, prec, f1, undefined))
    return out


@dataclass
class MetricsReport:
    confusion: np.ndarray
    literal_counts: BinaryCounts
    literal: BinaryMetrics
    conventional_counts: BinaryCounts
    conventional: BinaryMetrics
    multiclass_accuracy: float
    per_class: list[ClassMetrics]

    # the headline numbers use the literal convention
    @property
    def accuracy(self) -> float:
        return self.literal.accuracy

    @property
    def f1(self) -> float:
        return self.literal.f1

    @property
    def sensitivity(self) -> float:
        return self.literal.sensitivity

    @property
    def specificity(self) -> float:
        return self.literal.specificity

    @property
    def precision(self) -> float:
        return self.literal.precision

    @property
    def macro_f1(self) -> float:
        return float(np.mean([c.f1 for c in self.per_class]))

    def to_dict(self) -> dict:
        return {
            "table": self.literal.table_row(),
            "literal": {"counts": asdict(self.literal_counts), **asdict(self.literal)},
            "conventional": {"counts": asdict(self.conventional_counts), **asdict(self.conventional)},
            "multiclass_accuracy": self.multiclass_accuracy,
            "macro_f1": self.macro_f1,
            "per_class": [asdict(c) for c in self.per_class],
            "confusion": {"classes": list(CLASS_NAMES), "counts": self.confusion.tolist()},
        }


def evaluate(preds, labels) -> MetricsReport:
    cm = confusion(preds, labels)
    lit = binary_counts(cm, "literal")
    conv = binary_counts(cm, "conventional")
    total = int(cm.sum())
    return MetricsReport(
        confusion=cm,
        literal_counts=lit,
        literal=compute_metrics(lit),
        conventional_counts=conv,
        conventional=compute_metrics(conv),
        multiclass_accuracy=float(np.trace(cm)) / total if total else 0.0,
        per_class=per_class_metrics(cm),
    )
