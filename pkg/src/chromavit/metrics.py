"""Confusion-matrix evaluation: precision, recall, F1, accuracy.

Rows of the confusion matrix are true classes, columns are predictions.
Per-class metrics use one-vs-rest counts; macro averages weight classes
equally; overall accuracy is micro (trace over total).  A zero denominator
reports the metric as 0 and raises a per-class flag instead of NaN so CSV
reports stay machine-readable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float  # one-vs-rest (TP+TN)/total for this class
    support: int  # number of true samples
    zero_division: bool  # True when any denominator above was zero


@dataclass(frozen=True)
class EvalReport:
    confusion: np.ndarray  # (C, C) int64, rows true, cols predicted
    per_class: tuple  # ClassMetrics per class
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float  # micro: trace / total


def report_from_confusion(confusion) -> EvalReport:
    m = np.asarray(confusion, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"confusion matrix must be square, got shape {m.shape}")
    total = int(m.sum())
    per_class = []
    for k in range(m.shape[0]):
        tp = int(m[k, k])
        fp = int(m[:, k].sum()) - tp
        fn = int(m[k, :].sum()) - tp
        tn = total - tp - fp - fn
        flagged = False
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision, flagged = 0.0, True
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall, flagged = 0.0, True
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1, flagged = 0.0, True
        acc_k = (tp + tn) / total if total > 0 else 0.0
        per_class.append(
            ClassMetrics(
                precision=precision,
                recall=recall,
                f1=f1,
                accuracy=acc_k,
                support=tp + fn,
                zero_division=flagged,
            )
        )
    return EvalReport(
        confusion=m,
        per_class=tuple(per_class),
        macro_precision=float(np.mean([c.precision for c in per_class])),
        macro_recall=float(np.mean([c.recall for c in per_class])),
        macro_f1=float(np.mean([c.f1 for c in per_class])),
        accuracy=float(np.trace(m) / total) if total > 0 else 0.0,
    )


def report_csv(report: EvalReport, class_names) -> str:
    """Per-class rows plus macro and micro summary rows."""
    if len(class_names) != len(report.per_class):
        raise DimensionError(
            f"{len(class_names)} class names for {len(report.per_class)} classes"
        )
    lines = ["class,support,precision,recall,f1,class_accuracy,zero_division"]
    for name, c in zip(class_names, report.per_class):
        lines.append(
            f"{name},{c.support},{c.precision!r},{c.recall!r},{c.f1!r},"
            f"{c.accuracy!r},{int(c.zero_division)}"
        )
    lines.append(
        f"macro,{int(report.confusion.sum())},{report.macro_precision!r},"
        f"{report.macro_recall!r},{report.macro_f1!r},{report.accuracy!r},0"
    )
    return "\n".join(lines) + "\n"


def render_confusion(confusion, class_names=None) -> str:
    """Plain-text confusion matrix, rows true / columns predicted."""
    m = np.asarray(confusion)
    c = m.shape[0]
    labels = [str(i) for i in range(c)]
    width = max(len(str(int(m.max()))) if m.size else 1, max(len(s) for s in labels))
    header = "true\\pred " + " ".join(f"{s:>{width}}" for s in labels)
    lines = [header]
    for i in range(c):
        row = " ".join(f"{int(v):>{width}}" for v in m[i])
        lines.append(f"{labels[i]:>9} {row}")
    if class_names is not None:
        lines.append("")
        for i, name in enumerate(class_names):
            lines.append(f"{i}: {name}")
    return "\n".join(lines) + "\n"
