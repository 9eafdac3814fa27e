"""Classification metrics: accuracy, weighted F1/precision, macro recall."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass
class MetricsReport:
    accuracy: float
    weighted_f1: float
    weighted_precision: float
    recall: float  # macro average over classes present in the truths
    precision: np.ndarray  # per class
    per_class_recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray  # rows = true class, columns = predicted class

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def summary(self) -> dict[str, float]:
        return {"acc": self.accuracy, "wf1": self.weighted_f1,
                "wp": self.weighted_precision, "r": self.recall}


def _labels(values, num_classes: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    bad = np.flatnonzero((arr < 0) | (arr >= num_classes))
    if bad.size:
        raise DataError(f"{what} label {int(arr[bad[0]])} at index {int(bad[0])} "
                        f"outside [0, {num_classes})")
    return arr


def confusion_matrix(preds: Sequence[int], truths: Sequence[int], num_classes: int) -> np.ndarray:
    p = _labels(preds, num_classes, "predicted")
    t = _labels(truths, num_classes, "true")
    if p.shape != t.shape:
        raise DataError(f"{p.size} predictions but {t.size} truths")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def compute_metrics(preds: Sequence[int], truths: Sequence[int], num_classes: int) -> MetricsReport:
    cm = confusion_matrix(preds, truths, num_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    total = int(support.sum())
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support)
    f1 = _ratio(2 * precision * recall, precision + recall)
    weights = support / total if total else np.zeros(num_classes)
    present = support > 0
    return MetricsReport(
        accuracy=float(tp.sum() / total) if total else 0.0,
        weighted_f1=float((weights * f1).sum()),
        weighted_precision=float((weights * precision).sum()),
        recall=float(recall[present].mean()) if present.any() else 0.0,
        precision=precision,
        per_class_recall=recall,
        f1=f1,
        support=support,
        confusion=cm,
    )
