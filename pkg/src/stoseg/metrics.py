"""Confusion counts and the seven binary-segmentation scores.

Division-by-zero conventions: when prediction and ground truth are both
empty, the overlap ratios (precision, recall, f1, f2, iou, dice) are all
1.0 -- correctly predicting absence counts as a perfect score. When
exactly one of them is empty, the affected ratios are 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

CSV_COLUMNS = ("IoU", "Dice", "F2", "Precision", "Recall", "Accuracy")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    f2: float
    iou: float
    dice: float

    def csv_values(self) -> Tuple[float, ...]:
        """Values in CSV column order (see CSV_COLUMNS)."""
        return (self.iou, self.dice, self.f2, self.precision, self.recall, self.accuracy)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Exact pixel counts of a binary prediction against a binary mask."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    for name, m in (("prediction", pred), ("ground truth", gt)):
        vals = np.unique(m)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"{name} mask is not binary (values {vals[:8]})")
    p = pred.astype(bool)
    g = gt.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        tn=int(np.count_nonzero(~p & ~g)),
        fp=int(np.count_nonzero(p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
    )


def metrics_from_counts(c: ConfusionCounts) -> MetricReport:
    if c.total <= 0:
        raise ValueError("confusion counts are all zero")
    tp, tn, fp, fn = c.tp, c.tn, c.fp, c.fn
    accuracy = (tp + tn) / c.total
    pred_pos = tp + fp
    gt_pos = tp + fn
    if pred_pos == 0 and gt_pos == 0:
        one = 1.0
        return MetricReport(accuracy, one, one, one, one, one, one)
    precision = tp / pred_pos if pred_pos else 0.0
    recall = tp / gt_pos if gt_pos else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn)
    f2_den = 4 * precision + recall
    f2 = 5 * precision * recall / f2_den if f2_den > 0 else 0.0
    iou = tp / (tp + fp + fn)
    return MetricReport(accuracy, precision, recall, f1, f2, iou, dice=f1)


def evaluate_set(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> MetricReport:
    """Macro average: one report per (pred, gt) image pair, then the mean.

    This is deliberately NOT the pooled-count metric; images of different
    sizes contribute equally.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty set of mask pairs")
    reports = [metrics_from_counts(confusion(p, g)) for p, g in pairs]
    return mean_report(reports)


def mean_report(reports: Iterable[MetricReport]) -> MetricReport:
    reports = list(reports)
    k = len(reports)
    return MetricReport(
        accuracy=sum(r.accuracy for r in reports) / k,
        precision=sum(r.precision for r in reports) / k,
        recall=sum(r.recall for r in reports) / k,
        f1=sum(r.f1 for r in reports) / k,
        f2=sum(r.f2 for r in reports) / k,
        iou=sum(r.iou for r in reports) / k,
        dice=sum(r.dice for r in reports) / k,
    )
