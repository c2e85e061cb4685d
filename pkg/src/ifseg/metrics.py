"""Accuracy, Dice and IoU from confusion counts.

Per-class scores use the convention that a class absent from both the
prediction and the truth scores 1.0 (0/0), and a class present in only one
of them scores 0.0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

SOFT_DICE_TOL = 1e-6


@dataclass
class ConfusionCounts:
    """``counts[t, p]`` = pixels of true class t predicted as p."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def num_pixels(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.counts + other.counts)

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionCounts":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))


def confusion(pred: np.ndarray, truth: np.ndarray, num_classes: int) -> ConfusionCounts:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    for name, arr in (("prediction", pred), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} labels must be in [0, {num_classes})")
    idx = truth.astype(np.int64).ravel() * num_classes + pred.astype(np.int64).ravel()
    counts = np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)
    return ConfusionCounts(counts.astype(np.int64))


def accuracy(cm: ConfusionCounts) -> float:
    total = cm.num_pixels
    if total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return int(np.trace(cm.counts)) / total


def _tp_fp_fn(cm: ConfusionCounts, c: int) -> tuple[int, int, int]:
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[:, c].sum()) - tp
    fn = int(cm.counts[c, :].sum()) - tp
    return tp, fp, fn


def dice(cm: ConfusionCounts, c: int) -> float:
    tp, fp, fn = _tp_fp_fn(cm, c)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def iou(cm: ConfusionCounts, c: int) -> float:
    tp, fp, fn = _tp_fp_fn(cm, c)
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


def _micro(cm: ConfusionCounts, classes: Sequence[int]) -> tuple[float, float]:
    tp = fp = fn = 0
    for c in classes:
        a, b, d = _tp_fp_fn(cm, c)
        tp, fp, fn = tp + a, fp + b, fn + d
    dice_den = 2 * tp + fp + fn
    iou_den = tp + fp + fn
    return (1.0 if dice_den == 0 else 2 * tp / dice_den), (1.0 if iou_den == 0 else tp / iou_den)


@dataclass
class MetricsReport:
    ac: float
    dice_per_class: list[float]
    iou_per_class: list[float]
    dice_macro_incl_bg: float
    dice_macro_excl_bg: float
    iou_macro_incl_bg: float
    iou_macro_excl_bg: float
    dice_global_excl_bg: float
    iou_global_excl_bg: float
    partition: Literal["train", "val"] = "val"

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def dc(self) -> float:
        """Headline Dice: macro average including background."""
        return self.dice_macro_incl_bg

    @property
    def iou(self) -> float:
        return self.iou_macro_incl_bg


def report(cm: ConfusionCounts, partition: str = "val") -> MetricsReport:
    """All aggregation variants at once.

    The ``global`` fields pool TP/FP/FN over foreground classes before
    dividing (micro average); with background included that equals accuracy,
    so only the foreground form is kept.
    """
    c = cm.num_classes
    d = [dice(cm, k) for k in range(c)]
    j = [iou(cm, k) for k in range(c)]
    fg = list(range(1, c))
    g_dice, g_iou = _micro(cm, fg)
    return MetricsReport(
        ac=accuracy(cm),
        dice_per_class=d,
        iou_per_class=j,
        dice_macro_incl_bg=float(np.mean(d)),
        dice_macro_excl_bg=float(np.mean(d[1:])) if c > 1 else float(d[0]),
        iou_macro_incl_bg=float(np.mean(j)),
        iou_macro_excl_bg=float(np.mean(j[1:])) if c > 1 else float(j[0]),
        dice_global_excl_bg=g_dice,
        iou_global_excl_bg=g_iou,
        partition=partition,
    )


def soft_dice(probs: np.ndarray, target: np.ndarray) -> float:
    """Mean over classes present in ``target`` of ``2 sum(p t) / (sum p + sum t)``.

    For monitoring curves only. ``probs`` and ``target`` are N x C x H x W.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if probs.shape != target.shape:
        raise ValueError(f"probs shape {probs.shape} != target shape {target.shape}")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > SOFT_DICE_TOL:
        raise ValueError("probabilities are not normalized per pixel")
    axes = (0,) + tuple(range(2, probs.ndim))
    inter = (probs * target).sum(axis=axes)
    ps = probs.sum(axis=axes)
    ts = target.sum(axis=axes)
    present = ts > 0
    if not present.any():
        raise ValueError("target has no labelled pixels")
    return float(np.mean(2 * inter[present] / (ps[present] + ts[present])))
