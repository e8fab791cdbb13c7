"""Mask IoU, balanced recall, and top-k detection accuracy."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, MissingClass, ValueOutOfRange
from .imagecore import CutoutMask, rect_iou


def mask_iou(pred: CutoutMask, gt: CutoutMask) -> float:
    """FG intersection over FG union; two empty masks agree vacuously (1.0)."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatch(
            f"masks differ: {pred.width}x{pred.height} vs {gt.width}x{gt.height}"
        )
    inter = int(np.logical_and(pred.labels, gt.labels).sum())
    union = int(np.logical_or(pred.labels, gt.labels).sum())
    return 1.0 if union == 0 else inter / union


def balanced_recall(predictions) -> float:
    """Mean of positive-class and negative-class recall.

    predictions: iterable of (predicted, actual) with truthy = positive.
    """
    tp = fn = tn = fp = 0
    for predicted, actual in predictions:
        if actual:
            if predicted:
                tp += 1
            else:
                fn += 1
        else:
            if predicted:
                fp += 1
            else:
                tn += 1
    if tp + fn == 0 or tn + fp == 0:
        raise MissingClass("balanced recall needs samples of both true classes")
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


def topk_accuracy(per_image, k: int, iou_thresh: float = 0.5) -> float:
    """Fraction of images with a hit among the k best-ranked rectangles.

    per_image: iterable of (ranked_rects, gt_rects); a hit is any top-k rect
    with rect_iou >= iou_thresh against any ground-truth rect.
    """
    if k < 1:
        raise ValueOutOfRange("k must be >= 1")
    total = hits = 0
    for ranked, gt_rects in per_image:
        total += 1
        top = list(ranked)[:k]
        if any(rect_iou(r, g) >= iou_thresh for r in top for g in gt_rects):
            hits += 1
    if total == 0:
        raise ValueOutOfRange("topk_accuracy needs at least one image")
    return hits / total
