"""Jaccard index and the pixel-wise frequency-weighted Jaccard reward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .combiner import LabelCanvas
from .scene import BinaryMask, ClassCatalog, LabelMap


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-class weights and Jaccard scores behind one reward value.

    total = sum(w_i * ji_i over taken classes) + r_bg, where w_i is the
    fraction of image pixels the class currently claims on the canvas.
    """

    per_class: tuple[tuple[int, float, float], ...]  # (class_id, weight, jaccard)
    r_bg: float
    total: float


def jaccard(pred: BinaryMask, gt: BinaryMask) -> float:
    """Intersection over union; 0 when both masks are empty."""
    if pred.bits.shape != gt.bits.shape:
        raise ValueError(f"mask dimensions differ: {pred.bits.shape} vs {gt.bits.shape}")
    inter = int(np.logical_and(pred.bits, gt.bits).sum())
    union = pred.area + gt.area - inter
    return inter / union if union else 0.0


def _per_class_stats(canvas_labels: np.ndarray, gt_labels: np.ndarray, n_classes: int):
    pred = np.bincount(canvas_labels.ravel(), minlength=n_classes)[:n_classes]
    gt = np.bincount(gt_labels.ravel(), minlength=n_classes)[:n_classes]
    joint = np.bincount(
        canvas_labels.ravel().astype(np.int64) * n_classes + gt_labels.ravel().astype(np.int64),
        minlength=n_classes * n_classes,
    ).reshape(n_classes, n_classes)
    inter = np.diagonal(joint)
    return pred, gt, inter


def reward(
    canvas: LabelCanvas,
    gt: LabelMap,
    taken: Sequence[int],
    catalog: ClassCatalog,
) -> RewardBreakdown:
    """Frequency-weighted Jaccard over the taken classes plus the background term.

    Weights are predicted-pixel fractions of the current canvas. A taken class
    with ground truth absent but a nonempty prediction scores Jaccard 0 at
    positive weight, which is what penalizes selecting absent objects.
    """
    taken = [int(i) for i in taken]
    if len(set(taken)) != len(taken):
        raise ValueError(f"taken list contains duplicates: {taken}")
    bg_ids = catalog.background_ids
    bad = [i for i in taken if i in bg_ids or i == 0]
    if bad:
        raise ValueError(f"taken list contains background/void ids: {bad}")
    if canvas.assignment.shape != gt.labels.shape:
        raise ValueError(f"canvas {canvas.assignment.shape} does not match ground truth {gt.labels.shape}")

    n_classes = len(catalog)
    total_pixels = gt.labels.size
    pred, gt_count, inter = _per_class_stats(canvas.assignment, gt.labels, n_classes)

    def term(class_id: int) -> tuple[float, float]:
        w = pred[class_id] / total_pixels
        union = pred[class_id] + gt_count[class_id] - inter[class_id]
        ji = inter[class_id] / union if union else 0.0
        return float(w), float(ji)

    per_class = []
    total = 0.0
    for class_id in taken:
        w, ji = term(class_id)
        per_class.append((class_id, w, ji))
        total += w * ji
    r_bg = 0.0
    for bg_id in bg_ids:
        w, ji = term(bg_id)
        r_bg += w * ji
    return RewardBreakdown(per_class=tuple(per_class), r_bg=r_bg, total=total + r_bg)
