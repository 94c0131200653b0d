# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Task losses and their weighted total.

Squared-error losses are raw sums of squares with explicit prefactors: 1/(h̃·w̃) per frame for the dense maps,
averaged over frames, and 1/75 for pose.
"""

import dataclasses
import logging
import warnings
from typing import Sequence

import numpy as np

from . import ops
from .core import ShapeMismatch, Tensor, as_tensor
from .nn import cross_entropy_loss
from .types import ALL_TASKS, Task
from .util import InvalidConfig


logger = logging.getLogger(__name__)


class ClassOutOfRange(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


class DegenerateBoxWarning(UserWarning):
    """Both boxes of a GIoU pair have zero area; the pair scores 0."""


@dataclasses.dataclass(frozen=True)
class LossWeights:
    depth: float = 0.5
    normal: float = 0.5
    segm: float = 0.1
    pose: float = 3.0
    boxes: float = 0.1
    dt: float = 1.0
    depth_clip: float = 10.0

    def __post_init__(self):
        for task in ALL_TASKS:
            if getattr(self, task) < 0:
                raise InvalidConfig(f"Loss weight for {task} must be >= 0, got {getattr(self, task)}")
        if not self.depth_clip > 0:
            raise InvalidConfig(f"depth_clip must be positive, got {self.depth_clip}")

    def weight(self, task: str) -> float:
        return getattr(self, task)


def _check_same_shape(pred: Tensor, gt: Tensor, what: str):
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{what}: prediction {pred.shape} and target {gt.shape} differ")


def _per_pixel_mean(summed: Tensor, dense_shape: tuple[int, ...]) -> Tensor:
    """Applies the 1/(h̃·w̃) prefactor and averages over the T frames."""
    T, h, w = dense_shape[:3]
    return ops.scale(summed, 1.0 / (T * h * w))


def depth_loss(pred: Tensor, gt: Tensor | np.ndarray, clip: float = 10.0) -> Tensor:
    """Per-frame ``(1/(h̃·w̃)) Σ (min(pred, clip) − min(gt, clip))²``, averaged over frames."""
    gt = as_tensor(gt)
    _check_same_shape(pred, gt, "depth")
    if pred.ndim != 4 or pred.shape[3] != 1:
        raise ShapeMismatch(f"depth maps must be [T, h, w, 1], got {pred.shape}")
    diff = ops.sub(ops.clip_max(pred, clip), ops.clip_max(gt, clip))
    return _per_pixel_mean(ops.sum(ops.square(diff)), pred.shape)


def normal_loss(pred: Tensor, gt: Tensor | np.ndarray) -> Tensor:
    """Channel-summed squared error with the per-pixel prefactor, averaged over frames."""
    gt = as_tensor(gt)
    _check_same_shape(pred, gt, "normal")
    if pred.ndim != 4 or pred.shape[3] != 3:
        raise ShapeMismatch(f"normal maps must be [T, h, w, 3], got {pred.shape}")
    return _per_pixel_mean(ops.sum(ops.square(ops.sub(pred, gt))), pred.shape)


def _check_classes(classes: np.ndarray, num_classes: int, what: str):
    if classes.size and (classes.min() < 0 or classes.max() >= num_classes):
        raise ClassOutOfRange(f"{what} classes must lie in [0, {num_classes}), got [{classes.min()}, {classes.max()}]")


def segm_loss(logits: Tensor, gt_classes: np.ndarray) -> Tensor:
    """Per-pixel softmax cross-entropy with the per-pixel prefactor, averaged over frames."""
    gt_classes = np.asarray(gt_classes)
    if logits.ndim != 4 or gt_classes.shape != logits.shape[:3]:
        raise ShapeMismatch(f"segmentation logits {logits.shape} do not match class map {gt_classes.shape}")
    C = logits.shape[3]
    _check_classes(gt_classes, C, "segmentation")
    T, h, w = gt_classes.shape
    per_pixel = cross_entropy_loss(ops.reshape(logits, (T * h * w, C)), gt_classes.reshape(-1))
    return _per_pixel_mean(ops.sum(per_pixel), logits.shape)


def pose_loss(pred: Tensor, gt: Tensor | np.ndarray) -> Tensor:
    """``(1/75) Σ (pred − gt)²``."""
    gt = as_tensor(gt)
    _check_same_shape(pred, gt, "pose")
    return ops.scale(ops.sum(ops.square(ops.sub(pred, gt))), 1.0 / pred.size)


def _column(boxes: Tensor, i: int) -> Tensor:
    return ops.slice_axis(boxes, 1, i, i + 1)


def _as_box_rows(b: Tensor) -> Tensor:
    if b.ndim == 1 and b.shape[0] == 4:
        return ops.reshape(b, (1, 4))
    if b.ndim != 2 or b.shape[1] != 4:
        raise ShapeMismatch(f"Boxes must be [4] or [R, 4], got {b.shape}")
    return b


def giou(a: Tensor | np.ndarray, b: Tensor | np.ndarray) -> Tensor:
    """
    Generalized IoU of corner boxes (x1, y1, x2, y2), row by row: ``IoU − (hull − union) / hull`` where hull is the
    smallest box enclosing both. Returns [R].

    A pair whose union has zero area scores 0 and raises a [promptvit.losses.DegenerateBoxWarning][].
    """
    a, b = _as_box_rows(as_tensor(a)), _as_box_rows(as_tensor(b))
    _check_same_shape(a, b, "giou")
    ax1, ay1, ax2, ay2 = (_column(a, i) for i in range(4))
    bx1, by1, bx2, by2 = (_column(b, i) for i in range(4))

    area_a = ops.mul(ops.sub(ax2, ax1), ops.sub(ay2, ay1))
    area_b = ops.mul(ops.sub(bx2, bx1), ops.sub(by2, by1))
    inter_w = ops.maximum(ops.sub(ops.minimum(ax2, bx2), ops.maximum(ax1, bx1)), 0.0)
    inter_h = ops.maximum(ops.sub(ops.minimum(ay2, by2), ops.maximum(ay1, by1)), 0.0)
    inter = ops.mul(inter_w, inter_h)
    union = ops.sub(ops.add(area_a, area_b), inter)
    hull = ops.mul(
        ops.sub(ops.maximum(ax2, bx2), ops.minimum(ax1, bx1)), ops.sub(ops.maximum(ay2, by2), ops.minimum(ay1, by1))
    )

    degenerate = union.value <= 0
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} box pair(s) have zero union area; scoring them 0", DegenerateBoxWarning
        )
        # keep the denominators away from zero, then zero the affected rows
        pad = Tensor(degenerate.astype(np.float64))
        union = ops.add(union, pad)
        hull = ops.add(hull, pad)

    iou = ops.div(inter, union)
    out = ops.sub(iou, ops.div(ops.sub(hull, union), hull))
    if degenerate.any():
        out = ops.mul(out, Tensor(1.0 - degenerate.astype(np.float64)))
    return ops.reshape(out, (out.shape[0],))


def box_loss(pred: Tensor, gt: Tensor | np.ndarray) -> Tensor:
    """Mean over slots of ``L1(pred_i, gt_i) + (1 − GIoU(pred_i, gt_i))``; slot i of pred matches slot i of gt."""
    gt = as_tensor(gt)
    _check_same_shape(pred, gt, "boxes")
    pred = _as_box_rows(pred)
    gt = _as_box_rows(gt)
    l1 = ops.sum(ops.abs(ops.sub(pred, gt)), axis=1)
    per_slot = ops.add(l1, ops.neg(ops.sub(giou(pred, gt), 1.0)))
    return ops.mean(per_slot)


def downstream_loss(logits: Tensor, label: int) -> Tensor:
    """Softmax cross-entropy of a [C] logit vector against a class index."""
    C = logits.shape[-1]
    _check_classes(np.asarray([label]), C, "downstream")
    return cross_entropy_loss(ops.reshape(logits, (1, C)), np.asarray([label]))


def task_loss(task: str, prediction: Tensor, target, weights: "LossWeights") -> Tensor:
    """Dispatches to the loss of ``task``."""
    if task == Task.DT:
        return downstream_loss(prediction, int(target))
    if task == Task.DEPTH:
        return depth_loss(prediction, target, weights.depth_clip)
    if task == Task.NORMAL:
        return normal_loss(prediction, target)
    if task == Task.SEGM:
        return segm_loss(prediction, target)
    if task == Task.POSE:
        return pose_loss(prediction, target)
    if task == Task.BOXES:
        return box_loss(prediction, target)
    raise ValueError(f"Unknown task {task!r}")


@dataclasses.dataclass(frozen=True)
class LossReport:
    """
    Per-task mean loss over the samples carrying that task's annotation, and the λ-weighted total. Tasks no sample
    carries are absent from every map.
    """

    values: dict[str, float]
    counts: dict[str, int]
    contributions: dict[str, float]
    total: Tensor

    @property
    def total_value(self) -> float:
        return self.total.item()


def total_loss(
    predictions: Sequence[dict[str, Tensor]],
    annotations: Sequence,
    weights: LossWeights = LossWeights(),
) -> LossReport:
    """
    Sums ``λ_i · mean_i`` over present tasks, where ``mean_i`` averages task i's loss over only the samples that
    carry task i's annotation.

    Args:
        predictions: per sample, task -> prediction (``"dt"`` holds the downstream logits)
        annotations: per sample, an object whose ``get(task)`` returns the target or None
    """
    if len(predictions) == 0:
        raise EmptyBatch("total_loss needs at least one sample")
    if len(predictions) != len(annotations):
        raise ShapeMismatch(f"{len(predictions)} predictions for {len(annotations)} annotation sets")

    values: dict[str, float] = {}
    counts: dict[str, int] = {}
    contributions: dict[str, float] = {}
    total: Tensor | None = None
    for task in ALL_TASKS:
        per_sample = []
        for pred, ann in zip(predictions, annotations):
            target = ann.get(task)
            if target is None:
                continue
            if task not in pred:
                raise ValueError(f"Sample carries {task!r} annotations but has no {task!r} prediction")
            per_sample.append(task_loss(task, pred[task], target, weights))
        if not per_sample:
            continue
        summed = per_sample[0]
        for loss in per_sample[1:]:
            summed = ops.add(summed, loss)
        mean = ops.scale(summed, 1.0 / len(per_sample))
        contribution = ops.scale(mean, weights.weight(task))
        values[task] = mean.item()
        counts[task] = len(per_sample)
        contributions[task] = contribution.item()
        total = contribution if total is None else ops.add(total, contribution)

    if total is None:
        raise EmptyBatch("No sample in the batch carries any annotation")
    logger.debug("total loss %r from %s", total.item(), counts)
    return LossReport(values, counts, contributions, total)
