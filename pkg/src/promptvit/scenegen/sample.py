# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import dataclasses
from typing import Iterable, Iterator

import numpy as np
from jaxtyping import Float, Int

from ..core import ShapeMismatch
from ..types import SYNTHETIC_TASKS, Task
from ..util import StringHolderEnum
from .scene import (
    BALL_RADIUS,
    FIGURE,
    SHAPE,
    SQUARE,
    SQUARE_HALF_SIZE,
    SceneConfig,
    ScenePlan,
    figure_joints,
    figure_spheres,
    mask_box,
    projected_box,
    render,
    sample_plan,
)


PRNG_ID = "numpy.PCG64"


class InvalidMask(ValueError):
    pass


class Origin(metaclass=StringHolderEnum):
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclasses.dataclass(frozen=True, eq=False)
class AnnotationSet:
    """
    Labels of one video. Absent fields are None. Dense maps live on the per-frame label grid; boxes and pose
    describe the first frame.
    """

    depth: Float[np.ndarray, "T h w 1"] | None = None  # noqa: F722
    normal: Float[np.ndarray, "T h w 3"] | None = None  # noqa: F722
    segm: Int[np.ndarray, "T h w"] | None = None  # noqa: F722
    boxes: Float[np.ndarray, "2 4"] | None = None  # noqa: F722
    pose: Float[np.ndarray, "1 75"] | None = None  # noqa: F722
    action: int | None = None

    def get(self, task: str):
        """The target of ``task`` (``"dt"`` is the action class), or None."""
        if task == Task.DT:
            return self.action
        if task not in SYNTHETIC_TASKS:
            raise InvalidMask(f"Unknown task {task!r}")
        return getattr(self, task)

    @property
    def tasks(self) -> tuple[str, ...]:
        """Present tasks, in the fixed task order."""
        return tuple(t for t in (Task.DT, *SYNTHETIC_TASKS) if self.get(t) is not None)

    def items(self) -> Iterator[tuple[str, object]]:
        for task in self.tasks:
            yield task, self.get(task)

    def restrict(self, keep: Iterable[str]) -> "AnnotationSet":
        """Withholds every annotation whose task is not in ``keep``."""
        keep = set(keep)
        changes = {t: None for t in SYNTHETIC_TASKS if t not in keep}
        if Task.DT not in keep:
            changes["action"] = None
        return dataclasses.replace(self, **changes)

    def replace(self, task: str, value) -> "AnnotationSet":
        return dataclasses.replace(self, **{"action" if task == Task.DT else task: value})


@dataclasses.dataclass(frozen=True, eq=False)
class VideoSample:
    pixels: Float[np.ndarray, "T 3 H W"]  # noqa: F722
    annotations: AnnotationSet
    origin: str
    seed: int

    @property
    def action(self) -> int | None:
        return self.annotations.action


def downsample_gt(full_map: np.ndarray, kind: str, grid: tuple[int, int], *, renormalize: bool = False) -> np.ndarray:
    """
    Pools a [T, H, W] or [T, H, W, C] map onto a [T, gh, gw(, C)] grid.

    Args:
        kind: ``"average"`` for continuous maps, ``"mode"`` for class maps (ties go to the lowest class)
        renormalize: rescale averaged vectors to unit length (normal maps)
    """
    full_map = np.asarray(full_map)
    T, H, W = full_map.shape[:3]
    gh, gw = grid
    if H % gh != 0 or W % gw != 0:
        raise ShapeMismatch(f"Map of size {H}x{W} cannot be pooled onto a {gh}x{gw} grid")
    bh, bw = H // gh, W // gw
    if kind == "average":
        trailing = full_map.shape[3:]
        cells = full_map.reshape(T, gh, bh, gw, bw, *trailing).astype(np.float64)
        pooled = cells.mean(axis=(2, 4))
        if renormalize:
            pooled = pooled / np.linalg.norm(pooled, axis=-1, keepdims=True)
        return pooled
    if kind == "mode":
        if full_map.ndim != 3:
            raise ShapeMismatch(f"Mode pooling needs a [T, H, W] class map, got {full_map.shape}")
        classes = full_map.astype(np.int64)
        cells = classes.reshape(T, gh, bh, gw, bw).transpose(0, 1, 3, 2, 4).reshape(T, gh, gw, bh * bw)
        counts = np.eye(int(classes.max()) + 1, dtype=np.int64)[cells].sum(axis=3)
        # argmax returns the first maximum, i.e. the lowest class
        return np.argmax(counts, axis=-1)
    raise ValueError(f"Unknown pooling kind {kind!r}")


def first_frame_boxes(plan: ScenePlan, layer_masks, config: SceneConfig) -> Float[np.ndarray, "2 4"]:  # noqa: F722
    """Slot 0 boxes the shape, slot 1 the figure, each from its unoccluded frame-0 mask."""
    shape_radius = BALL_RADIUS if plan.shape_kind != SQUARE else SQUARE_HALF_SIZE
    geometry = {
        SHAPE: (plan.shape_center(0)[None, :], np.array([shape_radius])),
        FIGURE: figure_spheres(figure_joints(plan, 0)),
    }
    boxes = []
    for layer in (SHAPE, FIGURE):
        mask = layer_masks[layer]
        boxes.append(mask_box(mask) if mask.any() else projected_box(*geometry[layer], config))
    return np.stack(boxes)


def _check_mask(origin: str, task_mask: frozenset[str]):
    if origin not in Origin:
        raise InvalidMask(f"Unknown origin {origin!r}")
    unknown = task_mask - set(SYNTHETIC_TASKS)
    if unknown:
        raise InvalidMask(f"Task mask may only name synthetic tasks, got {sorted(unknown)}")
    if origin == Origin.SYNTHETIC and not task_mask:
        raise InvalidMask("Synthetic samples need at least one annotation")


def generate_sample(
    seed: int,
    origin: str,
    task_mask: Iterable[str] = (),
    config: SceneConfig = SceneConfig(),
) -> VideoSample:
    """
    Renders the scene drawn from ``seed`` and fills exactly the annotations in ``task_mask``. Real samples also
    carry the action class (``4 * shape kind + motion direction``) and get pixel noise and colour jitter.
    The output depends only on the arguments.
    """
    task_mask = frozenset(task_mask)
    _check_mask(origin, task_mask)
    rng = np.random.Generator(np.random.PCG64(seed))
    plan = sample_plan(rng)
    frames = render(plan, config)

    pixels = np.stack([f.rgb for f in frames])
    if origin == Origin.REAL:
        gain = rng.uniform(1 - config.color_jitter, 1 + config.color_jitter, size=(1, 3, 1, 1))
        noise = rng.normal(0.0, config.pixel_noise, size=pixels.shape)
        pixels = np.clip(pixels * gain + noise, 0.0, 1.0)

    grid = (config.grid_h, config.grid_w)
    labels: dict = {}
    if Task.DEPTH in task_mask:
        labels[Task.DEPTH] = downsample_gt(np.stack([f.depth for f in frames])[..., None], "average", grid)
    if Task.NORMAL in task_mask:
        normals = np.stack([f.normal for f in frames])
        labels[Task.NORMAL] = downsample_gt(normals, "average", grid, renormalize=True)
    if Task.SEGM in task_mask:
        labels[Task.SEGM] = downsample_gt(np.stack([f.segm for f in frames]), "mode", grid)
    if Task.BOXES in task_mask:
        labels[Task.BOXES] = first_frame_boxes(plan, frames[0].layer_masks, config)
    if Task.POSE in task_mask:
        joints = figure_joints(plan, 0)
        labels[Task.POSE] = (joints - joints[0]).reshape(1, -1)

    action = plan.action if origin == Origin.REAL else None
    return VideoSample(pixels, AnnotationSet(**labels, action=action), origin, int(seed))
