# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Prediction heads. The downstream head reads the CLS output; task heads read a task token (a prompt output row, or
the CLS output for the multi-head baseline). Localization heads are single affine maps; dense heads fuse the
tapped patch maps with the task token.
"""

from typing import Mapping, Sequence

import equinox as eqx
import jax
from jax.random import PRNGKey

from . import ops
from . import random as prandom
from .backbone import BackboneConfig
from .core import ShapeMismatch, Tensor
from .nn import MLP, Linear
from .types import BOX_SLOTS, DENSE_CHANNELS, DENSE_TASKS, LOCALIZATION_TASKS, POSE_JOINTS, Task


class UnknownTask(ValueError):
    pass


# about the mean clipped depth of a generated scene; depth predictions above the clip get no gradient
DENSE_OUTPUT_BIAS = {Task.DEPTH: 8.0}


class DenseHead(eqx.Module):
    """
    Per spatial cell: project each tapped patch token, concatenate the projections with the task token, and map
    the result through a one-hidden-layer MLP to ``channels`` outputs. The output grid is the per-frame patch grid.
    """

    tap_projections: tuple[Linear, ...]
    fusion: MLP
    tap_layers: tuple[int, ...] = eqx.field(static=True)
    channels: int = eqx.field(static=True)
    grid: tuple[int, int, int] = eqx.field(static=True)  # (T, grid_h, grid_w)

    @staticmethod
    def init(config: BackboneConfig, channels: int, *, key: PRNGKey, output_bias: float = 0.0) -> "DenseHead":
        """
        Args:
            output_bias: starting value of every output channel
        """
        d = config.embed_dim
        d_up = max(d // 2, 1)
        keys = jax.random.split(key, len(config.tap_layers) + 1)
        projections = tuple(Linear.init(d, d_up, key=k, init_std=config.init_std) for k in keys[:-1])
        fusion_in = len(config.tap_layers) * d_up + d
        fusion = MLP.init(fusion_in, channels, d, 1, "gelu", key=keys[-1], init_std=config.init_std)
        if output_bias:
            fusion = eqx.tree_at(lambda m: m.layers[-1].bias, fusion, prandom.full((channels,), output_bias))
        return DenseHead(
            projections,
            fusion,
            config.tap_layers,
            channels,
            (config.frames, config.grid_h, config.grid_w),
        )

    def __call__(self, f_prompt: Tensor, tapped: Mapping[int, Tensor]) -> Tensor:
        if set(tapped) != set(self.tap_layers):
            raise ShapeMismatch(f"Expected tapped layers {self.tap_layers}, got {sorted(tapped)}")
        T, gh, gw = self.grid
        N = T * gh * gw
        parts = [proj(tapped[layer]) for proj, layer in zip(self.tap_projections, self.tap_layers)]
        parts.append(ops.repeat_rows(f_prompt, N))
        cells = self.fusion(ops.concat(parts, axis=1))
        return ops.reshape(cells, (T, gh, gw, self.channels))


class PoseHead(eqx.Module):
    linear: Linear

    @staticmethod
    def init(config: BackboneConfig, *, key: PRNGKey) -> "PoseHead":
        return PoseHead(Linear.init(config.embed_dim, 3 * POSE_JOINTS, key=key, init_std=config.init_std))

    def __call__(self, f_prompt: Tensor) -> Tensor:
        return self.linear(f_prompt)


class BoxHead(eqx.Module):
    """
    Predicts ``slots`` normalized corner boxes (x1, y1, x2, y2). Coordinates are squashed onto (0, 1) and each
    pair is reordered so that x1 <= x2 and y1 <= y2 for any parameter values.
    """

    linear: Linear
    slots: int = eqx.field(static=True)

    @staticmethod
    def init(config: BackboneConfig, *, key: PRNGKey, slots: int = BOX_SLOTS) -> "BoxHead":
        return BoxHead(Linear.init(config.embed_dim, 4 * slots, key=key, init_std=config.init_std), slots)

    def __call__(self, f_prompt: Tensor) -> Tensor:
        raw = ops.sigmoid(ops.reshape(self.linear(f_prompt), (self.slots, 4)))
        col = [ops.slice_axis(raw, 1, i, i + 1) for i in range(4)]
        x1, y1 = ops.minimum(col[0], col[2]), ops.minimum(col[1], col[3])
        x2, y2 = ops.maximum(col[2], col[0]), ops.maximum(col[3], col[1])
        return ops.concat([x1, y1, x2, y2], axis=1)


def _init_task_head(task: str, config: BackboneConfig, key: PRNGKey) -> eqx.Module:
    if task in DENSE_TASKS:
        return DenseHead.init(config, DENSE_CHANNELS[task], key=key, output_bias=DENSE_OUTPUT_BIAS.get(task, 0.0))
    if task == Task.POSE:
        return PoseHead.init(config, key=key)
    if task == Task.BOXES:
        return BoxHead.init(config, key=key)
    raise UnknownTask(f"No head for task {task!r}")


class HeadSet(eqx.Module):
    classifier: Linear
    tasks: dict[str, eqx.Module]

    @staticmethod
    def init(config: BackboneConfig, tasks: Sequence[str], *, key: PRNGKey) -> "HeadSet":
        k_cls, k_tasks = jax.random.split(key)
        task_keys = jax.random.split(k_tasks, max(len(tasks), 1))
        return HeadSet(
            Linear.init(config.embed_dim, config.downstream_classes, key=k_cls, init_std=config.init_std),
            {task: _init_task_head(task, config, k) for task, k in zip(tasks, task_keys)},
        )

    def predict_cls(self, f_cls: Tensor) -> Tensor:
        """Downstream logits, [C]. No softmax."""
        logits = self.classifier(f_cls)
        return ops.reshape(logits, (logits.shape[1],))

    def _head(self, task: str):
        if task not in self.tasks:
            raise UnknownTask(f"No head configured for task {task!r}; have {sorted(self.tasks)}")
        return self.tasks[task]

    def predict_localization(self, task: str, f_prompt: Tensor) -> Tensor:
        """pose -> [1, 75]; boxes -> [O, 4]."""
        if task not in LOCALIZATION_TASKS:
            raise UnknownTask(f"{task!r} is not a localization task")
        return self._head(task)(f_prompt)

    def predict_dense(self, task: str, f_prompt: Tensor, tapped: Mapping[int, Tensor]) -> Tensor:
        """[T, grid_h, grid_w, channels]."""
        if task not in DENSE_TASKS:
            raise UnknownTask(f"{task!r} is not a dense task")
        return self._head(task)(f_prompt, tapped)

    def predict(self, task: str, f_prompt: Tensor, tapped: Mapping[int, Tensor]) -> Tensor:
        if task in DENSE_TASKS:
            return self.predict_dense(task, f_prompt, tapped)
        return self.predict_localization(task, f_prompt)
