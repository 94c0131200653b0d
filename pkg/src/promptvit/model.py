# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import dataclasses
from typing import Iterable, Iterator, Sequence

import equinox as eqx
import jax
import numpy as np
from jax.random import PRNGKey
from jaxtyping import Float

from . import ops
from .backbone import Backbone, BackboneConfig, ForwardOutputs
from .core import Tensor
from .heads import HeadSet, UnknownTask
from .state_dict import named_tensors
from .types import SYNTHETIC_TASKS, Task
from .util import StringHolderEnum


class TaskSource(metaclass=StringHolderEnum):
    PROMPT = "prompt"
    CLS = "cls"


Predictions = dict[str, Tensor]
"""Task name -> prediction. Always holds ``"dt"``, the downstream logits."""


class PromptViT(eqx.Module):
    backbone: Backbone
    heads: HeadSet
    task_source: str = eqx.field(default=TaskSource.PROMPT, static=True)
    freeze_backbone: bool = eqx.field(default=False, static=True)

    @staticmethod
    def init(
        config: BackboneConfig,
        *,
        key: PRNGKey,
        tasks: Sequence[str] = SYNTHETIC_TASKS,
        task_source: str = TaskSource.PROMPT,
        freeze_backbone: bool = False,
        with_task_heads: bool = True,
        prompt_dim: int | None = None,
        shared_prompt: bool = False,
    ) -> "PromptViT":
        """
        Args:
            tasks: the supervised synthetic tasks; each gets a prompt route and (with ``with_task_heads``) a head
            task_source: whether task heads read their prompt output row or the CLS output
            prompt_dim: private prompt width (projected to the token width)
            shared_prompt: route every task to a single prompt
        """
        if task_source not in TaskSource:
            raise ValueError(f"Unknown task source {task_source!r}")
        k_backbone, k_heads = jax.random.split(key)
        backbone = Backbone.init(
            config, key=k_backbone, tasks=tasks, prompt_dim=prompt_dim, shared_prompt=shared_prompt
        )
        heads = HeadSet.init(config, tasks if with_task_heads else (), key=k_heads)
        return PromptViT(backbone, heads, task_source, freeze_backbone)

    @property
    def config(self) -> BackboneConfig:
        return self.backbone.config

    @property
    def tasks(self) -> tuple[str, ...]:
        """Tasks that have a head."""
        return tuple(t for t in SYNTHETIC_TASKS if t in self.heads.tasks)

    def forward(self, video: Float[np.ndarray, "T C H W"]) -> ForwardOutputs:  # noqa: F722
        return self.backbone(video, freeze_backbone=self.freeze_backbone)

    def task_token(self, outputs: ForwardOutputs, task: str) -> Tensor:
        """The [1, d] row a task head reads."""
        if self.task_source == TaskSource.CLS:
            return outputs.f_cls
        prompts = self.backbone.prompts
        if prompts is None or outputs.f_prompts is None or task not in prompts.tasks:
            raise UnknownTask(f"No prompt is routed to task {task!r}")
        row = prompts.position_of(task)
        return ops.slice_axis(outputs.f_prompts, 0, row, row + 1)

    def __call__(self, video: Float[np.ndarray, "T C H W"], tasks: Iterable[str] = ()) -> Predictions:  # noqa: F722
        """Downstream logits plus a prediction for each requested synthetic task."""
        outputs = self.forward(video)
        predictions: Predictions = {Task.DT: self.heads.predict_cls(outputs.f_cls)}
        for task in tasks:
            if task == Task.DT:
                continue
            token = self.task_token(outputs, task)
            predictions[task] = self.heads.predict(task, token, outputs.tapped_patches)
        return predictions

    def predict_logits(self, video: Float[np.ndarray, "T C H W"]) -> Tensor:  # noqa: F722
        """The inference path: CLS output through the downstream head only."""
        return self.heads.predict_cls(self.forward(video).f_cls)

    @property
    def params(self) -> "ModelParams":
        return ModelParams.of(self)


def strip_task_heads(model: PromptViT) -> PromptViT:
    """The same model without its task heads. The downstream head stays."""
    return dataclasses.replace(model, heads=dataclasses.replace(model.heads, tasks={}))


HEAD_CLS = "head.cls"
BACKBONE_GROUPS = ("embedder", "cls_token", "prompts", "blocks")


def group_of(name: str) -> str:
    """Owner group of a parameter, from its state-dict name."""
    if name.startswith("backbone.embed."):
        return "embedder"
    if name == "backbone.cls_token":
        return "cls_token"
    if name.startswith("backbone.prompts."):
        return "prompts"
    if name.startswith("backbone.blocks.") or name.startswith("backbone.norm."):
        return "blocks"
    if name.startswith("heads.classifier."):
        return HEAD_CLS
    if name.startswith("heads.tasks."):
        return "head." + name.split(".")[2]
    raise ValueError(f"Parameter {name} belongs to no known group")


def _group_rank(group: str) -> tuple[int, int]:
    if group in BACKBONE_GROUPS:
        return (0, BACKBONE_GROUPS.index(group))
    if group == HEAD_CLS:
        return (1, 0)
    task = group.removeprefix("head.")
    return (2, SYNTHETIC_TASKS.index(task) if task in SYNTHETIC_TASKS else len(SYNTHETIC_TASKS))


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """A read-only view of a model's learnable tensors: ordered (name, Tensor) pairs with owner groups."""

    entries: tuple[tuple[str, Tensor], ...]

    @staticmethod
    def of(model: PromptViT) -> "ModelParams":
        return ModelParams(tuple(named_tensors(model)))

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    @property
    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.entries]

    def groups(self) -> dict[str, list[tuple[str, Tensor]]]:
        out: dict[str, list[tuple[str, Tensor]]] = {}
        for name, t in self.entries:
            out.setdefault(group_of(name), []).append((name, t))
        return {g: out[g] for g in sorted(out, key=_group_rank)}

    def group(self, group: str) -> list[Tensor]:
        return [t for name, t in self.entries if group_of(name) == group]

    def census(self) -> dict[str, int]:
        """Exact scalar count per owner group."""
        return {g: sum(t.size for _, t in entries) for g, entries in self.groups().items()}

    def total(self) -> int:
        return sum(t.size for _, t in self.entries)
