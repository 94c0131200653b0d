# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
The ablation ladder. Each variant is a wiring of the same backbone: how many prompts there are, what the task
heads read, whether the backbone trains, and which data the trainer feeds it.
"""

import dataclasses
import logging
from typing import Sequence

from jax.random import PRNGKey

from .backbone import BackboneConfig
from .model import PromptViT, TaskSource
from .types import SYNTHETIC_TASKS
from .util import StringHolderEnum


logger = logging.getLogger(__name__)


class InvalidVariant(ValueError):
    pass


class VariantKind(metaclass=StringHolderEnum):
    PVIT = "pvit"
    BASELINE = "baseline"
    MT = "mt"
    VPT = "vpt"
    PVIT_VPT = "pvit_vpt"
    OP = "op"
    NP = "np"
    SHUFFLED = "shuffled"


# kinds that train task heads on synthetic data
_SUPERVISED = (VariantKind.PVIT, VariantKind.MT, VariantKind.PVIT_VPT, VariantKind.OP, VariantKind.SHUFFLED)
_NO_PROMPTS = (VariantKind.BASELINE, VariantKind.MT)
_FROZEN = (VariantKind.VPT, VariantKind.PVIT_VPT)


@dataclasses.dataclass(frozen=True)
class VariantSpec:
    kind: str = VariantKind.PVIT
    # overrides the backbone's prompt count; for op it is the number of prompts the single prompt replaces
    prompt_count: int | None = None

    def __post_init__(self):
        if self.kind not in VariantKind:
            raise InvalidVariant(f"Unknown variant {self.kind!r}; expected one of {list(VariantKind)}")
        if self.prompt_count is not None:
            if self.kind in _NO_PROMPTS and self.prompt_count != 0:
                raise InvalidVariant(f"Variant {self.kind} has no prompts, got prompt_count={self.prompt_count}")
            if self.kind not in _NO_PROMPTS and self.prompt_count < 1:
                raise InvalidVariant(f"Variant {self.kind} needs prompts, got prompt_count={self.prompt_count}")

    @property
    def uses_synthetic(self) -> bool:
        return self.kind in _SUPERVISED

    @property
    def freezes_backbone(self) -> bool:
        return self.kind in _FROZEN

    @property
    def shuffles_annotations(self) -> bool:
        return self.kind == VariantKind.SHUFFLED


@dataclasses.dataclass(frozen=True)
class DataPolicy:
    """What the trainer feeds a variant."""

    uses_synthetic: bool
    shuffle_annotations: bool
    # tasks whose losses the model is trained on, besides the downstream task
    supervised_tasks: tuple[str, ...]


@dataclasses.dataclass(frozen=True)
class BuiltVariant:
    model: PromptViT
    policy: DataPolicy
    spec: VariantSpec


def _prompt_count(spec: VariantSpec, config: BackboneConfig) -> int:
    """Prompt-free kinds always get 0 prompts, whatever the backbone config asks for."""
    if spec.kind in _NO_PROMPTS:
        if config.prompt_count:
            logger.info("Variant %s has no prompts; ignoring prompt_count=%d", spec.kind, config.prompt_count)
        return 0
    n = config.prompt_count if spec.prompt_count is None else spec.prompt_count
    if n < 1:
        raise InvalidVariant(f"Variant {spec.kind} needs at least one prompt, the backbone config has {n}")
    return n


def build_variant(
    spec: VariantSpec,
    config: BackboneConfig,
    *,
    key: PRNGKey,
    tasks: Sequence[str] = SYNTHETIC_TASKS,
) -> BuiltVariant:
    """
    Wires a model for ``spec`` on top of ``config``.

    * baseline: no prompts, no task heads, no synthetic data
    * mt: no prompts; one task head per task, all reading the CLS output

    baseline and mt override the backbone's ``prompt_count`` with 0 (logged at INFO).
    * vpt: prompts, frozen backbone, no synthetic data; pvit_vpt adds the synthetic data
    * op: a single prompt of width ``n·d`` projected to ``d``, read by every task head
    * np: prompts without synthetic supervision
    * pvit / shuffled: one prompt per task; shuffled scrambles the synthetic annotations

    Args:
        tasks: the synthetic tasks the data supervises
    """
    tasks = tuple(t for t in SYNTHETIC_TASKS if t in set(tasks))
    kind = spec.kind
    n = _prompt_count(spec, config)
    supervised = tasks if spec.uses_synthetic else ()
    if kind in (VariantKind.PVIT, VariantKind.PVIT_VPT, VariantKind.SHUFFLED) and n < len(tasks):
        raise InvalidVariant(f"{kind} needs one prompt per task: {len(tasks)} tasks, {n} prompts")

    prompt_dim = None
    shared = False
    if kind == VariantKind.OP:
        prompt_dim = n * config.embed_dim
        shared = True
        n = 1

    model = PromptViT.init(
        dataclasses.replace(config, prompt_count=n),
        key=key,
        tasks=supervised,
        task_source=TaskSource.CLS if kind == VariantKind.MT else TaskSource.PROMPT,
        freeze_backbone=spec.freezes_backbone,
        with_task_heads=bool(supervised),
        prompt_dim=prompt_dim,
        shared_prompt=shared,
    )
    policy = DataPolicy(spec.uses_synthetic, spec.shuffles_annotations, supervised)
    logger.debug("Built variant %s: %d prompts, heads for %s", kind, n, supervised)
    return BuiltVariant(model, policy, spec)


__all__ = ["InvalidVariant", "VariantKind", "VariantSpec", "DataPolicy", "BuiltVariant", "build_variant"]
