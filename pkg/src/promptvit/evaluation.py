# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import dataclasses
import logging
from typing import Sequence

import numpy as np

from .core import no_grad
from .model import BACKBONE_GROUPS, HEAD_CLS, PromptViT
from .scenegen import VideoSample
from .util import StringHolderEnum


logger = logging.getLogger(__name__)


class CensusMode(metaclass=StringHolderEnum):
    TRAIN = "train"
    INFERENCE = "inference"


def count_params(model: PromptViT, mode: str = CensusMode.TRAIN) -> dict[str, int]:
    """
    Exact scalar counts per owner group. The inference census drops every task head; the downstream
    classifier (``head.cls``) stays.
    """
    census = model.params.census()
    if mode == CensusMode.TRAIN:
        return census
    if mode == CensusMode.INFERENCE:
        return {g: c for g, c in census.items() if g in BACKBONE_GROUPS or g == HEAD_CLS}
    raise ValueError(f"Unknown census mode {mode!r}")


def count_flops(model: PromptViT) -> int:
    """
    Multiply-accumulates of one inference pass, counted from shapes: patch embedding, prompt projection,
    per-block attention and feed-forward, and the classifier. Normalization and activations are not counted.
    """
    config = model.config
    d = config.embed_dim
    S = 1 + config.num_patches + model.backbone.num_prompts
    macs = config.num_patches * config.patch_dim * d
    prompts = model.backbone.prompts
    if prompts is not None and prompts.projection is not None:
        macs += prompts.count * prompts.projection.In * d
    per_block = (
        S * d * 3 * d  # q, k and v
        + 2 * S * S * d  # scores and weighted sum, over all heads
        + S * d * d  # output projection
        + 2 * S * d * d * config.mlp_ratio  # feed-forward
    )
    macs += config.layers * per_block
    macs += d * config.downstream_classes
    return macs


@dataclasses.dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class_accuracy: dict[int, float]
    train_params: dict[str, int]
    inference_params: dict[str, int]
    count: int

    @property
    def train_param_total(self) -> int:
        return sum(self.train_params.values())

    @property
    def inference_param_total(self) -> int:
        return sum(self.inference_params.values())

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": {str(k): v for k, v in self.per_class_accuracy.items()},
            "train_params": self.train_params,
            "inference_params": self.inference_params,
            "train_param_total": self.train_param_total,
            "inference_param_total": self.inference_param_total,
            "count": self.count,
        }


def predict_classes(model: PromptViT, samples: Sequence[VideoSample]) -> np.ndarray:
    """Top-1 downstream predictions. Only the CLS path runs; task heads are never invoked."""
    with no_grad():
        return np.array([int(np.argmax(model.predict_logits(s.pixels).value)) for s in samples], dtype=np.int64)


def evaluate(model: PromptViT, dataset: Sequence[VideoSample]) -> EvalReport:
    labels = []
    for s in dataset:
        if s.action is None:
            raise ValueError(f"Evaluation needs action labels; sample {s.seed} has none")
        labels.append(s.action)
    if not labels:
        raise ValueError("Cannot evaluate on an empty dataset")
    y = np.asarray(labels, dtype=np.int64)
    pred = predict_classes(model, dataset)
    per_class = {int(c): float(np.mean(pred[y == c] == c)) for c in np.unique(y)}
    report = EvalReport(
        accuracy=float(np.mean(pred == y)),
        per_class_accuracy=per_class,
        train_params=count_params(model, CensusMode.TRAIN),
        inference_params=count_params(model, CensusMode.INFERENCE),
        count=len(y),
    )
    logger.debug("Evaluated %d samples: accuracy %.4f", report.count, report.accuracy)
    return report


__all__ = ["CensusMode", "count_params", "count_flops", "EvalReport", "evaluate", "predict_classes"]
