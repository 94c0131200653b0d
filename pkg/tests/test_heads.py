# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import jax.random as jrandom
import numpy as np
import pytest
from test_utils import tiny_backbone

from promptvit.core import tensor
from promptvit.heads import BoxHead, HeadSet, UnknownTask
from promptvit.model import PromptViT, TaskSource, group_of, strip_task_heads
from promptvit.types import SYNTHETIC_TASKS


def _video(seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(size=(2, 3, 16, 16))


def test_head_output_shapes():
    model = PromptViT.init(tiny_backbone(), key=jrandom.PRNGKey(0))
    predictions = model(_video(), SYNTHETIC_TASKS)
    assert predictions["dt"].shape == (8,)
    assert predictions["depth"].shape == (2, 2, 2, 1)
    assert predictions["normal"].shape == (2, 2, 2, 3)
    assert predictions["segm"].shape == (2, 2, 2, 4)
    assert predictions["pose"].shape == (1, 75)
    assert predictions["boxes"].shape == (2, 4)


def test_box_head_orders_corners():
    config = tiny_backbone()
    head = BoxHead.init(config, key=jrandom.PRNGKey(0))
    for seed in range(5):
        boxes = head(tensor(np.random.default_rng(seed).normal(size=(1, 8)) * 50)).value
        assert np.all(boxes[:, 0] <= boxes[:, 2])
        assert np.all(boxes[:, 1] <= boxes[:, 3])
        assert np.all((boxes >= 0) & (boxes <= 1))


def test_unknown_task_head():
    config = tiny_backbone()
    heads = HeadSet.init(config, ("depth",), key=jrandom.PRNGKey(0))
    token = tensor(np.zeros((1, 8)))
    with pytest.raises(UnknownTask):
        heads.predict_localization("pose", token)
    with pytest.raises(UnknownTask):
        heads.predict_localization("depth", token)
    with pytest.raises(UnknownTask):
        HeadSet.init(config, ("flow",), key=jrandom.PRNGKey(0))


def test_task_heads_read_their_prompt_row():
    model = PromptViT.init(tiny_backbone(), key=jrandom.PRNGKey(0))
    outputs = model.forward(_video())
    for i, task in enumerate(SYNTHETIC_TASKS):
        assert np.array_equal(model.task_token(outputs, task).value, outputs.f_prompts.value[i : i + 1])


def test_multi_head_baseline_reads_cls():
    model = PromptViT.init(tiny_backbone(prompt_count=0), key=jrandom.PRNGKey(0), task_source=TaskSource.CLS)
    outputs = model.forward(_video())
    assert model.task_token(outputs, "pose") is outputs.f_cls
    assert model(_video(), ["pose"])["pose"].shape == (1, 75)


def test_missing_prompt_route():
    model = PromptViT.init(tiny_backbone(), key=jrandom.PRNGKey(0), tasks=("depth",))
    with pytest.raises(UnknownTask):
        model(_video(), ["pose"])


def test_stripped_model_gives_identical_logits():
    model = PromptViT.init(tiny_backbone(), key=jrandom.PRNGKey(0))
    stripped = strip_task_heads(model)
    assert stripped.tasks == ()
    assert model.tasks == SYNTHETIC_TASKS
    video = _video(3)
    assert np.array_equal(model.predict_logits(video).value, stripped.predict_logits(video).value)
    assert np.array_equal(model(video)["dt"].value, stripped.predict_logits(video).value)


def test_parameter_groups():
    model = PromptViT.init(tiny_backbone(), key=jrandom.PRNGKey(0))
    groups = list(model.params.groups())
    assert groups == [
        "embedder",
        "cls_token",
        "prompts",
        "blocks",
        "head.cls",
        "head.depth",
        "head.normal",
        "head.segm",
        "head.pose",
        "head.boxes",
    ]
    census = model.params.census()
    assert census["prompts"] == 5 * 8
    assert census["cls_token"] == 8
    assert census["head.cls"] == 8 * 8 + 8
    assert census["head.pose"] == 8 * 75 + 75
    assert sum(census.values()) == model.params.total()


def test_group_of():
    assert group_of("backbone.blocks.1.attn.k.weight") == "blocks"
    assert group_of("backbone.norm.weight") == "blocks"
    assert group_of("heads.tasks.segm.fusion.layers.0.bias") == "head.segm"
    with pytest.raises(ValueError):
        group_of("optimizer.mu")
