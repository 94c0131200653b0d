# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import dataclasses

import jax.random as jrandom
import numpy as np
import pytest
from test_utils import tiny_backbone

from promptvit import ops
from promptvit.backbone import Backbone, BackboneConfig, TaskPrompts, TokenSequence, patchify
from promptvit.core import ShapeMismatch, backward, new_graph, tensor
from promptvit.types import SYNTHETIC_TASKS
from promptvit.util import InvalidConfig


def _video(config: BackboneConfig, seed: int = 0) -> np.ndarray:
    shape = (config.frames, config.channels, config.height, config.width)
    return np.random.default_rng(seed).uniform(size=shape)


def test_config_derived_sizes():
    config = BackboneConfig()
    assert config.num_patches == 4 * 4 * 4
    assert config.patch_dim == 3 * 8 * 8
    assert config.sequence_length == 1 + 64 + 5


@pytest.mark.parametrize(
    "overrides",
    [
        dict(height=30),
        dict(heads=3),
        dict(tap_layers=(2, 1)),
        dict(tap_layers=(9,)),
        dict(prompt_count=-1),
        dict(layers=0),
    ],
)
def test_config_rejects_invalid(overrides):
    with pytest.raises(InvalidConfig):
        BackboneConfig(**overrides)


def test_patchify_order_is_frame_then_row_major():
    config = tiny_backbone()
    video = np.arange(2 * 3 * 16 * 16, dtype=np.float64).reshape(2, 3, 16, 16)
    patches = patchify(video, config)
    assert patches.shape == (8, 3 * 8 * 8)
    assert np.array_equal(patches[0], video[0, :, 0:8, 0:8].reshape(-1))
    assert np.array_equal(patches[1], video[0, :, 0:8, 8:16].reshape(-1))
    assert np.array_equal(patches[2], video[0, :, 8:16, 0:8].reshape(-1))
    assert np.array_equal(patches[4], video[1, :, 0:8, 0:8].reshape(-1))


def test_patchify_rejects_wrong_shape():
    with pytest.raises(ShapeMismatch):
        patchify(np.zeros((2, 3, 16, 15)), tiny_backbone())


def test_token_sequence_layout():
    config = tiny_backbone()
    backbone = Backbone.init(config, key=jrandom.PRNGKey(0))
    tokens = backbone.assemble_tokens(backbone.patch_embed(_video(config)))
    assert len(tokens) == 1 + 8 + 5
    assert tokens.patch_range == range(1, 9)
    assert tokens.prompt_range == range(9, 14)
    assert np.array_equal(tokens.rows.value[0], backbone.cls_token.value[0])
    assert np.array_equal(tokens.rows.value[9:], backbone.prompts.values.value)


def test_token_sequence_without_prompts():
    config = tiny_backbone(prompt_count=0)
    backbone = Backbone.init(config, key=jrandom.PRNGKey(0))
    assert backbone.prompts is None
    tokens = backbone.assemble_tokens(backbone.patch_embed(_video(config)))
    assert len(tokens) == 1 + 8
    outputs = backbone(_video(config))
    assert outputs.f_prompts is None


def test_token_sequence_checks_rows():
    with pytest.raises(ShapeMismatch):
        TokenSequence(tensor(np.zeros((5, 4))), 2, 3)


def test_forward_outputs_shapes():
    config = tiny_backbone()
    outputs = Backbone.init(config, key=jrandom.PRNGKey(0))(_video(config))
    assert outputs.f_cls.shape == (1, 8)
    assert outputs.f_prompts.shape == (5, 8)
    assert outputs.f_patch_final.shape == (8, 8)
    assert sorted(outputs.tapped_patches) == [1, 2]
    assert all(t.shape == (8, 8) for t in outputs.tapped_patches.values())


def test_forward_is_deterministic():
    config = tiny_backbone()
    backbone = Backbone.init(config, key=jrandom.PRNGKey(0))
    a = backbone(_video(config)).f_cls.value
    b = backbone(_video(config)).f_cls.value
    assert np.array_equal(a, b)


def test_prompt_routing_order():
    prompts = TaskPrompts.init(5, 4, SYNTHETIC_TASKS, key=jrandom.PRNGKey(0))
    assert prompts.order == (0, 1, 2, 3, 4)
    assert prompts.position_of("segm") == 2

    swapped = prompts.swap("depth", "pose")
    assert swapped.slot_of("depth") == 3
    assert swapped.slot_of("pose") == 0
    assert swapped.order == (3, 1, 2, 0, 4)
    assert np.array_equal(swapped.rows().value, prompts.rows().value)


def test_unrouted_prompts_follow_routed_ones():
    prompts = TaskPrompts.init(4, 4, ("normal", "boxes"), key=jrandom.PRNGKey(0))
    assert prompts.order == (0, 1, 2, 3)
    swapped = prompts.swap("normal", "boxes")
    assert swapped.order == (1, 0, 2, 3)


def test_too_few_prompts_for_tasks():
    with pytest.raises(InvalidConfig):
        TaskPrompts.init(2, 4, SYNTHETIC_TASKS, key=jrandom.PRNGKey(0))


def test_shared_prompt_with_projection():
    prompts = TaskPrompts.init(1, 8, SYNTHETIC_TASKS, key=jrandom.PRNGKey(0), prompt_dim=40, shared=True)
    assert prompts.values.shape == (1, 40)
    assert prompts.rows().shape == (1, 8)
    assert {prompts.position_of(t) for t in SYNTHETIC_TASKS} == {0}


def test_prompt_swap_leaves_outputs_identical():
    config = tiny_backbone()
    backbone = Backbone.init(config, key=jrandom.PRNGKey(0))
    swapped = dataclasses.replace(backbone, prompts=backbone.prompts.swap("normal", "boxes"))
    video = _video(config)
    a, b = backbone(video), swapped(video)
    assert np.array_equal(a.f_cls.value, b.f_cls.value)
    assert np.array_equal(a.f_prompts.value, b.f_prompts.value)


def test_frozen_backbone_only_prompts_get_gradients():
    config = tiny_backbone()
    backbone = Backbone.init(config, key=jrandom.PRNGKey(0))
    with new_graph():
        outputs = backbone(_video(config), freeze_backbone=True)
        direction = tensor(np.random.default_rng(1).normal(size=(5, 8)))
        loss = ops.sum(ops.mul(outputs.f_prompts, direction))
        wrt = [
            backbone.cls_token,
            backbone.embed.projection,
            backbone.blocks[0].attn.k.weight,
            backbone.prompts.values,
        ]
        grads = backward(loss, wrt=wrt)
    for t in wrt[:-1]:
        assert np.array_equal(grads[t], np.zeros(t.shape))
    assert np.any(grads[backbone.prompts.values] != 0)


def test_cls_output_depends_on_prompts():
    config = tiny_backbone()
    backbone = Backbone.init(config, key=jrandom.PRNGKey(0))
    with new_graph():
        outputs = backbone(_video(config))
        direction = tensor(np.random.default_rng(1).normal(size=(1, 8)))
        grads = backward(ops.sum(ops.mul(outputs.f_cls, direction)), wrt=[backbone.prompts.values])
    assert np.any(grads[backbone.prompts.values] != 0)
