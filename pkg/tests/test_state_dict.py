# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import jax.random as jrandom
import numpy as np
import pytest

from promptvit.backbone import TaskPrompts
from promptvit.nn import MLP, Linear
from promptvit.state_dict import (
    from_state_dict,
    load_metadata,
    load_state_dict,
    named_tensors,
    save_state_dict,
    to_state_dict,
)


def test_names_follow_torch_conventions():
    mlp = MLP.init(3, 2, 4, 1, key=jrandom.PRNGKey(0))
    names = [name for name, _ in named_tensors(mlp)]
    assert names == ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]
    prefixed = [name for name, _ in named_tensors(mlp, prefix="mlp")]
    assert prefixed[0] == "mlp.layers.0.weight"


def test_none_fields_have_no_entries():
    prompts = TaskPrompts.init(2, 4, ("depth",), key=jrandom.PRNGKey(0))
    assert [name for name, _ in named_tensors(prompts)] == ["values"]


def test_to_state_dict_copies_values():
    layer = Linear.init(2, 2, key=jrandom.PRNGKey(0))
    sd = to_state_dict(layer)
    sd["weight"][0, 0] = 100.0
    assert layer.weight.value[0, 0] != 100.0


def test_from_state_dict_restores_and_keeps_flags():
    layer = Linear.init(2, 3, key=jrandom.PRNGKey(0))
    other = Linear.init(2, 3, key=jrandom.PRNGKey(1))
    restored = from_state_dict(other, to_state_dict(layer))
    assert np.array_equal(restored.weight.value, layer.weight.value)
    assert restored.weight.requires_grad
    assert restored.weight is not layer.weight


def test_from_state_dict_missing_key():
    layer = Linear.init(2, 3, key=jrandom.PRNGKey(0))
    with pytest.raises(ValueError):
        from_state_dict(layer, {"weight": layer.weight.value})


def test_save_load_with_metadata(tmp_path):
    layer = Linear.init(2, 3, key=jrandom.PRNGKey(0))
    path = tmp_path / "layer.safetensors"
    save_state_dict(to_state_dict(layer, prefix="model"), path, metadata={"header": {"step": 3}, "note": "x"})
    loaded = load_state_dict(path)
    assert set(loaded) == {"model.weight", "model.bias"}
    assert loaded["model.weight"].dtype == np.float64
    assert np.array_equal(loaded["model.weight"], layer.weight.value)
    metadata = load_metadata(path)
    assert metadata["header"] == '{"step": 3}'
    assert metadata["note"] == "x"
