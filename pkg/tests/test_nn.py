# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import math

import jax.random as jrandom
import numpy as np
import pytest

import promptvit.nn as pnn
from promptvit import ops
from promptvit.core import ShapeMismatch, backward, new_graph, tensor


def test_linear_shapes_and_init():
    layer = pnn.Linear.init(3, 5, key=jrandom.PRNGKey(0))
    assert layer.weight.shape == (3, 5)
    assert np.array_equal(layer.bias.value, np.zeros(5))
    out = layer(tensor(np.ones((2, 3))))
    assert out.shape == (2, 5)
    assert np.allclose(out.value, np.ones((2, 3)) @ layer.weight.value)


def test_linear_without_bias():
    layer = pnn.Linear.init(3, 2, key=jrandom.PRNGKey(0), use_bias=False)
    assert layer.bias is None
    with pytest.raises(ShapeMismatch):
        layer(tensor(np.ones((2, 4))))


def test_linear_init_is_deterministic():
    a = pnn.Linear.init(4, 4, key=jrandom.PRNGKey(3))
    b = pnn.Linear.init(4, 4, key=jrandom.PRNGKey(3))
    assert np.array_equal(a.weight.value, b.weight.value)


def test_layer_norm_module():
    ln = pnn.LayerNorm.init(4)
    x = tensor([[1.0, 2.0, 3.0, 4.0]])
    out = ln(x).value
    assert abs(out.mean()) < 1e-12
    assert np.allclose(out.var(), 1.0, atol=1e-4)


def test_mlp_shapes():
    mlp = pnn.MLP.init(4, 3, 8, 1, "gelu", key=jrandom.PRNGKey(0))
    assert mlp.In == 4 and mlp.Out == 3
    assert len(mlp.layers) == 2
    assert mlp(tensor(np.ones((5, 4)))).shape == (5, 3)
    with pytest.raises(ValueError):
        pnn.MLP.init(4, 3, 8, 1, "swish", key=jrandom.PRNGKey(0))


def test_one_hot():
    actual = pnn.one_hot(np.array([0, 1, 2]), 3)
    assert np.array_equal(actual.value, np.eye(3))
    with pytest.raises(ValueError):
        pnn.one_hot(np.array([3]), 3)


def test_uniform_cross_entropy_is_log_c():
    logits = tensor(np.zeros((1, 8)))
    loss = pnn.cross_entropy_loss(logits, np.array([5]))
    assert abs(loss.item() - math.log(8)) < 1e-12


def test_cross_entropy_gradient_is_softmax_minus_one_hot():
    logits = tensor([[1.0, 2.0, 0.5]], requires_grad=True)
    with new_graph():
        grads = backward(ops.sum(pnn.cross_entropy_loss(logits, np.array([1]))))
    p = np.exp(logits.value) / np.exp(logits.value).sum()
    assert np.allclose(grads[logits], p - np.array([[0.0, 1.0, 0.0]]))
