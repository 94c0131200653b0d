# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import math

import numpy as np
import pytest

from promptvit.core import ShapeMismatch, Tensor
from promptvit.optim import AdamConfig, AdamState, adam_step, cosine_lr


def test_cosine_endpoints():
    assert abs(cosine_lr(0, 100, 3e-4) - 3e-4) < 1e-12
    assert abs(cosine_lr(100, 100, 3e-4)) < 1e-12
    assert abs(cosine_lr(50, 100, 2.0) - 1.0) < 1e-12
    assert cosine_lr(0, 0, 0.1) == 0.1


def test_cosine_is_non_increasing():
    rates = [cosine_lr(s, 20, 1.0) for s in range(21)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_cosine_rejects_out_of_range_step():
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 1.0)
    with pytest.raises(ValueError):
        cosine_lr(-1, 10, 1.0)


def test_first_adam_step_moves_by_lr():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    params = [("p", p)]
    grads = {p: np.array([0.5, -4.0, 0.0])}
    state = adam_step(params, grads, AdamState.init(params), 0.1, AdamConfig(weight_decay=0.0))
    # bias-corrected moments reduce the first update to lr * g / (|g| + eps)
    assert np.allclose(p.value, [0.9, -1.9, 3.0], atol=1e-6)
    assert state.step == 1
    assert np.allclose(state.mu["p"], [0.05, -0.4, 0.0])


def test_adam_weight_decay_is_decoupled():
    p = Tensor(np.array([2.0]), requires_grad=True)
    adam_step([("p", p)], {}, AdamState.init([("p", p)]), 0.5, AdamConfig(weight_decay=0.1))
    assert math.isclose(p.value[0], 2.0 - 0.5 * 0.1 * 2.0)


def test_adam_skips_frozen():
    p = Tensor(np.ones(2), requires_grad=True)
    q = Tensor(np.ones(2), requires_grad=True)
    params = [("p", p), ("q", q)]
    before = p.value
    state = adam_step(params, {p: np.ones(2), q: np.ones(2)}, AdamState.init(params), 0.1, frozen={"p"})
    assert p.value is before
    assert np.array_equal(state.mu["p"], np.zeros(2))
    assert np.all(q.value < 1.0)


def test_adam_state_round_trip_and_shape_check():
    p = Tensor(np.ones((2, 2)), requires_grad=True)
    params = [("w", p)]
    state = adam_step(params, {p: np.ones((2, 2))}, AdamState.init(params), 0.01)
    restored = AdamState.from_state_dict(state.step, state.state_dict())
    assert restored.step == 1
    assert np.array_equal(restored.nu["w"], state.nu["w"])
    with pytest.raises(ShapeMismatch):
        adam_step(params, {p: np.ones(3)}, state, 0.01)
