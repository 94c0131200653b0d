# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import jax.random as jrandom
import numpy as np

import promptvit.random as prandom


def test_normal_is_float64_and_seeded():
    a = prandom.normal(jrandom.PRNGKey(0), (3, 4), std=0.02)
    b = prandom.normal(jrandom.PRNGKey(0), (3, 4), std=0.02)
    assert a.value.dtype == np.float64
    assert a.requires_grad
    assert np.array_equal(a.value, b.value)
    assert np.abs(a.value).max() < 0.2


def test_constant_fills():
    assert np.array_equal(prandom.zeros((2,)).value, np.zeros(2))
    assert np.array_equal(prandom.ones((2,)).value, np.ones(2))
    filled = prandom.full((3,), 8.0, requires_grad=False)
    assert not filled.requires_grad
    assert np.array_equal(filled.value, np.full(3, 8.0))
