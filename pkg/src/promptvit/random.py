# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""Parameter initialization from jax.random keys. Draws are made in float32 and widened to float64."""

from typing import Sequence

import jax.random as jrandom
import numpy as np

from .core import Tensor


def normal(key, shape: Sequence[int], std: float = 1.0, *, requires_grad: bool = True) -> Tensor:
    draw = np.asarray(jrandom.normal(key, tuple(shape)), dtype=np.float64)
    return Tensor(draw * std, requires_grad=requires_grad)


def zeros(shape: Sequence[int], *, requires_grad: bool = True) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Sequence[int], *, requires_grad: bool = True) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)


def full(shape: Sequence[int], value: float, *, requires_grad: bool = True) -> Tensor:
    return Tensor(np.full(tuple(shape), float(value)), requires_grad=requires_grad)


__all__ = ["normal", "zeros", "ones", "full"]
