# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import equinox as eqx

from .. import ops
from .. import random as prandom
from ..core import Tensor


class LayerNorm(eqx.Module):
    """Normalizes each row over its last axis; ``weight`` starts at one and ``bias`` at zero."""

    weight: Tensor
    bias: Tensor
    axis_size: int = eqx.field(static=True)
    eps: float = eqx.field(default=1e-5, static=True)

    @staticmethod
    def init(axis_size: int, eps: float = 1e-5) -> "LayerNorm":
        return LayerNorm(prandom.ones((axis_size,)), prandom.zeros((axis_size,)), axis_size, eps)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)
