# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import equinox as eqx
from jax.random import PRNGKey

from .. import ops
from .. import random as prandom
from ..core import ShapeMismatch, Tensor


class Linear(eqx.Module):
    """An affine map on rows: ``x [S, In] -> x @ weight + bias``, with ``weight`` stored as [In, Out]."""

    weight: Tensor
    bias: Tensor | None

    In: int = eqx.field(static=True)
    Out: int = eqx.field(static=True)

    @staticmethod
    def init(In: int, Out: int, *, key: PRNGKey, use_bias: bool = True, init_std: float = 0.02) -> "Linear":
        """
        Args:
            In: input width
            Out: output width
            key: PRNGKey: The PRNG key to use for initialization
            use_bias: bool: Whether to use a bias term. Biases start at zero.
            init_std: float: standard deviation of the normal weight init
        """
        weight = prandom.normal(key, (In, Out), init_std)
        bias = prandom.zeros((Out,)) if use_bias else None
        return Linear(weight, bias, In, Out)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.In:
            raise ShapeMismatch(f"Linear expects [S, {self.In}], got {x.shape}")
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.add(out, ops.repeat_rows(self.bias, x.shape[0]))
        return out
