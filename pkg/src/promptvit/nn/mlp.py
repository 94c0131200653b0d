# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


from typing import Sequence

import equinox as eqx
import jax
from jax.random import PRNGKey

from ..core import Tensor
from .activations import ACTIVATIONS
from .linear import Linear


class MLP(eqx.Module):
    """
    A multilayer perceptron with a fixed hidden width. The activation is named by a static string
    (see ``ACTIVATIONS``) so the module stays a plain tree of tensors.
    """

    layers: Sequence[Linear]
    activation: str = eqx.field(static=True)

    @staticmethod
    def init(
        In: int,
        Out: int,
        width: int,
        depth: int,
        activation: str = "gelu",
        *,
        key: PRNGKey,
        use_bias: bool = True,
        init_std: float = 0.02,
    ) -> "MLP":
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation {activation!r}")
        keys = jax.random.split(key, depth + 1)
        dims = [In] + [width] * depth + [Out]
        layers = tuple(
            Linear.init(dims[i], dims[i + 1], key=keys[i], use_bias=use_bias, init_std=init_std)
            for i in range(depth + 1)
        )
        return MLP(layers=layers, activation=activation)

    @property
    def In(self) -> int:
        return self.layers[0].In

    @property
    def Out(self) -> int:
        return self.layers[-1].Out

    def __call__(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        for layer in self.layers[:-1]:
            x = act(layer(x))
        return self.layers[-1](x)
