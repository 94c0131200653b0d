# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import math

import equinox as eqx
import jax
from jax.random import PRNGKey

from .. import ops
from ..core import ShapeMismatch, Tensor
from .linear import Linear


# Full (unmasked) attention: every query row attends to every key row. Token roles (CLS, patch, prompt) make no
# difference here; whatever distinguishes them lives in the embeddings.


def dot_product_attention_weights(query: Tensor, key: Tensor, scaling_factor: float | None = None) -> Tensor:
    """
    Computes the attention weights softmax(q kᵀ · scale) row-wise.

    :param query: Tensor of shape (QPos, KeySize)
    :param key: Tensor of shape (KPos, KeySize)
    :param scaling_factor: Optional float as scaling factor for attention score. Default to 1/sqrt(KeySize)
    :return: Tensor of shape (QPos, KPos); every row sums to one
    """
    if query.ndim != 2 or key.ndim != 2 or query.shape[1] != key.shape[1]:
        raise ShapeMismatch(f"query {query.shape} and key {key.shape} must be [Pos, KeySize] with equal KeySize")
    if scaling_factor is None:
        scaling_factor = 1.0 / math.sqrt(query.shape[1])
    scores = ops.scale(ops.matmul(query, ops.transpose(key)), scaling_factor)
    return ops.softmax(scores, axis=1)


def dot_product_attention(
    query: Tensor, key: Tensor, value: Tensor, scaling_factor: float | None = None
) -> Tensor:
    """
    :param query: Tensor of shape (QPos, KeySize)
    :param key: Tensor of shape (KPos, KeySize)
    :param value: Tensor of shape (KPos, ValueSize)
    :return: Tensor of shape (QPos, ValueSize)
    """
    weights = dot_product_attention_weights(query, key, scaling_factor)
    return ops.matmul(weights, value)


class MultiHeadAttention(eqx.Module):
    """
    Multi-head self-attention over a [S, d] token matrix. Head h uses columns ``[h*dh, (h+1)*dh)`` of q, k and v.

    The key projection has no bias; softmax over keys would cancel it.
    """

    q: Linear
    k: Linear
    v: Linear
    proj: Linear
    num_heads: int = eqx.field(static=True)

    @staticmethod
    def init(embed_dim: int, num_heads: int, *, key: PRNGKey, init_std: float = 0.02) -> "MultiHeadAttention":
        if embed_dim % num_heads != 0:
            raise ValueError(f"embed_dim {embed_dim} is not divisible by num_heads {num_heads}")
        k_q, k_k, k_v, k_proj = jax.random.split(key, 4)
        q = Linear.init(embed_dim, embed_dim, key=k_q, init_std=init_std)
        k = Linear.init(embed_dim, embed_dim, key=k_k, use_bias=False, init_std=init_std)
        v = Linear.init(embed_dim, embed_dim, key=k_v, init_std=init_std)
        proj = Linear.init(embed_dim, embed_dim, key=k_proj, init_std=init_std)
        return MultiHeadAttention(q, k, v, proj, num_heads)

    @property
    def embed_dim(self) -> int:
        return self.proj.Out

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    def attention_weights(self, x: Tensor) -> list[Tensor]:
        """The [S, S] weight matrix of every head."""
        q, k = self.q(x), self.k(x)
        dh = self.head_dim
        return [
            dot_product_attention_weights(
                ops.slice_axis(q, 1, h * dh, (h + 1) * dh), ops.slice_axis(k, 1, h * dh, (h + 1) * dh)
            )
            for h in range(self.num_heads)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        q, k, v = self.q(x), self.k(x), self.v(x)
        dh = self.head_dim
        heads = []
        for h in range(self.num_heads):
            cols = (h * dh, (h + 1) * dh)
            heads.append(
                dot_product_attention(
                    ops.slice_axis(q, 1, *cols), ops.slice_axis(k, 1, *cols), ops.slice_axis(v, 1, *cols)
                )
            )
        return self.proj(ops.concat(heads, axis=1))
