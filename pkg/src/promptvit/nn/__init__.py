# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


from .activations import gelu
from .attention import MultiHeadAttention, dot_product_attention, dot_product_attention_weights
from .linear import Linear
from .loss import cross_entropy_loss, one_hot
from .mlp import MLP
from .normalization import LayerNorm


__all__ = [
    "Linear",
    "MLP",
    "LayerNorm",
    "MultiHeadAttention",
    "dot_product_attention",
    "dot_product_attention_weights",
    "cross_entropy_loss",
    "one_hot",
    "gelu",
]
