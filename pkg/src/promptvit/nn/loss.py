# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import numpy as np
from jaxtyping import Int

from .. import ops
from ..core import ShapeMismatch, Tensor


def one_hot(targets: Int[np.ndarray, "R"], num_classes: int) -> Tensor:  # noqa: F821
    """Constant [R, num_classes] indicator rows. ``targets`` must lie in ``[0, num_classes)``."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.size and (targets.min() < 0 or targets.max() >= num_classes):
        raise ValueError(f"targets must lie in [0, {num_classes}), got range [{targets.min()}, {targets.max()}]")
    out = np.zeros((targets.size, num_classes))
    out[np.arange(targets.size), targets] = 1.0
    return Tensor(out)


def cross_entropy_loss(logits: Tensor, targets: Int[np.ndarray, "R"]) -> Tensor:  # noqa: F821
    """
    Per-row softmax cross-entropy.

    Args:
        logits: [R, C] unnormalized scores
        targets: R class indices

    Returns:
        [R] losses
    """
    if logits.ndim != 2:
        raise ShapeMismatch(f"cross_entropy_loss expects [R, C] logits, got {logits.shape}")
    targets = np.asarray(targets).reshape(-1)
    if targets.size != logits.shape[0]:
        raise ShapeMismatch(f"{targets.size} targets for {logits.shape[0]} rows")
    picked = ops.mul(ops.log_softmax(logits, axis=1), one_hot(targets, logits.shape[1]))
    return ops.neg(ops.sum(picked, axis=1))
