# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import logging
from typing import Callable, Sequence

import jax
import numpy as np
from jaxtyping import PRNGKeyArray

from .core import Tensor, backward, new_graph, no_grad


logger = logging.getLogger(__name__)


def finite_diff_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-4,
    *,
    coords_per_tensor: int | None = None,
    key: PRNGKeyArray | None = None,
) -> float:
    """
    Compares reverse-mode gradients of ``f`` against central differences ``(f(θ+h) − f(θ−h)) / 2h``.

    Args:
        f: deterministic closure from the parameter list to a single-element loss
        params: the tensors to check. Their values are perturbed in place and restored.
        step: the finite-difference step h
        coords_per_tensor: if set, only this many coordinates per tensor are checked, sampled with ``key``
        key: PRNG key for coordinate sampling

    Returns:
        the worst relative error ``|a − n| / max(|a|, |n|, 1e-8)`` over all checked coordinates
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if coords_per_tensor is not None and key is None:
        raise ValueError("coords_per_tensor needs a key")

    for p in params:
        p.zero_grad()
    with new_graph():
        loss = f(params)
        if loss.requires_grad:
            backward(loss, wrt=params)
    analytic = [p.grad.reshape(-1).copy() if p.grad is not None else np.zeros(p.size) for p in params]

    if coords_per_tensor is not None:
        keys = jax.random.split(key, len(params))  # type: ignore

    def _eval() -> float:
        return f(params).item()

    worst = 0.0
    with no_grad():
        for i, (p, grad) in enumerate(zip(params, analytic)):
            flat = p.value.reshape(-1)
            if coords_per_tensor is None or coords_per_tensor >= flat.size:
                coords = np.arange(flat.size)
            else:
                coords = np.asarray(jax.random.permutation(keys[i], flat.size))[:coords_per_tensor]

            for c in coords:
                original = flat[c]
                flat[c] = original + step
                f_plus = _eval()
                flat[c] = original - step
                f_minus = _eval()
                flat[c] = original

                numeric = (f_plus - f_minus) / (2 * step)
                a = grad[c]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                if err > worst:
                    logger.debug("tensor %d coord %d: analytic=%r numeric=%r err=%r", i, int(c), a, numeric, err)
                    worst = err

    return worst


__all__ = ["finite_diff_check"]
