# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""Adam with decoupled weight decay and the half-period cosine schedule."""

import dataclasses
import math
from typing import Collection, Mapping, Sequence

import numpy as np

from .core import ShapeMismatch, Tensor


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """``base_lr · 0.5 · (1 + cos(π · step / total_steps))``."""
    if total_steps < 0 or not 0 <= step <= max(total_steps, 0):
        raise ValueError(f"step must lie in [0, {total_steps}], got {step}")
    if total_steps == 0:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclasses.dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4


@dataclasses.dataclass(frozen=True, eq=False)
class AdamState:
    """First and second moments by parameter name, and the number of updates applied so far."""

    step: int
    mu: dict[str, np.ndarray]
    nu: dict[str, np.ndarray]

    @staticmethod
    def init(params: Sequence[tuple[str, Tensor]]) -> "AdamState":
        return AdamState(
            0,
            {name: np.zeros(t.shape) for name, t in params},
            {name: np.zeros(t.shape) for name, t in params},
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {f"mu.{k}": v for k, v in self.mu.items()}
        out.update({f"nu.{k}": v for k, v in self.nu.items()})
        return out

    @staticmethod
    def from_state_dict(step: int, state_dict: Mapping[str, np.ndarray]) -> "AdamState":
        mu = {k.removeprefix("mu."): np.asarray(v) for k, v in state_dict.items() if k.startswith("mu.")}
        nu = {k.removeprefix("nu."): np.asarray(v) for k, v in state_dict.items() if k.startswith("nu.")}
        return AdamState(step, mu, nu)


def adam_step(
    params: Sequence[tuple[str, Tensor]],
    grads: Mapping[Tensor, np.ndarray],
    state: AdamState,
    lr: float,
    config: AdamConfig = AdamConfig(),
    *,
    frozen: Collection[str] = (),
) -> AdamState:
    """
    One bias-corrected Adam update with decoupled weight decay:
    ``p ← p − lr · (m̂ / (√v̂ + eps) + weight_decay · p)``.

    Parameter values are replaced in place; moments are returned as a new state. Parameters named in ``frozen``
    are skipped entirely (value and moments untouched). A parameter missing from ``grads`` is treated as having
    a zero gradient.
    """
    step = state.step + 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1**step
    correction2 = 1.0 - b2**step
    mu = dict(state.mu)
    nu = dict(state.nu)
    for name, p in params:
        if name in frozen:
            continue
        g = grads.get(p)
        g = np.zeros(p.shape) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"Gradient of {name} has shape {g.shape}, parameter has {p.shape}")
        m = b1 * state.mu.get(name, np.zeros(p.shape)) + (1.0 - b1) * g
        v = b2 * state.nu.get(name, np.zeros(p.shape)) + (1.0 - b2) * g * g
        update = (m / correction1) / (np.sqrt(v / correction2) + config.eps) + config.weight_decay * p.value
        p.value = p.value - lr * update
        mu[name] = m
        nu[name] = v
    return AdamState(step, mu, nu)
