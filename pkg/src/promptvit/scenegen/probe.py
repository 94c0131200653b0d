# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import logging
from typing import Sequence

import numpy as np

from .. import ops
from ..core import Tensor, backward, new_graph, tensor
from ..nn import cross_entropy_loss
from ..optim import AdamConfig, AdamState, adam_step
from ..types import ACTION_CLASSES, Task
from .sample import VideoSample


logger = logging.getLogger(__name__)


def probe_box_informativeness(
    samples: Sequence[VideoSample],
    *,
    steps: int = 300,
    lr: float = 0.1,
    num_classes: int = ACTION_CLASSES,
) -> float:
    """
    Fits a multinomial logistic probe from the standardized first-frame shape box (slot 0) to the action class
    and returns its training accuracy. No depth or pixels are used.

    Every sample must carry both the boxes annotation and an action class.
    """
    boxes, labels = [], []
    for s in samples:
        box = s.annotations.get(Task.BOXES)
        if box is None or s.action is None:
            raise ValueError(f"Probe samples need boxes and an action class (seed {s.seed})")
        boxes.append(np.asarray(box)[0])
        labels.append(s.action)
    if not boxes:
        raise ValueError("The probe needs at least one sample")
    x = np.stack(boxes)
    x = (x - x.mean(axis=0)) / (x.std(axis=0) + 1e-12)
    y = np.asarray(labels, dtype=np.int64)

    features = tensor(x)
    ones = tensor(np.ones((len(y), 1)))
    weight = Tensor(np.zeros((x.shape[1], num_classes)), requires_grad=True)
    bias = Tensor(np.zeros((1, num_classes)), requires_grad=True)
    params = [("weight", weight), ("bias", bias)]
    state = AdamState.init(params)
    no_decay = AdamConfig(weight_decay=0.0)
    for _ in range(steps):
        with new_graph():
            weight.zero_grad()
            bias.zero_grad()
            logits = ops.add(ops.matmul(features, weight), ops.matmul(ones, bias))
            loss = ops.mean(cross_entropy_loss(logits, y))
            grads = backward(loss, [weight, bias])
            state = adam_step(params, grads, state, lr, no_decay)

    logits = x @ weight.value + bias.value
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    logger.info("Box probe accuracy %.3f over %d samples", accuracy, len(y))
    return accuracy
