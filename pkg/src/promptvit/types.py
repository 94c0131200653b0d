# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


from typing import TypeAlias

import numpy as np

from .util import StringHolderEnum


Scalar = float | int | np.floating | np.integer
Shape: TypeAlias = tuple[int, ...]


class Task(metaclass=StringHolderEnum):
    """Names of the supervised objectives. ``DT`` is the downstream (real-video) objective."""

    DT = "dt"
    DEPTH = "depth"
    NORMAL = "normal"
    SEGM = "segm"
    POSE = "pose"
    BOXES = "boxes"


# fixed task order: prompt assembly, loss reporting and metrics columns all follow it
SYNTHETIC_TASKS: tuple[str, ...] = (Task.DEPTH, Task.NORMAL, Task.SEGM, Task.POSE, Task.BOXES)
ALL_TASKS: tuple[str, ...] = (Task.DT, *SYNTHETIC_TASKS)
DENSE_TASKS: tuple[str, ...] = (Task.DEPTH, Task.NORMAL, Task.SEGM)
LOCALIZATION_TASKS: tuple[str, ...] = (Task.POSE, Task.BOXES)

SEGM_CLASSES = 4
BOX_SLOTS = 2
POSE_JOINTS = 25
ACTION_CLASSES = 8

DENSE_CHANNELS = {Task.DEPTH: 1, Task.NORMAL: 3, Task.SEGM: SEGM_CLASSES}
