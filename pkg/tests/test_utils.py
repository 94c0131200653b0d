# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import dataclasses
import os
from typing import TypeVar

import pytest

from promptvit.backbone import BackboneConfig
from promptvit.config import RunConfig
from promptvit.scenegen import DataConfig
from promptvit.trainer import TrainConfig


T = TypeVar("T")


def tiny_backbone(**overrides) -> BackboneConfig:
    """Two frames of 16x16, a 2x2 patch grid per frame, width 8."""
    kwargs = dict(
        frames=2,
        height=16,
        width=16,
        patch_h=8,
        patch_w=8,
        embed_dim=8,
        layers=2,
        heads=2,
        prompt_count=5,
        tap_layers=(1, 2),
    )
    kwargs.update(overrides)
    return BackboneConfig(**kwargs)


def tiny_run(**sections) -> RunConfig:
    run = RunConfig(
        backbone=tiny_backbone(),
        data=DataConfig(real_train=4, real_val=4, synthetic=4),
        trainer=TrainConfig(batch_size=4, epochs=2),
    )
    return dataclasses.replace(run, **sections)


def skip_unless_env(var: str, reason: str | None = None):
    msg = f"set {var}=1 to run"
    if reason:
        msg += f": {reason}"
    return pytest.mark.skipif(os.environ.get(var) != "1", reason=msg)


def skip_if_no_ablation(f):
    return skip_unless_env("PROMPTVIT_RUN_ABLATION", "multi-minute training run")(f)
