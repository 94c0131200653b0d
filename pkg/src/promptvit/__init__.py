# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import promptvit.nn as nn
import promptvit.ops as ops
import promptvit.random as random
import promptvit.scenegen as scenegen
import promptvit.state_dict as state_dict
import promptvit.tree_util as tree_util
import promptvit.util as util

from .__about__ import __version__
from .backbone import Backbone, BackboneConfig, ForwardOutputs, patchify
from .config import RunConfig, config_digest, config_from_dict, config_to_dict, dump_config, load_config
from .core import (
    DisconnectedLoss,
    InvalidAxis,
    NotScalar,
    ShapeMismatch,
    Tensor,
    backward,
    new_graph,
    no_grad,
    stop_gradient,
    tensor,
)
from .evaluation import CensusMode, EvalReport, count_flops, count_params, evaluate, predict_classes
from .gradcheck import finite_diff_check
from .harness import AblationConfig, gradient_check, run_ablation, run_fraction_sweep, run_variant
from .heads import HeadSet, UnknownTask
from .losses import ClassOutOfRange, EmptyBatch, LossReport, LossWeights, giou, total_loss
from .model import PromptViT, TaskSource, strip_task_heads
from .optim import AdamConfig, AdamState, adam_step, cosine_lr
from .trainer import TrainConfig, TrainResult, train
from .types import ALL_TASKS, SYNTHETIC_TASKS, Task
from .util import InvalidConfig
from .variants import InvalidVariant, VariantKind, VariantSpec, build_variant


__all__ = [
    "__version__",
    "nn",
    "ops",
    "random",
    "scenegen",
    "state_dict",
    "tree_util",
    "util",
    "Tensor",
    "tensor",
    "backward",
    "new_graph",
    "no_grad",
    "stop_gradient",
    "ShapeMismatch",
    "InvalidAxis",
    "NotScalar",
    "DisconnectedLoss",
    "finite_diff_check",
    "Backbone",
    "BackboneConfig",
    "ForwardOutputs",
    "patchify",
    "HeadSet",
    "UnknownTask",
    "PromptViT",
    "TaskSource",
    "strip_task_heads",
    "Task",
    "ALL_TASKS",
    "SYNTHETIC_TASKS",
    "LossWeights",
    "LossReport",
    "ClassOutOfRange",
    "EmptyBatch",
    "giou",
    "total_loss",
    "AdamConfig",
    "AdamState",
    "adam_step",
    "cosine_lr",
    "TrainConfig",
    "TrainResult",
    "train",
    "CensusMode",
    "EvalReport",
    "count_flops",
    "count_params",
    "evaluate",
    "predict_classes",
    "VariantKind",
    "VariantSpec",
    "InvalidVariant",
    "build_variant",
    "AblationConfig",
    "gradient_check",
    "run_ablation",
    "run_fraction_sweep",
    "run_variant",
    "RunConfig",
    "InvalidConfig",
    "config_digest",
    "config_from_dict",
    "config_to_dict",
    "dump_config",
    "load_config",
]
