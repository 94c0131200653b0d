# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""Deterministic procedural videos with exact depth, normal, segmentation, box and pose labels."""

from .dataset import (
    DATASET_MAGIC,
    DEFAULT_TASK_POOL,
    Corpus,
    DataConfig,
    GeneratedDataset,
    ShuffledDataset,
    StoredDataset,
    build_corpus,
    carried_tasks,
    dataset_header,
    load_dataset,
    save_dataset,
    shuffle_annotations,
    split_seeds,
)
from .probe import probe_box_informativeness
from .sample import PRNG_ID, AnnotationSet, InvalidMask, Origin, VideoSample, downsample_gt, generate_sample
from .scene import SceneConfig, ScenePlan, figure_joints, sample_plan


__all__ = [
    "AnnotationSet",
    "VideoSample",
    "Origin",
    "InvalidMask",
    "PRNG_ID",
    "generate_sample",
    "downsample_gt",
    "SceneConfig",
    "ScenePlan",
    "sample_plan",
    "figure_joints",
    "DataConfig",
    "DEFAULT_TASK_POOL",
    "DATASET_MAGIC",
    "GeneratedDataset",
    "StoredDataset",
    "ShuffledDataset",
    "Corpus",
    "build_corpus",
    "carried_tasks",
    "shuffle_annotations",
    "split_seeds",
    "save_dataset",
    "load_dataset",
    "dataset_header",
    "probe_box_informativeness",
]
