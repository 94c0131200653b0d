# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Splits of generated videos. A [promptvit.scenegen.GeneratedDataset][] renders samples on demand from their seeds;
a [promptvit.scenegen.StoredDataset][] holds materialized samples (e.g. loaded from disk). Both are sequences of
[promptvit.scenegen.VideoSample][].
"""

import dataclasses
import functools
import json
import logging
import math
from typing import Mapping, Sequence

import numpy as np

from .._src.state_dict import load_metadata, load_state_dict, save_state_dict
from ..types import SYNTHETIC_TASKS, Task
from ..util import InvalidConfig
from .sample import PRNG_ID, AnnotationSet, Origin, VideoSample, generate_sample
from .scene import SceneConfig


logger = logging.getLogger(__name__)

DATASET_MAGIC = "PVITDATA"
DATASET_VERSION = 1

# each synthetic sample keeps one of these annotation profiles
DEFAULT_TASK_POOL: tuple[tuple[str, ...], ...] = (
    (Task.DEPTH, Task.NORMAL, Task.SEGM),
    (Task.POSE, Task.BOXES),
    (Task.SEGM, Task.BOXES),
    SYNTHETIC_TASKS,
)


@dataclasses.dataclass(frozen=True)
class DataConfig:
    real_train: int = 1000
    real_val: int = 200
    synthetic: int = 3000
    task_pool: tuple[tuple[str, ...], ...] = DEFAULT_TASK_POOL
    # annotations real samples carry besides the action class
    real_tasks: tuple[str, ...] = ()
    # seeded prefix of the synthetic split that is kept
    synthetic_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "task_pool", tuple(tuple(p) for p in self.task_pool))
        object.__setattr__(self, "real_tasks", tuple(self.real_tasks))
        if self.real_train < 1 or self.real_val < 1 or self.synthetic < 0:
            raise InvalidConfig("real_train and real_val must be >= 1 and synthetic >= 0")
        if not self.task_pool or any(not profile for profile in self.task_pool):
            raise InvalidConfig("task_pool needs at least one nonempty profile")
        for profile in (*self.task_pool, self.real_tasks):
            unknown = set(profile) - set(SYNTHETIC_TASKS)
            if unknown:
                raise InvalidConfig(f"Unknown synthetic tasks {sorted(unknown)}")
        if not 0 < self.synthetic_fraction <= 1:
            raise InvalidConfig(f"synthetic_fraction must lie in (0, 1], got {self.synthetic_fraction}")

    @property
    def pool_tasks(self) -> tuple[str, ...]:
        """Every task some profile of the pool supervises, in task order."""
        used = {t for profile in self.task_pool for t in profile}
        return tuple(t for t in SYNTHETIC_TASKS if t in used)

    @property
    def kept_synthetic(self) -> int:
        if self.synthetic == 0:
            return 0
        return max(1, math.floor(self.synthetic * self.synthetic_fraction))


_SPLIT_IDS = {"train": 0, "val": 1, "synthetic": 2}


def split_seeds(base_seed: int, split: str, count: int) -> tuple[int, ...]:
    """64-bit per-sample seeds, derived from (base seed, split, index)."""
    split_id = _SPLIT_IDS[split]
    return tuple(
        int(np.random.SeedSequence([base_seed, split_id, i]).generate_state(1, np.uint64)[0]) for i in range(count)
    )


@functools.lru_cache(maxsize=512)
def _cached_sample(seed: int, origin: str, task_mask: frozenset[str], config: SceneConfig) -> VideoSample:
    return generate_sample(seed, origin, task_mask, config)


@dataclasses.dataclass(frozen=True)
class GeneratedDataset(Sequence[VideoSample]):
    seeds: tuple[int, ...]
    origin: str
    task_mask: tuple[str, ...]
    scene: SceneConfig

    def __len__(self):
        return len(self.seeds)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return dataclasses.replace(self, seeds=self.seeds[i])
        return _cached_sample(self.seeds[i], self.origin, frozenset(self.task_mask), self.scene)

    def carried_tasks(self, i: int) -> tuple[str, ...]:
        tasks = tuple(t for t in SYNTHETIC_TASKS if t in self.task_mask)
        return (Task.DT, *tasks) if self.origin == Origin.REAL else tasks


@dataclasses.dataclass(frozen=True)
class StoredDataset(Sequence[VideoSample]):
    samples: tuple[VideoSample, ...]

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return StoredDataset(self.samples[i])
        return self.samples[i]

    def carried_tasks(self, i: int) -> tuple[str, ...]:
        return self.samples[i].annotations.tasks


@dataclasses.dataclass(frozen=True)
class ShuffledDataset(Sequence[VideoSample]):
    """
    A view of ``base`` in which sample i takes its annotation of task t from sample ``sources[t][i]``.
    Pixels are untouched.
    """

    base: Sequence[VideoSample]
    sources: Mapping[str, np.ndarray]

    def __len__(self):
        return len(self.base)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return StoredDataset(tuple(self[j] for j in range(len(self))[i]))
        sample = self.base[i]
        annotations = sample.annotations
        for task, source in self.sources.items():
            j = int(source[i])
            if j != i:
                annotations = annotations.replace(task, self.base[j].annotations.get(task))
        return dataclasses.replace(sample, annotations=annotations)

    def carried_tasks(self, i: int) -> tuple[str, ...]:
        return carried_tasks(self.base, i)


def carried_tasks(dataset: Sequence[VideoSample], i: int) -> tuple[str, ...]:
    """Tasks sample i is annotated with, without rendering it when the dataset can tell."""
    carried = getattr(dataset, "carried_tasks", None)
    if carried is not None:
        return carried(i)
    return dataset[i].annotations.tasks


def shuffle_annotations(dataset: Sequence[VideoSample], seed: int) -> ShuffledDataset:
    """
    For each synthetic task independently, permutes that task's annotations across the samples carrying it.
    Every task keeps its multiset of annotation values; the action class is left alone.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(dataset)
    tasks_of = [set(carried_tasks(dataset, i)) for i in range(n)]
    sources: dict[str, np.ndarray] = {}
    for task in SYNTHETIC_TASKS:
        carriers = np.array([i for i in range(n) if task in tasks_of[i]], dtype=np.int64)
        source = np.arange(n)
        if carriers.size > 1:
            source[carriers] = carriers[rng.permutation(carriers.size)]
        sources[task] = source
    return ShuffledDataset(dataset, sources)


@dataclasses.dataclass(frozen=True)
class Corpus:
    train: Sequence[VideoSample]
    val: Sequence[VideoSample]
    synthetic: Sequence[VideoSample]
    config: DataConfig

    def splits(self) -> dict[str, Sequence[VideoSample]]:
        return {"train": self.train, "val": self.val, "synthetic": self.synthetic}


def build_corpus(config: DataConfig, scene: SceneConfig = SceneConfig()) -> Corpus:
    """
    The seeded real-train, real-val and synthetic splits. Synthetic samples carry every synthetic annotation;
    the trainer withholds all but one task-pool profile per use.
    """
    synthetic_seeds = split_seeds(config.seed, "synthetic", config.synthetic)[: config.kept_synthetic]
    corpus = Corpus(
        GeneratedDataset(split_seeds(config.seed, "train", config.real_train), Origin.REAL, config.real_tasks, scene),
        GeneratedDataset(split_seeds(config.seed, "val", config.real_val), Origin.REAL, config.real_tasks, scene),
        GeneratedDataset(synthetic_seeds, Origin.SYNTHETIC, SYNTHETIC_TASKS, scene),
        config,
    )
    logger.info(
        "Corpus: %d real train, %d real val, %d synthetic", len(corpus.train), len(corpus.val), len(corpus.synthetic)
    )
    return corpus


def save_dataset(dataset: Sequence[VideoSample], path, *, config_digest: str | None = None):
    """
    Writes a split as safetensors: one float64 entry per present field (``"{i}.pixels"``, ``"{i}.depth"``, ...)
    and a header of magic, version, config digest, PRNG id, count and per-sample tags.
    """
    tensors: dict[str, np.ndarray] = {}
    tags = []
    for i, sample in enumerate(dataset):
        tensors[f"{i}.pixels"] = np.asarray(sample.pixels, dtype=np.float64)
        tasks = []
        for task in SYNTHETIC_TASKS:
            value = sample.annotations.get(task)
            if value is not None:
                tensors[f"{i}.{task}"] = np.asarray(value, dtype=np.float64)
                tasks.append(task)
        tags.append({"seed": str(sample.seed), "origin": sample.origin, "tasks": tasks, "action": sample.action})
    header = {
        "magic": DATASET_MAGIC,
        "version": DATASET_VERSION,
        "config_digest": config_digest or "",
        "prng": PRNG_ID,
        "count": len(tags),
    }
    save_state_dict(tensors, path, metadata={"header": header, "samples": tags})
    logger.info("Wrote %d samples to %s", len(tags), path)


def load_dataset(path) -> StoredDataset:
    metadata = load_metadata(path)
    try:
        header = json.loads(metadata["header"])
        tags = json.loads(metadata["samples"])
    except (KeyError, json.JSONDecodeError) as e:
        raise ValueError(f"{path} is not a dataset file") from e
    if header.get("magic") != DATASET_MAGIC:
        raise ValueError(f"{path} has magic {header.get('magic')!r}, expected {DATASET_MAGIC!r}")
    if header.get("version") != DATASET_VERSION:
        raise ValueError(f"Unsupported dataset version {header.get('version')}")
    tensors = load_state_dict(path)
    samples = []
    for i, tag in enumerate(tags):
        fields: dict = {}
        for task in tag["tasks"]:
            value = tensors[f"{i}.{task}"]
            fields[task] = value.astype(np.int64) if task == Task.SEGM else value
        annotations = AnnotationSet(**fields, action=tag["action"])
        samples.append(VideoSample(tensors[f"{i}.pixels"], annotations, tag["origin"], int(tag["seed"])))
    if len(samples) != header["count"]:
        raise ValueError(f"{path} declares {header['count']} samples but holds {len(samples)}")
    return StoredDataset(tuple(samples))


def dataset_header(path) -> dict:
    return json.loads(load_metadata(path)["header"])


__all__ = [
    "DATASET_MAGIC",
    "DEFAULT_TASK_POOL",
    "DataConfig",
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
]
