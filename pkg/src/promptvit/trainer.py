# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
The training loop: mixed real/synthetic batches, per-sample masked losses, Adam under a half-period cosine
schedule, per-epoch metrics and resumable checkpoints.
"""

import dataclasses
import json
import logging
import math
import os
from fractions import Fraction
from typing import TYPE_CHECKING, Sequence

import jax
import numpy as np

from .core import backward, new_graph
from .evaluation import evaluate
from .losses import LossReport, total_loss
from .model import BACKBONE_GROUPS, PromptViT, group_of
from .optim import AdamConfig, AdamState, adam_step, cosine_lr
from .scenegen import DEFAULT_TASK_POOL, Corpus, SceneConfig, VideoSample, build_corpus, shuffle_annotations
from .state_dict import from_state_dict, load_metadata, load_state_dict, save_state_dict, to_state_dict
from .types import ALL_TASKS, Task
from .util import InvalidConfig, digest_of, write_csv
from .variants import build_variant


if TYPE_CHECKING:
    from .config import RunConfig


logger = logging.getLogger(__name__)

MAX_SYNTH_RATIO = Fraction(3)
CHECKPOINT_MAGIC = "PVITCKPT"
CHECKPOINT_VERSION = 1


class ExhaustedStream(ValueError):
    pass


class CheckpointMismatch(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    # synthetic : real videos per batch
    synth_ratio: Fraction = Fraction(1)
    epochs: int = 6
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    seed: int = 0
    # checkpoint every this many steps; 0 writes only the final checkpoint
    checkpoint_every: int = 0

    def __post_init__(self):
        ratio = self.synth_ratio
        if not isinstance(ratio, Fraction):
            ratio = Fraction(str(ratio))
            object.__setattr__(self, "synth_ratio", ratio)
        if not 0 <= ratio <= MAX_SYNTH_RATIO:
            raise InvalidConfig(f"synth_ratio must lie in [0, {MAX_SYNTH_RATIO}], got {ratio}")
        if self.batch_size < 1 or self.epochs < 1 or self.checkpoint_every < 0:
            raise InvalidConfig("batch_size and epochs must be >= 1, checkpoint_every >= 0")
        if not self.base_lr > 0 or not self.eps > 0 or self.weight_decay < 0:
            raise InvalidConfig("base_lr and eps must be positive, weight_decay >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidConfig("Adam betas must lie in [0, 1)")

    @property
    def synthetic_per_batch(self) -> int:
        """``floor(batch_size · r / (1 + r))``."""
        r = self.synth_ratio
        return math.floor(self.batch_size * r / (1 + r))

    @property
    def real_per_batch(self) -> int:
        return self.batch_size - self.synthetic_per_batch

    def with_real_batch(self, real: int) -> "TrainConfig":
        """The largest batch whose real share is exactly ``real`` videos at this ratio."""
        if real < 1:
            raise InvalidConfig(f"A batch needs at least one real video, got {real}")
        batch_size = real
        while dataclasses.replace(self, batch_size=batch_size).real_per_batch < real:
            batch_size += 1
        while dataclasses.replace(self, batch_size=batch_size + 1).real_per_batch == real:
            batch_size += 1
        return dataclasses.replace(self, batch_size=batch_size)

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.beta1, self.beta2, self.eps, self.weight_decay)


class SampleStream:
    """
    An endless, seeded walk over a split: each pass visits every sample once in a fresh random order.
    The position and generator state can be saved and restored.
    """

    def __init__(self, dataset: Sequence[VideoSample], seed: int | np.random.SeedSequence):
        self.dataset = dataset
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.order = np.zeros(0, dtype=np.int64)
        self.position = 0
        self.passes = 0

    def __iter__(self):
        return self

    def __next__(self) -> VideoSample:
        if len(self.dataset) == 0:
            raise ExhaustedStream("Cannot draw from an empty split")
        if self.position >= len(self.order):
            self.order = self.rng.permutation(len(self.dataset))
            self.position = 0
            self.passes += 1
        i = int(self.order[self.position])
        self.position += 1
        return self.dataset[i]

    def state(self) -> dict:
        return {"bit_generator": self.rng.bit_generator.state, "position": self.position, "passes": self.passes}

    def restore(self, state: dict, order: np.ndarray | None):
        self.rng.bit_generator.state = state["bit_generator"]
        self.position = int(state["position"])
        self.passes = int(state["passes"])
        self.order = np.zeros(0, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)


def make_batch(
    real_stream: SampleStream,
    synth_stream: SampleStream | None,
    config: TrainConfig,
    step: int,
    task_pool: Sequence[Sequence[str]] = DEFAULT_TASK_POOL,
) -> list[VideoSample]:
    """
    ``config.synthetic_per_batch`` synthetic samples spread evenly among the real ones. Each synthetic sample
    keeps only the annotations of one task-pool profile, drawn from (seed, step).
    """
    n_synth = config.synthetic_per_batch
    if n_synth > 0 and synth_stream is None:
        raise ExhaustedStream("The batch needs synthetic samples but there is no synthetic stream")
    B = config.batch_size
    profile_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, step])))
    batch = []
    for k in range(B):
        if (k + 1) * n_synth // B > k * n_synth // B:
            sample = next(synth_stream)  # type: ignore[arg-type]
            profile = task_pool[int(profile_rng.integers(len(task_pool)))]
            sample = dataclasses.replace(sample, annotations=sample.annotations.restrict(profile))
        else:
            sample = next(real_stream)
        batch.append(sample)
    return batch


METRIC_COLUMNS = (
    "epoch",
    "lr",
    "loss_total",
    *(f"loss_{t}" for t in ALL_TASKS),
    "train_acc",
    "val_acc",
)


@dataclasses.dataclass
class EpochAccumulator:
    """Running sums over the steps of the current epoch."""

    lr: float | None = None
    steps: int = 0
    total: float = 0.0
    task_sums: dict[str, float] = dataclasses.field(default_factory=dict)
    task_steps: dict[str, int] = dataclasses.field(default_factory=dict)
    correct: int = 0
    seen: int = 0

    def add(self, report: LossReport, lr: float, correct: int, seen: int):
        if self.lr is None:
            self.lr = lr
        self.steps += 1
        self.total += report.total_value
        for task, value in report.values.items():
            self.task_sums[task] = self.task_sums.get(task, 0.0) + value
            self.task_steps[task] = self.task_steps.get(task, 0) + 1
        self.correct += correct
        self.seen += seen

    def finish(self, epoch: int, val_acc: float) -> dict:
        row: dict = {"epoch": epoch, "lr": self.lr, "loss_total": self.total / max(self.steps, 1)}
        for task in ALL_TASKS:
            n = self.task_steps.get(task, 0)
            row[f"loss_{task}"] = self.task_sums[task] / n if n else None
        row["train_acc"] = self.correct / self.seen if self.seen else None
        row["val_acc"] = val_acc
        return row

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_json(data: dict) -> "EpochAccumulator":
        return EpochAccumulator(**data)


def write_metrics_csv(history: Sequence[dict], path):
    write_csv(history, METRIC_COLUMNS, path)


@dataclasses.dataclass(frozen=True, eq=False)
class Checkpoint:
    config_digest: str
    step: int
    params: dict[str, np.ndarray]
    adam: AdamState
    streams: dict[str, dict]
    stream_orders: dict[str, np.ndarray | None]
    accumulator: EpochAccumulator
    history: list[dict]


def save_checkpoint(
    path,
    *,
    model: PromptViT,
    adam: AdamState,
    step: int,
    streams: dict[str, SampleStream],
    accumulator: EpochAccumulator,
    history: Sequence[dict],
    config_digest: str,
):
    tensors = to_state_dict(model, prefix="model")
    tensors.update({f"adam.{k}": v for k, v in adam.state_dict().items()})
    for name, stream in streams.items():
        if len(stream.order):
            tensors[f"stream.{name}.order"] = stream.order.astype(np.float64)
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config_digest": config_digest,
        "step": step,
        "adam_step": adam.step,
    }
    metadata = {
        "header": header,
        "streams": {name: s.state() for name, s in streams.items()},
        "accumulator": accumulator.to_json(),
        "history": list(history),
    }
    save_state_dict(tensors, path, metadata=metadata)
    logger.info("Saved checkpoint at step %d to %s", step, path)


def load_checkpoint(path) -> Checkpoint:
    metadata = load_metadata(path)
    header = json.loads(metadata["header"])
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointMismatch(f"{path} is not a checkpoint (magic {header.get('magic')!r})")
    tensors = load_state_dict(path)
    streams = json.loads(metadata["streams"])
    params = {k.removeprefix("model."): v for k, v in tensors.items() if k.startswith("model.")}
    adam = AdamState.from_state_dict(
        header["adam_step"], {k.removeprefix("adam."): v for k, v in tensors.items() if k.startswith("adam.")}
    )
    orders = {name: tensors.get(f"stream.{name}.order") for name in streams}
    return Checkpoint(
        header["config_digest"],
        header["step"],
        params,
        adam,
        streams,
        orders,
        EpochAccumulator.from_json(json.loads(metadata["accumulator"])),
        json.loads(metadata["history"]),
    )


def load_trained_model(run: "RunConfig", path) -> PromptViT:
    """Rebuilds the variant ``run`` describes and fills it with the parameters of the checkpoint at ``path``."""
    ckpt = load_checkpoint(path)
    if ckpt.config_digest != digest_of(run):
        raise CheckpointMismatch(f"{path} was written by a different configuration")
    built = build_variant(
        run.variant, run.backbone, key=jax.random.PRNGKey(run.trainer.seed), tasks=run.data.pool_tasks
    )
    return from_state_dict(built.model, ckpt.params)


@dataclasses.dataclass(frozen=True, eq=False)
class TrainResult:
    model: PromptViT
    history: list[dict]
    step: int
    total_steps: int
    checkpoint_path: str | None = None
    # total loss of each step this call ran
    step_losses: tuple[float, ...] = ()

    @property
    def finished(self) -> bool:
        return self.step >= self.total_steps


def batch_predictions(
    model: PromptViT, batch: Sequence[VideoSample], supervised: Sequence[str]
) -> tuple[list[dict], list]:
    """Forward passes for a batch, asking each sample only for the tasks it is annotated with."""
    keep = (Task.DT, *supervised)
    predictions, annotations = [], []
    for sample in batch:
        ann = sample.annotations.restrict(keep)
        tasks = [t for t in ann.tasks if t != Task.DT]
        predictions.append(model(sample.pixels, tasks))
        annotations.append(ann)
    return predictions, annotations


def _count_correct(predictions: Sequence[dict], batch: Sequence[VideoSample]) -> tuple[int, int]:
    correct = seen = 0
    for pred, sample in zip(predictions, batch):
        if sample.action is None:
            continue
        seen += 1
        correct += int(np.argmax(pred[Task.DT].value) == sample.action)
    return correct, seen


def frozen_parameter_names(model: PromptViT) -> frozenset[str]:
    if not model.freeze_backbone:
        return frozenset()
    return frozenset(
        name for name in model.params.names if group_of(name) in BACKBONE_GROUPS and group_of(name) != "prompts"
    )


def train(
    run: "RunConfig",
    corpus: Corpus | None = None,
    *,
    out_dir: str | os.PathLike | None = None,
    resume_from: str | os.PathLike | None = None,
    stop_after: int | None = None,
) -> TrainResult:
    """
    Trains the configured variant. An epoch is one pass over the real training split. With ``out_dir`` the
    metrics CSV and checkpoints are written there; ``stop_after`` halts (and checkpoints) after that many steps.
    """
    cfg = run.trainer
    digest = digest_of(run)
    if corpus is None:
        corpus = build_corpus(run.data, SceneConfig.from_backbone(run.backbone))

    built = build_variant(run.variant, run.backbone, key=jax.random.PRNGKey(cfg.seed), tasks=run.data.pool_tasks)
    model, policy = built.model, built.policy
    synthetic: Sequence[VideoSample] = corpus.synthetic if policy.uses_synthetic else ()
    if policy.shuffle_annotations:
        synthetic = shuffle_annotations(synthetic, seed=cfg.seed)
    batch_config = cfg if len(synthetic) > 0 else dataclasses.replace(cfg, synth_ratio=Fraction(0))

    streams = {
        "real": SampleStream(corpus.train, np.random.SeedSequence([cfg.seed, 0])),
        "synthetic": SampleStream(synthetic, np.random.SeedSequence([cfg.seed, 1])),
    }
    steps_per_epoch = math.ceil(len(corpus.train) / batch_config.real_per_batch)
    total_steps = cfg.epochs * steps_per_epoch

    step = 0
    adam = AdamState.init(list(model.params))
    accumulator = EpochAccumulator()
    history: list[dict] = []
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config_digest != digest:
            raise CheckpointMismatch(f"{resume_from} was written by a different configuration")
        model = from_state_dict(model, ckpt.params)
        adam, step, accumulator, history = ckpt.adam, ckpt.step, ckpt.accumulator, ckpt.history
        for name, stream in streams.items():
            stream.restore(ckpt.streams[name], ckpt.stream_orders.get(name))
        logger.info("Resumed from %s at step %d", resume_from, step)

    named = list(model.params)
    tensors = [t for _, t in named]
    frozen = frozen_parameter_names(model)
    synth_stream = streams["synthetic"] if batch_config.synthetic_per_batch > 0 else None

    def _checkpoint() -> str | None:
        if out_dir is None:
            return None
        path = os.path.join(out_dir, f"checkpoint-{step}.safetensors")
        save_checkpoint(
            path,
            model=model,
            adam=adam,
            step=step,
            streams=streams,
            accumulator=accumulator,
            history=history,
            config_digest=digest,
        )
        return path

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    checkpoint_path = None
    step_losses: list[float] = []
    while step < total_steps and (stop_after is None or step < stop_after):
        lr = cosine_lr(step, total_steps, cfg.base_lr)
        batch = make_batch(streams["real"], synth_stream, batch_config, step, run.data.task_pool)
        with new_graph():
            for t in tensors:
                t.zero_grad()
            predictions, annotations = batch_predictions(model, batch, policy.supervised_tasks)
            report = total_loss(predictions, annotations, run.losses)
            grads = backward(report.total, wrt=tensors)
        adam = adam_step(named, grads, adam, lr, cfg.adam, frozen=frozen)
        accumulator.add(report, lr, *_count_correct(predictions, batch))
        step_losses.append(report.total_value)
        step += 1
        logger.debug("step %d lr %r loss %r", step, lr, report.total_value)

        if step % steps_per_epoch == 0:
            row = accumulator.finish(step // steps_per_epoch, evaluate(model, corpus.val).accuracy)
            history.append(row)
            accumulator = EpochAccumulator()
            logger.info(
                "epoch %d: loss %.4f train_acc %s val_acc %.4f",
                row["epoch"],
                row["loss_total"],
                row["train_acc"],
                row["val_acc"],
            )
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < total_steps:
            checkpoint_path = _checkpoint()

    if out_dir is not None:
        write_metrics_csv(history, os.path.join(out_dir, "metrics.csv"))
        checkpoint_path = _checkpoint()
    return TrainResult(model, history, step, total_steps, checkpoint_path, tuple(step_losses))


__all__ = [
    "TrainConfig",
    "SampleStream",
    "ExhaustedStream",
    "CheckpointMismatch",
    "make_batch",
    "EpochAccumulator",
    "METRIC_COLUMNS",
    "write_metrics_csv",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "load_trained_model",
    "TrainResult",
    "batch_predictions",
    "frozen_parameter_names",
    "train",
]
