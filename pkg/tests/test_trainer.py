# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import os
from fractions import Fraction

import equinox as eqx
import jax.random as jrandom
import numpy as np
import pytest
from test_utils import tiny_run

from promptvit.config import config_digest
from promptvit.core import backward, new_graph
from promptvit.losses import total_loss
from promptvit.model import PromptViT
from promptvit.scenegen import DEFAULT_TASK_POOL, DataConfig, Origin, build_corpus, generate_sample
from promptvit.trainer import (
    METRIC_COLUMNS,
    CheckpointMismatch,
    ExhaustedStream,
    SampleStream,
    TrainConfig,
    batch_predictions,
    load_checkpoint,
    load_trained_model,
    make_batch,
    train,
)
from promptvit.types import SYNTHETIC_TASKS
from promptvit.util import InvalidConfig


def test_batch_composition():
    assert TrainConfig(batch_size=8).synthetic_per_batch == 4
    assert TrainConfig(batch_size=8, synth_ratio="1/3").synthetic_per_batch == 2
    assert TrainConfig(batch_size=8, synth_ratio=0).real_per_batch == 8
    assert TrainConfig(synth_ratio="3/2").synth_ratio == Fraction(3, 2)
    with pytest.raises(InvalidConfig):
        TrainConfig(synth_ratio=4)
    with pytest.raises(InvalidConfig):
        TrainConfig(batch_size=0)


def test_sample_stream_visits_every_sample_per_pass():
    stream = SampleStream(list(range(5)), 3)
    first = [next(stream) for _ in range(5)]
    second = [next(stream) for _ in range(5)]
    assert sorted(first) == sorted(second) == list(range(5))
    assert stream.passes == 2
    with pytest.raises(ExhaustedStream):
        next(SampleStream([], 0))


def test_make_batch_interleaves_and_restricts():
    run = tiny_run()
    corpus = build_corpus(run.data, run.scene)
    real = SampleStream(corpus.train, 0)
    synthetic = SampleStream(corpus.synthetic, 1)
    batch = make_batch(real, synthetic, run.trainer, step=0)
    assert [s.origin for s in batch] == [Origin.REAL, Origin.SYNTHETIC, Origin.REAL, Origin.SYNTHETIC]
    for sample in batch[1::2]:
        assert sample.annotations.tasks in DEFAULT_TASK_POOL
        assert sample.action is None
    again = make_batch(SampleStream(corpus.train, 0), SampleStream(corpus.synthetic, 1), run.trainer, step=0)
    assert [s.annotations.tasks for s in again] == [s.annotations.tasks for s in batch]
    with pytest.raises(ExhaustedStream):
        make_batch(real, None, run.trainer, step=1)


def test_training_writes_identical_metrics(tmp_path):
    run = tiny_run()
    a = train(run, out_dir=tmp_path / "a")
    b = train(run, out_dir=tmp_path / "b")
    assert a.finished and a.step == a.total_steps == 4
    assert len(a.history) == 2
    csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert csv_a == (tmp_path / "b" / "metrics.csv").read_bytes()
    header = csv_a.decode().splitlines()[0]
    assert header == ",".join(METRIC_COLUMNS)
    assert a.history[0]["lr"] == run.trainer.base_lr
    assert a.history[0]["loss_dt"] is not None


def test_resume_matches_uninterrupted_run(tmp_path):
    run = tiny_run()
    full = train(run, out_dir=tmp_path / "full")
    partial = train(run, out_dir=tmp_path / "partial", stop_after=3)
    assert partial.step == 3 and not partial.finished
    ckpt = load_checkpoint(partial.checkpoint_path)
    assert ckpt.step == 3
    assert ckpt.config_digest == config_digest(run)

    resumed = train(run, out_dir=tmp_path / "resumed", resume_from=partial.checkpoint_path)
    assert resumed.step == full.step
    for (name, t), (_, u) in zip(full.model.params, resumed.model.params):
        assert np.array_equal(t.value, u.value), name
    assert (tmp_path / "full" / "metrics.csv").read_bytes() == (tmp_path / "resumed" / "metrics.csv").read_bytes()


def test_resume_rejects_other_config(tmp_path):
    run = tiny_run()
    partial = train(run, out_dir=tmp_path, stop_after=1)
    with pytest.raises(CheckpointMismatch):
        train(run.with_seed(5), resume_from=partial.checkpoint_path)


def test_load_trained_model(tmp_path):
    run = tiny_run()
    result = train(run, out_dir=tmp_path)
    model = load_trained_model(run, result.checkpoint_path)
    for (_, t), (_, u) in zip(result.model.params, model.params):
        assert np.array_equal(t.value, u.value)
    assert os.path.basename(result.checkpoint_path) == "checkpoint-4.safetensors"


def test_synthetic_free_run_uses_only_real_batches():
    run = tiny_run(data=DataConfig(real_train=4, real_val=4, synthetic=0))
    result = train(run)
    assert result.finished
    assert result.total_steps == 2
    assert result.history[-1]["loss_depth"] is None


def test_training_loss_falls():
    run = tiny_run(
        data=DataConfig(real_train=16, real_val=4, synthetic=4),
        trainer=TrainConfig(batch_size=4, epochs=15, base_lr=1e-2),
    ).with_variant("baseline")
    result = train(run)
    losses = np.asarray(result.step_losses)
    assert len(losses) == result.total_steps == 60
    moving = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert moving[-1] < moving[0]


def test_with_real_batch():
    assert TrainConfig(batch_size=8).with_real_batch(8).batch_size == 16
    assert TrainConfig(synth_ratio="1/3").with_real_batch(6).batch_size == 8
    assert TrainConfig(synth_ratio="3/2").with_real_batch(4).batch_size == 10
    assert TrainConfig(synth_ratio=0).with_real_batch(5).batch_size == 5
    for ratio in ("1/2", "3/2", "3"):
        for real in range(1, 9):
            assert TrainConfig(synth_ratio=ratio).with_real_batch(real).real_per_batch == real
    with pytest.raises(InvalidConfig):
        TrainConfig().with_real_batch(0)


def _mixed_batch(run, masked: str | None = None) -> list:
    annotated = [t for t in SYNTHETIC_TASKS if t != masked]
    return [
        generate_sample(3, Origin.REAL, (), run.scene),
        generate_sample(4, Origin.SYNTHETIC, annotated, run.scene),
    ]


def test_swapping_prompts_leaves_the_loss_bit_identical():
    run = tiny_run()
    model = PromptViT.init(run.backbone, key=jrandom.PRNGKey(0))
    swapped = eqx.tree_at(lambda m: m.backbone.prompts, model, model.backbone.prompts.swap("normal", "boxes"))
    assert not np.array_equal(swapped.backbone.prompts.values.value, model.backbone.prompts.values.value)

    batch = _mixed_batch(run)
    reports = [total_loss(*batch_predictions(m, batch, SYNTHETIC_TASKS), run.losses) for m in (model, swapped)]
    assert reports[0].total_value == reports[1].total_value
    assert reports[0].values == reports[1].values


@pytest.mark.parametrize("masked", SYNTHETIC_TASKS)
def test_masked_task_head_gets_no_gradient(masked):
    run = tiny_run()
    model = PromptViT.init(run.backbone, key=jrandom.PRNGKey(0))
    named = list(model.params)
    tensors = [t for _, t in named]
    with new_graph():
        predictions, annotations = batch_predictions(model, _mixed_batch(run, masked), SYNTHETIC_TASKS)
        report = total_loss(predictions, annotations, run.losses)
        grads = backward(report.total, wrt=tensors)
    assert masked not in report.values

    for task in SYNTHETIC_TASKS:
        head = [grads[t] for name, t in named if name.startswith(f"heads.tasks.{task}.")]
        assert head
        if task == masked:
            assert all(not np.any(g) for g in head), task
        else:
            assert any(np.any(g) for g in head), task
