# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import csv
import os

import jax
import numpy as np
import pytest
from test_utils import skip_if_no_ablation, tiny_run

from promptvit.config import RunConfig
from promptvit.harness import (
    ABLATION_COLUMNS,
    SWEEP_COLUMNS,
    AblationConfig,
    gradient_check,
    paired_run,
    run_ablation,
    run_fraction_sweep,
)
from promptvit.model import PromptViT
from promptvit.scenegen import DataConfig
from promptvit.trainer import TrainConfig, train


def test_gradient_check_on_default_model():
    assert gradient_check(RunConfig(), coords_per_tensor=4) < 1e-3


def test_attention_has_no_key_bias():
    run = RunConfig()
    model = PromptViT.init(run.backbone, key=jax.random.PRNGKey(0))
    names = model.params.names
    assert "backbone.blocks.0.attn.q.bias" in names
    assert "backbone.blocks.0.attn.v.bias" in names
    assert not any(name.endswith("attn.k.bias") for name in names)


def test_paired_runs_see_the_same_real_batches():
    run = tiny_run(trainer=TrainConfig(batch_size=4, epochs=1))
    baseline = paired_run(run.with_variant("baseline"))
    assert baseline.trainer.batch_size == 4
    for kind in ("pvit", "shuffled", "mt"):
        paired = paired_run(run.with_variant(kind))
        assert paired.trainer.batch_size == 8
        assert paired.trainer.real_per_batch == 4
        assert paired.trainer.synthetic_per_batch == 4

    results = [train(r) for r in (baseline, paired_run(run.with_variant("pvit")))]
    assert results[0].total_steps == results[1].total_steps


def test_ablation_config_validation():
    assert AblationConfig(variants=["pvit"], seeds=[0]).variants == ("pvit",)
    with pytest.raises(ValueError):
        AblationConfig(variants=("prompted",))
    with pytest.raises(ValueError):
        AblationConfig(seeds=())


def test_ablation_table(tmp_path):
    run = tiny_run(trainer=TrainConfig(batch_size=4, epochs=1))
    suite = AblationConfig(variants=("baseline", "pvit"), seeds=(0, 1))
    rows = run_ablation(run, suite, out_dir=tmp_path)
    assert [r["variant"] for r in rows] == ["baseline", "pvit"]
    assert rows[0]["gap_vs_baseline"] == 0.0
    assert all(r["seeds"] == 2 and 0.0 <= r["mean_acc"] <= 1.0 for r in rows)
    assert (tmp_path / "pvit-seed1" / "metrics.csv").exists()

    with open(tmp_path / "ablation.csv") as f:
        table = list(csv.reader(f))
    assert table[0] == list(ABLATION_COLUMNS)
    assert len(table) == 3
    assert len(table[2][5].split()) == 2


def test_ablation_without_baseline_has_no_gap():
    run = tiny_run(trainer=TrainConfig(batch_size=4, epochs=1))
    rows = run_ablation(run, AblationConfig(variants=("np",), seeds=(0,)))
    assert rows[0]["gap_vs_baseline"] is None
    assert rows[0]["sd_acc"] == 0.0


def test_fraction_sweep(tmp_path):
    run = tiny_run(trainer=TrainConfig(batch_size=4, epochs=1))
    rows = run_fraction_sweep(run, [0.5, 1.0], seeds=[0], out_dir=tmp_path)
    assert [r["synthetic_fraction"] for r in rows] == [0.5, 1.0]
    with open(tmp_path / "fraction_sweep.csv") as f:
        assert next(csv.reader(f)) == list(SWEEP_COLUMNS)


@skip_if_no_ablation
def test_baseline_learns_the_downstream_task():
    run = RunConfig().with_variant("baseline")
    result = train(run)
    chance = 1 / run.backbone.downstream_classes
    assert result.history[-1]["val_acc"] >= chance + 0.2
    losses = np.convolve(result.step_losses, np.ones(10) / 10, mode="valid")
    assert losses[-1] < losses[0]


@skip_if_no_ablation
def test_prompts_beat_baseline_and_shuffled_matches_it():
    run = RunConfig()
    assert run.trainer.epochs == 6
    assert run.data == DataConfig(real_train=1000, real_val=200, synthetic=3000)
    workers = min(9, os.cpu_count() or 1)
    rows = {r["variant"]: r["mean_acc"] for r in run_ablation(run, AblationConfig(workers=workers))}
    assert rows["pvit"] >= rows["baseline"] + 0.05
    assert abs(rows["shuffled"] - rows["baseline"]) <= 0.02
