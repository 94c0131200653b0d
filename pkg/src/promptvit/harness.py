# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""Experiment drivers: the end-to-end gradient check, the variant ablation and the synthetic-fraction sweep."""

import concurrent.futures
import dataclasses
import logging
import os
import statistics
from typing import Sequence

import jax

from .config import RunConfig
from .gradcheck import finite_diff_check
from .losses import total_loss
from .model import PromptViT
from .scenegen import Corpus, Origin, build_corpus, generate_sample
from .trainer import batch_predictions, train
from .types import SYNTHETIC_TASKS
from .util import write_csv
from .variants import VariantKind


logger = logging.getLogger(__name__)


def gradient_check(
    run: RunConfig = RunConfig(),
    *,
    seed: int = 0,
    step: float = 1e-4,
    coords_per_tensor: int | None = 4,
) -> float:
    """
    Finite-difference check of the total loss through the whole model on two samples that together activate
    all six losses: one real video (downstream only) and one synthetic video carrying every annotation.
    Returns the worst relative error.
    """
    key = jax.random.PRNGKey(seed)
    model = PromptViT.init(run.backbone, key=key, tasks=SYNTHETIC_TASKS)
    scene = run.scene
    batch = [
        generate_sample(seed, Origin.REAL, (), scene),
        generate_sample(seed + 1, Origin.SYNTHETIC, SYNTHETIC_TASKS, scene),
    ]
    named = list(model.params)

    def loss_fn(_params):
        predictions, annotations = batch_predictions(model, batch, SYNTHETIC_TASKS)
        return total_loss(predictions, annotations, run.losses).total

    return finite_diff_check(
        loss_fn,
        [t for _, t in named],
        step,
        coords_per_tensor=coords_per_tensor,
        key=jax.random.fold_in(key, 1) if coords_per_tensor is not None else None,
    )


@dataclasses.dataclass(frozen=True)
class AblationConfig:
    variants: tuple[str, ...] = (VariantKind.BASELINE, VariantKind.PVIT, VariantKind.SHUFFLED)
    seeds: tuple[int, ...] = (0, 1, 2)
    workers: int = 1
    # give every variant the same real videos at every step
    pair_real_batches: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        for v in self.variants:
            if v not in VariantKind:
                raise ValueError(f"Unknown variant {v!r}")
        if not self.seeds or self.workers < 1:
            raise ValueError("An ablation needs at least one seed and one worker")


def paired_run(run: RunConfig) -> RunConfig:
    """
    Grows the batch of a variant that mixes in synthetic videos until its real share equals the configured batch
    size, which is the whole batch of a variant without synthetic data. Paired runs take the same number of steps
    and see the same real videos at every step.
    """
    if not run.variant.uses_synthetic or run.data.synthetic == 0 or run.trainer.synthetic_per_batch == 0:
        return run
    trainer = run.trainer.with_real_batch(run.trainer.batch_size)
    logger.info(
        "%s: batch %d -> %d to pair real batches", run.variant.kind, run.trainer.batch_size, trainer.batch_size
    )
    return dataclasses.replace(run, trainer=trainer)


def run_variant(run: RunConfig, corpus: Corpus | None = None, out_dir: str | None = None) -> float:
    """Trains one configured run and returns its final validation accuracy."""
    result = train(run, corpus, out_dir=out_dir)
    return result.history[-1]["val_acc"]


def _run_job(run: RunConfig, out_dir: str | None) -> float:
    # worker processes rebuild the corpus; it is a pure function of the data config
    return run_variant(run, None, out_dir)


def _run_all(jobs: Sequence[tuple[RunConfig, str | None]], corpus: Corpus | None, workers: int) -> list[float]:
    if workers == 1:
        corpus = corpus or build_corpus(jobs[0][0].data, jobs[0][0].scene)
        return [run_variant(run, corpus, out) for run, out in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_job, run, out) for run, out in jobs]
        return [f.result() for f in futures]


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, sd


ABLATION_COLUMNS = ("variant", "seeds", "mean_acc", "sd_acc", "gap_vs_baseline", "accuracies")


def run_ablation(
    run: RunConfig,
    suite: AblationConfig = AblationConfig(),
    *,
    corpus: Corpus | None = None,
    out_dir: str | os.PathLike | None = None,
) -> list[dict]:
    """
    Trains every variant of ``suite`` with every seed on the same corpus; seed s gives every variant the same
    initialization key and real sample order, so comparisons are paired (see [promptvit.harness.paired_run][]).
    Rows come out in suite order whatever the scheduling, and are written to ``ablation.csv`` under ``out_dir``
    when given.
    """
    jobs = []
    for kind in suite.variants:
        for seed in suite.seeds:
            job_dir = None if out_dir is None else os.path.join(out_dir, f"{kind}-seed{seed}")
            job = run.with_variant(kind).with_seed(seed)
            jobs.append((paired_run(job) if suite.pair_real_batches else job, job_dir))
    accuracies = _run_all(jobs, corpus, suite.workers)

    k = len(suite.seeds)
    by_variant = {kind: accuracies[i * k : (i + 1) * k] for i, kind in enumerate(suite.variants)}
    baseline = by_variant.get(VariantKind.BASELINE)
    baseline_mean = _mean_sd(baseline)[0] if baseline else None
    rows = []
    for kind, accs in by_variant.items():
        mean, sd = _mean_sd(accs)
        rows.append(
            {
                "variant": kind,
                "seeds": k,
                "mean_acc": mean,
                "sd_acc": sd,
                "gap_vs_baseline": None if baseline_mean is None else mean - baseline_mean,
                "accuracies": " ".join(repr(a) for a in accs),
            }
        )
        logger.info("%s: %.4f ± %.4f over %d seeds", kind, mean, sd, k)
    if out_dir is not None:
        write_csv(rows, ABLATION_COLUMNS, os.path.join(out_dir, "ablation.csv"))
    return rows


SWEEP_COLUMNS = ("synthetic_fraction", "seeds", "mean_acc", "sd_acc", "accuracies")


def run_fraction_sweep(
    run: RunConfig,
    fractions: Sequence[float],
    seeds: Sequence[int] = (0, 1, 2),
    *,
    workers: int = 1,
    pair_real_batches: bool = True,
    out_dir: str | os.PathLike | None = None,
) -> list[dict]:
    """PViT accuracy as a function of the kept fraction of the synthetic split."""
    jobs = []
    for fraction in fractions:
        data = dataclasses.replace(run.data, synthetic_fraction=fraction)
        for seed in seeds:
            job = dataclasses.replace(run, data=data).with_variant(VariantKind.PVIT).with_seed(seed)
            jobs.append((paired_run(job) if pair_real_batches else job, None))
    if workers == 1:
        accuracies = [run_variant(job, build_corpus(job.data, job.scene)) for job, _ in jobs]
    else:
        accuracies = _run_all(jobs, None, workers)

    k = len(seeds)
    rows = []
    for i, fraction in enumerate(fractions):
        accs = accuracies[i * k : (i + 1) * k]
        mean, sd = _mean_sd(accs)
        rows.append(
            {
                "synthetic_fraction": fraction,
                "seeds": k,
                "mean_acc": mean,
                "sd_acc": sd,
                "accuracies": " ".join(repr(a) for a in accs),
            }
        )
    if out_dir is not None:
        write_csv(rows, SWEEP_COLUMNS, os.path.join(out_dir, "fraction_sweep.csv"))
    return rows


__all__ = [
    "gradient_check",
    "AblationConfig",
    "paired_run",
    "run_variant",
    "run_ablation",
    "run_fraction_sweep",
    "ABLATION_COLUMNS",
    "SWEEP_COLUMNS",
]
