# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Command line entry point.

```
promptvit gen-data --config run.yaml --out-dir data/
promptvit train --config run.yaml --out-dir runs/pvit
promptvit eval --config run.yaml --checkpoint runs/pvit/checkpoint-125.safetensors
promptvit ablate --config run.yaml --variants baseline pvit shuffled --seeds 0 1 2 --out-dir runs/ablation
promptvit gradcheck --config tiny.yaml
promptvit params --config run.yaml
```
"""

import argparse
import json
import logging
import os
import sys
from typing import Sequence

import jax

from .config import RunConfig, config_digest, dump_config, load_config
from .evaluation import CensusMode, count_flops, count_params, evaluate
from .harness import AblationConfig, gradient_check, run_ablation, run_fraction_sweep
from .scenegen import build_corpus, load_dataset, save_dataset
from .trainer import load_trained_model, train
from .variants import VariantKind, build_variant


logger = logging.getLogger("promptvit")

GRADCHECK_TOLERANCE = 1e-3


def _resolve(args) -> RunConfig:
    run = load_config(args.config)
    if args.seed is not None:
        run = run.with_seed(args.seed)
    if getattr(args, "variant", None) is not None:
        run = run.with_variant(args.variant)
    return run


def _require_out_dir(args) -> str:
    if args.out_dir is None:
        raise ValueError(f"{args.command} needs --out-dir")
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def cmd_gen_data(args) -> int:
    run = _resolve(args)
    out_dir = _require_out_dir(args)
    digest = config_digest(run)
    corpus = build_corpus(run.data, run.scene)
    for name, split in corpus.splits().items():
        path = os.path.join(out_dir, f"{name}.safetensors")
        save_dataset(split, path, config_digest=digest)
        logger.info("Wrote %d %s samples to %s", len(split), name, path)
    dump_config(run, os.path.join(out_dir, "config.yaml"))
    return 0


def cmd_train(args) -> int:
    run = _resolve(args)
    out_dir = _require_out_dir(args)
    dump_config(run, os.path.join(out_dir, "config.yaml"))
    result = train(run, out_dir=out_dir, resume_from=args.resume, stop_after=args.stop_after)
    if result.history:
        print(json.dumps(result.history[-1]))
    logger.info("Stopped at step %d of %d; checkpoint %s", result.step, result.total_steps, result.checkpoint_path)
    return 0


def cmd_eval(args) -> int:
    run = _resolve(args)
    model = load_trained_model(run, args.checkpoint)
    if args.data is not None:
        dataset = load_dataset(args.data)
    else:
        dataset = build_corpus(run.data, run.scene).val
    report = evaluate(model, dataset)
    print(json.dumps(report.to_json(), sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    run = _resolve(args)
    if args.fractions:
        rows = run_fraction_sweep(
            run, args.fractions, args.seeds, workers=args.workers, pair_real_batches=args.pair, out_dir=args.out_dir
        )
    else:
        suite = AblationConfig(tuple(args.variants), tuple(args.seeds), args.workers, args.pair)
        rows = run_ablation(run, suite, out_dir=args.out_dir)
    for row in rows:
        print(json.dumps(row))
    return 0


def cmd_gradcheck(args) -> int:
    run = _resolve(args)
    coords = None if args.all_coords else args.coords
    error = gradient_check(run, seed=run.trainer.seed, step=args.step, coords_per_tensor=coords)
    print(f"max relative error {error:.3e}")
    if error >= GRADCHECK_TOLERANCE:
        print(f"gradient check failed: {error:.3e} >= {GRADCHECK_TOLERANCE:.0e}", file=sys.stderr)
        return 1
    return 0


def cmd_params(args) -> int:
    run = _resolve(args)
    model = build_variant(
        run.variant, run.backbone, key=jax.random.PRNGKey(run.trainer.seed), tasks=run.data.pool_tasks
    ).model
    train_census = count_params(model, CensusMode.TRAIN)
    inference_census = count_params(model, CensusMode.INFERENCE)
    summary = {
        "variant": run.variant.kind,
        "train": train_census,
        "inference": inference_census,
        "train_total": sum(train_census.values()),
        "inference_total": sum(inference_census.values()),
        "inference_macs": count_flops(model),
    }
    print(json.dumps(summary, indent=2))
    return 0


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None, help="YAML run configuration; defaults apply when omitted")
    parser.add_argument("--seed", type=int, default=None, help="overrides trainer.seed")
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptvit", description="Task prompts for video transformers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="materialize the seeded train/val/synthetic splits")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one variant")
    _add_common(p)
    p.add_argument("--variant", default=None, choices=list(VariantKind))
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--stop-after", type=int, default=None, help="halt after this many steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on real videos")
    _add_common(p)
    p.add_argument("--variant", default=None, choices=list(VariantKind))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None, help="dataset file; defaults to the generated validation split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train a suite of variants over shared seeds")
    _add_common(p)
    p.add_argument("--variants", nargs="+", default=list(AblationConfig.variants), choices=list(VariantKind))
    p.add_argument("--seeds", nargs="+", type=int, default=list(AblationConfig.seeds))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fractions", nargs="+", type=float, default=None, help="run the synthetic-fraction sweep")
    p.add_argument(
        "--unpaired",
        dest="pair",
        action="store_false",
        help="keep the configured batch size for every variant instead of pairing real batches",
    )
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the total loss through the model")
    _add_common(p)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=4, help="coordinates sampled per parameter tensor")
    p.add_argument("--all-coords", action="store_true", help="check every coordinate")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter census and inference cost")
    _add_common(p)
    p.add_argument("--variant", default=None, choices=list(VariantKind))
    p.set_defaults(func=cmd_params)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as e:
        print(f"promptvit {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
