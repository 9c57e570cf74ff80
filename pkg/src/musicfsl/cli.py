"""Command-line entry point: gen-synth / run / inspect.

Exit codes: 0 success, 2 usage error, 3 I/O or file-format error,
4 numeric, sampling, or configuration-domain error. The MUSIC_THREADS
environment variable overrides --parallel.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .classifier import TrainSpec, TrainingError
from .engine import MODES, MusicConfig
from .episodes import SETTINGS, EpisodeConfig, SamplingError
from .evaluation import DELIMITED_TABLE, STRUCTURED_TEXT, serialize_report
from .harness import run_benchmark
from .store import (
    ConfigError,
    StoreError,
    SyntheticConfig,
    generate_synthetic,
    read_store,
    write_store,
)

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="musicfsl",
        description=(
            "Semi-supervised few-shot classification by successive exclusion "
            "of negative pseudo-labels over frozen feature embeddings."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-synth", help="generate a synthetic feature store")
    gen.add_argument("--classes", type=int, required=True, help="number of classes")
    gen.add_argument("--dim", type=int, required=True, help="embedding dimension")
    gen.add_argument("--per-class", type=int, required=True, help="samples per class")
    gen.add_argument("--separation", type=float, default=4.0,
                     help="distance scale between class means")
    gen.add_argument("--sigma", type=float, default=1.0,
                     help="isotropic noise standard deviation")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output store path")
    gen.set_defaults(func=cmd_gen_synth)

    run = sub.add_parser("run", help="run an episodic benchmark")
    run.add_argument("--store", required=True, help="feature store path")
    run.add_argument("--ways", type=int, default=5)
    run.add_argument("--shots", type=int, default=1)
    run.add_argument("--unlabeled", type=int, default=30,
                     help="unlabeled samples per episode class")
    run.add_argument("--queries", type=int, default=15)
    run.add_argument("--episodes", type=int, default=600)
    run.add_argument("--setting", choices=SETTINGS, default="inductive")
    run.add_argument("--distractors", type=int, default=3,
                     help="distractor classes (distractive setting only)")
    run.add_argument("--distractor-unlabeled", type=int, default=None,
                     help="unlabeled per distractor class (default: --unlabeled)")
    run.add_argument("--mode", choices=MODES, default="full")
    run.add_argument("--delta", type=float, default=None,
                     help="reject threshold (default: 1/ways)")
    run.add_argument("--adaptive-delta", action="store_true",
                     help="use 1/|admissible| instead of the fixed default")
    run.add_argument("--minent-weight", type=float, default=1.0)
    run.add_argument("--pos-threshold", type=float, default=0.7,
                     help="positive-pass threshold (alternating modes)")
    run.add_argument("--no-anchor", action="store_true",
                     help="drop the support CE term from later stages")
    run.add_argument("--steps", type=int, default=100, help="SGD steps per stage")
    run.add_argument("--lr", type=float, default=0.1)
    run.add_argument("--momentum", type=float, default=0.9)
    run.add_argument("--bias", action="store_true", help="enable the head bias")
    run.add_argument("--init-seed", type=int, default=0)
    run.add_argument("--seed", type=int, default=0, help="episode sampling base seed")
    run.add_argument("--parallel", type=int, default=1,
                     help="worker processes (MUSIC_THREADS overrides)")
    run.add_argument("--out", required=True, help="run report output path")
    run.add_argument("--csv", default=None, help="optional per-episode table path")
    run.set_defaults(func=cmd_run)

    ins = sub.add_parser("inspect", help="print a store's header and statistics")
    ins.add_argument("--store", required=True, help="feature store path")
    ins.set_defaults(func=cmd_inspect)
    return parser


def cmd_gen_synth(args) -> int:
    try:
        cfg = SyntheticConfig(
            num_classes=args.classes,
            dim=args.dim,
            samples_per_class=args.per_class,
            separation=args.separation,
            noise_sigma=args.sigma,
            seed=args.seed,
        )
        cfg.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    store = generate_synthetic(cfg)
    write_store(store, args.out)
    print(
        f"wrote {args.out}: {store.num_classes} classes, dim {store.dim}, "
        f"{len(store)} records"
    )
    return EXIT_OK


def _resolve_parallel(requested: int) -> int:
    env = os.environ.get("MUSIC_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"MUSIC_THREADS must be an integer, got {env!r}")
    return max(1, requested)


def cmd_run(args) -> int:
    store = read_store(args.store)
    distractor_unlabeled = (
        args.distractor_unlabeled
        if args.distractor_unlabeled is not None
        else args.unlabeled
    )
    ecfg = EpisodeConfig(
        ways=args.ways,
        shots=args.shots,
        unlabeled_per_class=args.unlabeled,
        queries_per_class=args.queries,
        setting=args.setting,
        distractor_classes=args.distractors if args.setting == "distractive" else 0,
        distractor_unlabeled_per_class=(
            distractor_unlabeled if args.setting == "distractive" else 0
        ),
        episodes=args.episodes,
        base_seed=args.seed,
    )
    ecfg.validate()
    mcfg = MusicConfig(
        delta=args.delta,
        minent_weight=args.minent_weight,
        mode=args.mode,
        pos_threshold=args.pos_threshold,
        train_spec=TrainSpec(
            steps=args.steps, learning_rate=args.lr, momentum=args.momentum
        ),
        anchor_support=not args.no_anchor,
        adaptive_delta=args.adaptive_delta,
        init_seed=args.init_seed,
        with_bias=args.bias,
    )
    mcfg.validate()
    parallel = _resolve_parallel(args.parallel)

    # Execution details (parallelism, output paths) stay out of the echo so
    # that identical runs produce bitwise-identical report files.
    config_echo = {
        "config_version": CONFIG_VERSION,
        "store": os.fspath(args.store),
        "ways": ecfg.ways,
        "shots": ecfg.shots,
        "unlabeled": ecfg.unlabeled_per_class,
        "queries": ecfg.queries_per_class,
        "episodes": ecfg.episodes,
        "setting": ecfg.setting,
        "distractors": ecfg.distractor_classes,
        "distractor_unlabeled": ecfg.distractor_unlabeled_per_class,
        "base_seed": ecfg.base_seed,
        "mode": mcfg.mode,
        "delta": mcfg.delta,
        "adaptive_delta": mcfg.adaptive_delta,
        "minent_weight": mcfg.minent_weight,
        "pos_threshold": mcfg.pos_threshold,
        "anchor_support": mcfg.anchor_support,
        "steps": mcfg.train_spec.steps,
        "learning_rate": mcfg.train_spec.learning_rate,
        "momentum": mcfg.train_spec.momentum,
        "bias": mcfg.with_bias,
        "init_seed": mcfg.init_seed,
    }

    report = run_benchmark(store, ecfg, mcfg, parallel=parallel, config_echo=config_echo)
    with open(args.out, "wb") as fh:
        fh.write(serialize_report(report, STRUCTURED_TEXT))
    if args.csv:
        with open(args.csv, "wb") as fh:
            fh.write(serialize_report(report, DELIMITED_TABLE))

    print(
        f"{args.mode} {ecfg.ways}-way-{ecfg.shots}-shot "
        f"({ecfg.setting}, {ecfg.episodes} episodes): {report.summary_line()}"
    )
    return EXIT_OK


def cmd_inspect(args) -> int:
    store = read_store(args.store)
    print(f"store: {args.store}")
    print(f"dim: {store.dim}")
    print(f"num_classes: {store.num_classes}")
    print(f"records: {len(store)}")
    counts = store.class_counts()
    for cid in range(store.num_classes):
        name = ""
        if store.manifest and cid in store.manifest:
            info = store.manifest[cid]
            name = f"  {info.name} [{info.split}]"
        print(f"  class {cid}: {counts[cid]} records{name}")
    if len(store):
        vecs = store.vectors
        print(
            f"vector stats: min {vecs.min():.4f}  max {vecs.max():.4f}  "
            f"mean {vecs.mean():.4f}  std {vecs.std():.4f}"
        )
        norms = np.linalg.norm(vecs.astype(np.float64), axis=1)
        print(f"vector norms: mean {norms.mean():.4f}  std {norms.std():.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SamplingError, TrainingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
