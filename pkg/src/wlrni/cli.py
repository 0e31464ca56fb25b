"""Command line: ``wlrni gen | verify | train | lemma``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__

SEED_ENV = "WLRNI_SEED"
log = logging.getLogger("wlrni")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 0


def _planar_sizes(text: str) -> tuple[tuple[int, int], ...]:
    try:
        out = tuple(tuple(int(x) for x in item.split(":")) for item in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected SIZE:WEIGHT[,SIZE:WEIGHT...], got {text!r}") from None
    if any(len(p) != 2 for p in out):
        raise argparse.ArgumentTypeError(f"expected SIZE:WEIGHT pairs, got {text!r}")
    return out


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    from .nn import ModelConfig

    parser = argparse.ArgumentParser(prog="wlrni", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an EXP or CEXP dataset")
    gen.add_argument("--pairs", type=_positive, default=600, help="number of graph pairs (default 600)")
    gen.add_argument("--n-min", type=int, default=2, help="smallest core half-size (default 2)")
    gen.add_argument("--n-max", type=int, default=4, help="largest core half-size (default 4)")
    gen.add_argument(
        "--planar-sizes",
        type=_planar_sizes,
        default=((12, 500), (15, 100)),
        help="planar base sizes with relative weights, e.g. 12:500,15:100 (default)",
    )
    gen.add_argument("--max-width", type=int, default=5, help="clause width cap (default 5)")
    gen.add_argument("--corrupt-fraction", type=_fraction, default=0.0, help="share of corrupted pairs (0 EXP, 0.5 CEXP)")
    gen.add_argument("--bases", type=Path, help="import planar base graphs instead of growing them")
    gen.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")
    gen.add_argument("--jobs", type=_positive, default=1, help="worker processes (default 1)")
    gen.add_argument("--out", type=Path, required=True, help="dataset path (.jsonl); manifest written alongside")

    verify = sub.add_parser("verify", help="re-check every pair of a dataset")
    verify.add_argument("--data", type=Path, required=True, help="dataset path")
    verify.add_argument("--jobs", type=_positive, default=1, help="worker processes (default 1)")

    train = sub.add_parser("train", help="train and evaluate the GNN")
    train.add_argument("--data", type=Path, required=True, help="dataset path")
    train.add_argument("--out", type=Path, required=True, help="metrics output path (.jsonl)")
    train.add_argument("--layers", type=_positive, default=8, help="message passing layers (default 8)")
    train.add_argument("--dim", type=_positive, default=64, help="embedding dimension (default 64)")
    train.add_argument("--activation", choices=["elu", "tanh"], default="elu", help="layer activation (default elu)")
    train.add_argument("--rni-fraction", type=_fraction, default=0.0, help="share of randomized feature columns")
    train.add_argument("--scheme", choices=["N", "U", "XN", "XU"], default="N", help="random feature distribution (default N)")
    train.add_argument("--lr", type=float, default=None, help="learning rate (default: per model and dataset)")
    train.add_argument("--epochs", type=int, default=500, help="epochs (default 500)")
    train.add_argument("--folds", type=int, default=10, help="cross-validation folds (default 10)")
    train.add_argument("--batch-size", type=_positive, default=ModelConfig.batch_size, help=f"graphs per Adam step (default {ModelConfig.batch_size})")
    train.add_argument("--holdout", type=_fraction, default=None, help="train once with this held-out pair fraction instead of CV")
    train.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")
    train.add_argument("--jobs", type=_positive, default=1, help="folds trained in parallel (default 1)")
    train.add_argument("--no-timestamps", action="store_true", help="omit wall-clock fields from metrics")

    lemma = sub.add_parser("lemma", help="Monte-Carlo check of the individualization lemma")
    lemma.add_argument("--n", type=_positive, required=True, help="number of nodes")
    lemma.add_argument("--delta", type=float, required=True, help="failure probability bound in (0, 1)")
    lemma.add_argument("--trials", type=_positive, default=1000, help="trials (default 1000)")
    lemma.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")
    return parser


def _cmd_gen(args) -> int:
    from .datagen import GeneratorConfig, generate_dataset, parse_base_graphs, write_dataset

    config = GeneratorConfig(
        num_pairs=args.pairs,
        n_min=args.n_min,
        n_max=args.n_max,
        planar_sizes=args.planar_sizes,
        max_clause_width=args.max_width,
        corrupt_fraction=args.corrupt_fraction,
        seed=args.seed,
    )
    bases = parse_base_graphs(args.bases.read_text()) if args.bases else None
    dataset = generate_dataset(config, jobs=args.jobs, bases=bases)
    mpath = write_dataset(dataset, args.out)
    counts = dataset.counts()
    print(f"wrote {2 * len(dataset.pairs)} graphs ({counts['exp']} exp, {counts['corrupt']} corrupt pairs) to {args.out}")
    print(f"manifest: {mpath}")
    return 0


def _cmd_verify(args) -> int:
    from .datagen import read_dataset, validate_dataset

    report = validate_dataset(read_dataset(args.data), jobs=args.jobs)
    counts = report.counts()
    total = counts["pairs"]
    print(f"pairs passing all applicable checks: {counts['passed']}/{total} ({100.0 * counts['passed'] / max(total, 1):.1f}%)")
    for flag in ("sat_labels_ok", "non_isomorphic", "wl1_indistinguishable", "fwl2_distinguishable", "wl1_distinguishable"):
        if counts[flag + "_applicable"]:
            print(f"  {flag}: {counts[flag]}/{counts[flag + '_applicable']}")
    failed = [e.pair_id for e in report.entries if not e.ok]
    if failed:
        print(f"failing pair ids: {failed[:20]}{' ...' if len(failed) > 20 else ''}")
    return 0 if report.valid else 1


def _cmd_train(args) -> int:
    from .datagen import read_dataset
    from .nn import Activation, ModelConfig
    from .rni import InitScheme
    from .training import cross_validate, train_holdout, write_metrics

    dataset = read_dataset(args.data)
    config = ModelConfig(
        layers=args.layers,
        d=args.dim,
        activation=Activation(args.activation),
        rni_fraction=args.rni_fraction,
        scheme=InitScheme(args.scheme),
        lr=args.lr,
        epochs=args.epochs,
        folds=args.folds,
        seed=args.seed,
        batch_size=args.batch_size,
        corrupted_data=dataset.counts()["corrupt"] > 0,
    )
    if args.holdout is not None:
        record = train_holdout(dataset.pairs, config, args.holdout)
    else:
        record = cross_validate(dataset, config, jobs=args.jobs)
    write_metrics(record, args.out, timestamps=not args.no_timestamps)
    summary = record.summary()
    print(
        f"test accuracy {100 * summary['mean_test_accuracy']:.1f} ± {100 * summary['std_test_accuracy']:.2f} "
        f"over {summary['folds']} fold(s), lr {summary['lr']:g}"
    )
    for name, acc in summary["subset_test_accuracy"].items():
        print(f"  {name}: {100 * acc:.1f}")
    print(f"metrics: {args.out}")
    return 0


def _cmd_lemma(args) -> int:
    from .datagen import pair_rng
    from .rni import LemmaParams, individualization_rate

    params = LemmaParams(args.n, args.delta)
    est = individualization_rate(params, args.trials, pair_rng(args.seed))
    bound = 1.0 - args.delta
    print(f"n={params.n} delta={params.delta} c={params.c} k={params.k} thresholds/node={params.thresholds}")
    print(f"success rate {est.rate:.4f} ({est.successes}/{est.trials}), Wilson 95% [{est.low:.4f}, {est.high:.4f}], bound {bound:.4f}")
    return 0 if est.rate >= bound else 1


_COMMANDS = {"gen": _cmd_gen, "verify": _cmd_verify, "train": _cmd_train, "lemma": _cmd_lemma}


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", 0) is None:
        try:
            args.seed = _default_seed()
        except ValueError:
            parser.print_usage(sys.stderr)
            print(f"wlrni: error: ${SEED_ENV} must be an integer", file=sys.stderr)
            return 2
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"wlrni {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
