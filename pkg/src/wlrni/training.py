"""Training loop, pair-level cross-validation and metrics output."""

from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen import Dataset, GraphPair
from .nn import (
    AdamState,
    EpochMetrics,
    Example,
    ModelConfig,
    accumulate_example,
    adam_step,
    forward,
    init_params,
    make_features,
)

log = logging.getLogger(__name__)

# stream tags for np.random.SeedSequence([seed, fold, tag])
_INIT, _SHUFFLE, _TRAIN_RNI, _EVAL_RNI = range(4)
_FOLD_SPLIT = 2**32 - 1


def _rng(seed: int, fold: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, fold, tag])))


def pair_examples(pairs: Sequence[GraphPair]) -> list[Example]:
    out = []
    for p in pairs:
        out.append(Example(p.sat_graph, 1, p.pair_id, p.subset.value))
        out.append(Example(p.unsat_graph, 0, p.pair_id, p.subset.value))
    return out


@dataclass
class FoldRecord:
    fold: int
    epochs: list[EpochMetrics] = field(default_factory=list)

    @property
    def final_test_accuracy(self) -> float:
        return self.epochs[-1].test_accuracy if self.epochs else float("nan")

    @property
    def final_subset_accuracy(self) -> dict[str, float]:
        return dict(self.epochs[-1].test_subset_accuracy) if self.epochs else {}


def evaluate(
    examples: Sequence[Example], params, config: ModelConfig, rng: np.random.Generator
) -> tuple[float, dict[str, float], float]:
    """Accuracy with one fresh random draw per graph, per-subset accuracy, and the
    largest logit gap between the two graphs of any evaluated pair."""
    if not examples:
        return float("nan"), {}, 0.0
    correct: dict[str, list[bool]] = {}
    logits_by_pair: dict[int, list[np.ndarray]] = {}
    for ex in examples:
        feats = make_features(ex.graph, params, config, rng)
        logits = forward(ex.graph, feats, params, config.activation)
        correct.setdefault(ex.subset, []).append(int(np.argmax(logits)) == ex.label)
        logits_by_pair.setdefault(ex.pair_id, []).append(logits)
    flat = [c for v in correct.values() for c in v]
    subset = {k: sum(v) / len(v) for k, v in sorted(correct.items())}
    gap = max(
        (float(np.max(np.abs(ls[0] - ls[1]))) for ls in logits_by_pair.values() if len(ls) == 2),
        default=0.0,
    )
    return sum(flat) / len(flat), subset, gap


def train_fold(
    train: Sequence[Example],
    test: Sequence[Example],
    config: ModelConfig,
    fold: int = 0,
) -> FoldRecord:
    """Adam on mini-batches of ``config.batch_size`` graphs, in a seeded
    shuffled order each epoch.

    Random node features are redrawn for every graph on every pass, both in
    training and evaluation.
    """
    if {e.pair_id for e in train} & {e.pair_id for e in test}:
        raise ValueError("a pair straddles the train/test split")
    params = init_params(config, _rng(config.seed, fold, _INIT))
    state = AdamState.zeros(params)
    shuffle_rng = _rng(config.seed, fold, _SHUFFLE)
    rni_rng = _rng(config.seed, fold, _TRAIN_RNI)
    eval_rng = _rng(config.seed, fold, _EVAL_RNI)
    lr = config.learning_rate
    record = FoldRecord(fold)
    grads = params.zeros_like()
    for epoch in range(1, config.epochs + 1):
        losses, hits = [], 0
        order = shuffle_rng.permutation(len(train))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads.flat[:] = 0.0
            for i in batch:
                ex = train[i]
                feats = make_features(ex.graph, params, config, rni_rng)
                loss, logits = accumulate_example(
                    ex.graph, feats, ex.label, params, config.activation, grads, 1.0 / len(batch)
                )
                losses.append(loss)
                hits += int(np.argmax(logits)) == ex.label
            adam_step(params, grads, state, lr)
        acc, subset, gap = evaluate(test, params, config, eval_rng)
        record.epochs.append(
            EpochMetrics(epoch, float(np.mean(losses)), hits / len(train), acc, subset, gap)
        )
        log.debug("fold %d epoch %d loss %.4f test %.3f", fold, epoch, record.epochs[-1].train_loss, acc)
    return record


def fold_assignment(pair_ids: Sequence[int], folds: int, seed: int) -> list[list[int]]:
    """Shuffle pair ids and split into ``folds`` near-equal groups."""
    if len(pair_ids) < folds:
        raise ValueError(f"{len(pair_ids)} pairs cannot fill {folds} folds")
    order = _rng(seed, _FOLD_SPLIT, 0).permutation(sorted(pair_ids))
    return [sorted(int(i) for i in part) for part in np.array_split(order, folds)]


def holdout_split(pairs: Sequence[GraphPair], test_fraction: float, seed: int):
    """Pair-level train/test split holding out ``test_fraction`` of the pairs."""
    ids = sorted(p.pair_id for p in pairs)
    order = _rng(seed, _FOLD_SPLIT, 1).permutation(ids)
    k = max(1, round(len(ids) * test_fraction))
    test_ids = set(int(i) for i in order[:k])
    train = [p for p in pairs if p.pair_id not in test_ids]
    test = [p for p in pairs if p.pair_id in test_ids]
    return train, test


@dataclass
class TrainRecord:
    config: dict
    folds: list[FoldRecord]
    seed: int
    wall_clock: float = 0.0

    @property
    def final_accuracies(self) -> list[float]:
        return [f.final_test_accuracy for f in self.folds]

    @property
    def mean_accuracy(self) -> float:
        return statistics.fmean(self.final_accuracies)

    @property
    def std_accuracy(self) -> float:
        accs = self.final_accuracies
        return statistics.pstdev(accs) if len(accs) > 1 else 0.0

    def epoch_series(self) -> list[tuple[int, float, float]]:
        """(epoch, mean, std) of test accuracy across folds."""
        out = []
        for e in range(len(self.folds[0].epochs)):
            accs = [f.epochs[e].test_accuracy for f in self.folds]
            out.append((e + 1, statistics.fmean(accs), statistics.pstdev(accs)))
        return out

    def subset_means(self) -> dict[str, float]:
        keys = sorted({k for f in self.folds for k in f.final_subset_accuracy})
        return {
            k: statistics.fmean(f.final_subset_accuracy[k] for f in self.folds if k in f.final_subset_accuracy)
            for k in keys
        }

    def summary(self) -> dict:
        return {
            "folds": len(self.folds),
            "mean_test_accuracy": self.mean_accuracy,
            "std_test_accuracy": self.std_accuracy,
            "fold_test_accuracy": self.final_accuracies,
            "subset_test_accuracy": self.subset_means(),
            "lr": self.config["lr"],
            "seed": self.seed,
        }


def _run_fold(args) -> FoldRecord:
    train, test, config, fold = args
    return train_fold(train, test, config, fold)


def cross_validate(dataset: Dataset | Sequence[GraphPair], config: ModelConfig, *, jobs: int = 1) -> TrainRecord:
    pairs = list(dataset.pairs if isinstance(dataset, Dataset) else dataset)
    by_id = {p.pair_id: p for p in pairs}
    groups = fold_assignment(list(by_id), config.folds, config.seed)
    tasks = []
    for k, test_ids in enumerate(groups):
        test_set = set(test_ids)
        train = pair_examples([by_id[i] for i in sorted(by_id) if i not in test_set])
        test = pair_examples([by_id[i] for i in test_ids])
        tasks.append((train, test, config, k))
    start = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold, tasks))
    else:
        folds = [_run_fold(t) for t in tasks]
    return TrainRecord(config.to_json(), folds, config.seed, time.perf_counter() - start)


def train_holdout(
    pairs: Sequence[GraphPair], config: ModelConfig, test_fraction: float = 0.2
) -> TrainRecord:
    train, test = holdout_split(pairs, test_fraction, config.seed)
    start = time.perf_counter()
    fold = train_fold(pair_examples(train), pair_examples(test), config, 0)
    return TrainRecord(config.to_json(), [fold], config.seed, time.perf_counter() - start)


def metrics_lines(record: TrainRecord, *, timestamps: bool = True) -> str:
    lines = []
    for f in record.folds:
        for m in f.epochs:
            lines.append({"fold": f.fold, "epoch": m.epoch, "split": "train", "loss": m.train_loss, "accuracy": m.train_accuracy})
            lines.append(
                {
                    "fold": f.fold,
                    "epoch": m.epoch,
                    "split": "test",
                    "accuracy": m.test_accuracy,
                    "subset_accuracy": m.test_subset_accuracy,
                    "max_pair_logit_gap": m.max_pair_gap,
                }
            )
    for epoch, mean, std in record.epoch_series():
        lines.append({"fold": "all", "epoch": epoch, "split": "test", "mean_accuracy": mean, "std_accuracy": std})
    summary = dict(record.summary(), config=record.config)
    if timestamps:
        summary["wall_clock_seconds"] = record.wall_clock
        summary["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    lines.append({"summary": summary})
    return "".join(json.dumps(l, sort_keys=True) + "\n" for l in lines)


def write_metrics(record: TrainRecord, path: str | Path, *, timestamps: bool = True) -> None:
    Path(path).write_text(metrics_lines(record, timestamps=timestamps), encoding="utf-8")
