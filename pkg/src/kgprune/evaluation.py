"""Pruning-aware evaluation: confusion buckets, metrics, cross-validation.

A model is judged only on gold-labeled nodes. Gold nodes the expansion
never visited (every route passed through a pruned ancestor) count as
unexplored and hurt recall and accuracy; the keeping decision is the
positive class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Optional, Sequence

import numpy as np

from .expansion import ExpansionResult, NodeFate, expand_downward
from .ids import EntityId, sorted_entities
from .pairs import Decision, LabeledPair
from .store import KGStore


@dataclass
class GoldDataset:
    """Labeled pairs grouped by seed entity."""

    name: str
    by_seed: dict[EntityId, list[LabeledPair]] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, name: str, pairs: Iterable[LabeledPair]) -> "GoldDataset":
        ds = cls(name=name)
        seen: set[tuple[EntityId, EntityId]] = set()
        for pair in pairs:
            key = (pair.seed, pair.reached)
            if key in seen:
                raise ValueError(f"duplicate gold decision for {key}")
            seen.add(key)
            ds.by_seed.setdefault(pair.seed, []).append(pair)
        return ds

    def seeds(self) -> list[EntityId]:
        return sorted_entities(self.by_seed)

    def pairs(self) -> list[LabeledPair]:
        return [p for seed in self.seeds() for p in self.by_seed[seed]]

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_seed.values())


@dataclass
class ConfusionBreakdown:
    kept_gold_keep: int = 0
    kept_gold_prune: int = 0
    pruned_gold_keep: int = 0
    pruned_gold_prune: int = 0
    unexplored_gold_keep: int = 0
    unexplored_gold_prune: int = 0

    def add(self, other: "ConfusionBreakdown") -> None:
        self.kept_gold_keep += other.kept_gold_keep
        self.kept_gold_prune += other.kept_gold_prune
        self.pruned_gold_keep += other.pruned_gold_keep
        self.pruned_gold_prune += other.pruned_gold_prune
        self.unexplored_gold_keep += other.unexplored_gold_keep
        self.unexplored_gold_prune += other.unexplored_gold_prune

    def total(self) -> int:
        return (
            self.kept_gold_keep
            + self.kept_gold_prune
            + self.pruned_gold_keep
            + self.pruned_gold_prune
            + self.unexplored_gold_keep
            + self.unexplored_gold_prune
        )


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float


def score_run(result: ExpansionResult, gold: Sequence[LabeledPair]) -> ConfusionBreakdown:
    """Bucket each gold pair of the result's seed by the node's fate.

    Visited nodes without a gold label are ignored; gold nodes absent from
    the result are unexplored.
    """
    cb = ConfusionBreakdown()
    for pair in gold:
        if pair.seed != result.seed:
            raise ValueError(
                f"gold pair seed {pair.seed} does not match result seed {result.seed}"
            )
        fate = result.fate_of(pair.reached)
        keep = pair.decision is Decision.KEEP
        if fate is NodeFate.KEPT:
            if keep:
                cb.kept_gold_keep += 1
            else:
                cb.kept_gold_prune += 1
        elif fate is NodeFate.PRUNED:
            if keep:
                cb.pruned_gold_keep += 1
            else:
                cb.pruned_gold_prune += 1
        else:
            if keep:
                cb.unexplored_gold_keep += 1
            else:
                cb.unexplored_gold_prune += 1
    return cb


def compute_metrics(cb: ConfusionBreakdown) -> MetricsReport:
    kept_k = cb.kept_gold_keep
    precision_den = kept_k + cb.kept_gold_prune
    precision = kept_k / precision_den if precision_den else 0.0
    recall_den = kept_k + cb.unexplored_gold_keep + cb.pruned_gold_keep
    recall = kept_k / recall_den if recall_den else 0.0
    total = cb.total()
    accuracy = (kept_k + cb.pruned_gold_prune) / total if total else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0.0
        else 0.0
    )
    return MetricsReport(precision=precision, recall=recall, f1=f1, accuracy=accuracy)


DeciderFactory = Callable[[Sequence[LabeledPair], Sequence[LabeledPair]], Callable]


@dataclass
class FoldOutcome:
    fold: int
    test_seeds: list[EntityId]
    train_pairs: list[LabeledPair]
    results: dict[EntityId, ExpansionResult]
    breakdown: ConfusionBreakdown
    metrics: MetricsReport


@dataclass
class Aggregate:
    mean: MetricsReport
    std: MetricsReport


@dataclass
class CrossValidationReport:
    folds: list[FoldOutcome]
    aggregate: Aggregate


def _aggregate(reports: Sequence[MetricsReport]) -> Aggregate:
    def stats(values: list[float]) -> tuple[float, float]:
        mean = sum(values) / len(values)
        if len(values) < 2:
            return mean, 0.0
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        return mean, math.sqrt(var)

    p = stats([r.precision for r in reports])
    r = stats([r.recall for r in reports])
    f = stats([r.f1 for r in reports])
    a = stats([r.accuracy for r in reports])
    return Aggregate(
        mean=MetricsReport(p[0], r[0], f[0], a[0]),
        std=MetricsReport(p[1], r[1], f[1], a[1]),
    )


def fold_seed_sets(
    seeds: Sequence[EntityId], n_folds: int, rng: np.random.Generator
) -> list[list[EntityId]]:
    """Shuffle seeds and slice them into near-equal sets.

    Depends only on the seed list order and the RNG state, not on pair
    contents.
    """
    shuffled = list(seeds)
    rng.shuffle(shuffled)
    folds: list[list[EntityId]] = [[] for _ in range(n_folds)]
    for i, seed in enumerate(shuffled):
        folds[i % n_folds].append(seed)
    return folds


def evaluate_seeds(
    store: KGStore,
    dataset: GoldDataset,
    seeds: Sequence[EntityId],
    decider,
    max_depth: Optional[int] = None,
    macro: bool = False,
) -> tuple[dict[EntityId, ExpansionResult], ConfusionBreakdown, MetricsReport]:
    """Expand each seed with the decider and score against its gold pairs.

    Metrics pool counts over seeds (micro) unless ``macro`` is set, in which
    case per-seed metrics are averaged.
    """
    results: dict[EntityId, ExpansionResult] = {}
    pooled = ConfusionBreakdown()
    per_seed: list[MetricsReport] = []
    for seed in seeds:
        result = expand_downward(store, seed, decider, max_depth=max_depth)
        results[seed] = result
        cb = score_run(result, dataset.by_seed.get(seed, []))
        pooled.add(cb)
        per_seed.append(compute_metrics(cb))
    if macro and per_seed:
        agg = _aggregate(per_seed)
        metrics = agg.mean
    else:
        metrics = compute_metrics(pooled)
    return results, pooled, metrics


def cross_validate(
    store: KGStore,
    dataset: GoldDataset,
    decider_factory: DeciderFactory,
    rng: np.random.Generator,
    n_folds: int = 5,
    max_depth: Optional[int] = None,
    macro: bool = False,
) -> CrossValidationReport:
    """Seed-level k-fold protocol: fold i tests on set i, validates on the
    cyclically previous set, and trains on the rest.

    Testing on held-out seeds makes the evaluation zero-shot: the decider
    never saw any labeled pair of a test seed.
    """
    seeds = dataset.seeds()
    if len(seeds) < n_folds:
        raise ValueError(f"need at least {n_folds} seed entities, got {len(seeds)}")
    sets = fold_seed_sets(seeds, n_folds, rng)
    outcomes: list[FoldOutcome] = []
    for i in range(n_folds):
        test_seeds = sets[i]
        val_seeds = sets[(i - 1) % n_folds]
        train_seeds = [
            s for j, fold in enumerate(sets) if j not in (i, (i - 1) % n_folds) for s in fold
        ]
        train_pairs = [p for s in train_seeds for p in dataset.by_seed[s]]
        val_pairs = [p for s in val_seeds for p in dataset.by_seed[s]]
        decider = decider_factory(train_pairs, val_pairs)
        results, pooled, metrics = evaluate_seeds(
            store, dataset, test_seeds, decider, max_depth=max_depth, macro=macro
        )
        outcomes.append(
            FoldOutcome(
                fold=i + 1,
                test_seeds=list(test_seeds),
                train_pairs=train_pairs,
                results=results,
                breakdown=pooled,
                metrics=metrics,
            )
        )
    return CrossValidationReport(
        folds=outcomes, aggregate=_aggregate([o.metrics for o in outcomes])
    )


def transfer_run(
    store: KGStore,
    train_ds: GoldDataset,
    test_ds: GoldDataset,
    decider_factory: DeciderFactory,
    rng: np.random.Generator,
    val_fraction: float = 0.2,
    max_depth: Optional[int] = None,
    macro: bool = False,
) -> tuple[MetricsReport, dict[EntityId, ExpansionResult], list[LabeledPair]]:
    """Train once on a seed-level split of one dataset, evaluate on every
    seed of the other."""
    if train_ds.name == test_ds.name:
        raise ValueError("transfer requires two distinct datasets")
    seeds = train_ds.seeds()
    shuffled = list(seeds)
    rng.shuffle(shuffled)
    n_val = max(1, int(round(val_fraction * len(shuffled))))
    val_seeds = shuffled[:n_val]
    train_seeds = shuffled[n_val:]
    train_pairs = [p for s in train_seeds for p in train_ds.by_seed[s]]
    val_pairs = [p for s in val_seeds for p in train_ds.by_seed[s]]
    decider = decider_factory(train_pairs, val_pairs)
    results, _, metrics = evaluate_seeds(
        store, test_ds, test_ds.seeds(), decider, max_depth=max_depth, macro=macro
    )
    return metrics, results, train_pairs


@dataclass
class SeenUnseenReport:
    seen: MetricsReport
    unseen: MetricsReport
    seen_rate: float


def seen_unseen_breakdown(
    results: dict[EntityId, ExpansionResult],
    gold: GoldDataset,
    training_pairs: Sequence[LabeledPair],
) -> SeenUnseenReport:
    """Split gold test pairs by whether their reached entity appeared as a
    reached entity in the training pairs, and score each group."""
    seen_entities = {p.reached for p in training_pairs}
    seen_cb, unseen_cb = ConfusionBreakdown(), ConfusionBreakdown()
    n_seen = n_unseen = 0
    for seed, result in results.items():
        for pair in gold.by_seed.get(seed, []):
            target = seen_cb if pair.reached in seen_entities else unseen_cb
            if pair.reached in seen_entities:
                n_seen += 1
            else:
                n_unseen += 1
            target.add(score_run(result, [pair]))
    total = n_seen + n_unseen
    return SeenUnseenReport(
        seen=compute_metrics(seen_cb),
        unseen=compute_metrics(unseen_cb),
        seen_rate=n_seen / total if total else 0.0,
    )


def write_metrics_records(
    rows: Sequence[tuple[str, str, MetricsReport]], fp: IO[str]
) -> None:
    """Machine-readable lines: `fold TAB model TAB P TAB R TAB F1 TAB ACC`."""
    for fold, model, m in rows:
        fp.write(
            f"{fold}\t{model}\t{m.precision:.6f}\t{m.recall:.6f}\t{m.f1:.6f}\t{m.accuracy:.6f}\n"
        )


def format_metrics_table(rows: Sequence[tuple[str, str, MetricsReport]]) -> str:
    lines = [f"{'fold':<10} {'model':<16} {'P':>8} {'R':>8} {'F1':>8} {'ACC':>8}"]
    for fold, model, m in rows:
        lines.append(
            f"{fold:<10} {model:<16} {m.precision:>8.4f} {m.recall:>8.4f} "
            f"{m.f1:>8.4f} {m.accuracy:>8.4f}"
        )
    return "\n".join(lines) + "\n"
