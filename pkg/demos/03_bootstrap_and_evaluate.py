"""Full bootstrapping loop: cross-validated pruning with three deciders.

Reuses the synthetic world idea from demo 02, but grows a two-level class
tree under every seed so that paths, unexplored nodes, and the
pruning-aware metrics all come into play. Compares the analogy decider
against the depth and degree/distance threshold baselines under the same
5-fold seed-level protocol.
"""

import io

import numpy as np

from kgprune import (
    EmbeddingTable,
    GoldDataset,
    InferenceConfig,
    InputLayout,
    LabeledPair,
    ModelConfig,
    Padding,
    PathMode,
    ThresholdPrunerConfig,
    cross_validate,
    depth_decider,
    ingest_triples,
    threshold_decider,
)
from kgprune.cli import RunConfig, make_decider_factory
from kgprune.pairs import Decision, ExpansionPath

DIM = 16
rng = np.random.default_rng(7)

KEEP_DIR = np.eye(DIM)[0]
PRUNE_DIR = np.eye(DIM)[1]


def build_world(n_seeds=30):
    table = EmbeddingTable(dim=DIM)
    triples, pairs = [], []
    for i in range(n_seeds):
        seed = f"seed{i}"
        base = rng.normal(scale=2.5, size=DIM)
        table.add(seed, base)
        for c, (decision, direction) in enumerate(
            [(Decision.KEEP, KEEP_DIR), (Decision.KEEP, KEEP_DIR),
             (Decision.PRUNE, PRUNE_DIR), (Decision.PRUNE, PRUNE_DIR)]
        ):
            child = f"{seed}c{c}"
            table.add(child, base + direction + rng.normal(scale=0.08, size=DIM))
            triples.append(f"{child}\tP279\t{seed}")
            pairs.append(LabeledPair(seed, child, decision, depth=1,
                                     path=ExpansionPath((seed, child))))
            if decision is Decision.KEEP:
                for tag, (gd, gdir) in {"k": (Decision.KEEP, KEEP_DIR),
                                        "p": (Decision.PRUNE, PRUNE_DIR)}.items():
                    grand = f"{child}g{tag}"
                    cv = np.asarray(table.raw(child))
                    table.add(grand, cv + gdir + rng.normal(scale=0.08, size=DIM))
                    triples.append(f"{grand}\tP279\t{child}")
                    pairs.append(LabeledPair(seed, grand, gd, depth=2,
                                             path=ExpansionPath((seed, child, grand))))
    store = ingest_triples(io.StringIO("\n".join(triples) + "\n"))
    return store, table, GoldDataset.from_pairs("synthetic", pairs)


def main():
    store, table, dataset = build_world()
    print(f"{len(dataset.seeds())} seeds, {len(dataset)} gold decisions")

    layout = InputLayout(path_mode=PathMode.PATH, side_length=3,
                         padding=Padding.BETWEEN, dim=DIM)
    run_cfg = RunConfig(
        model=ModelConfig(n1=4, n2=2, side_length=3, dim=DIM,
                          learning_rate=0.005, seed=1),
        inference=InferenceConfig(n=10, m=10, layout=layout),
        epochs=30,
    )
    contenders = {
        "analogy": make_decider_factory(run_cfg, store, table),
        "depth<=1": lambda tr, va: depth_decider(1),
        "depth<=2": lambda tr, va: depth_decider(2),
        "threshold": lambda tr, va: threshold_decider(
            ThresholdPrunerConfig(alpha=1.2), table, store
        ),
    }

    print(f"\n{'model':<12} {'P':>7} {'R':>7} {'F1':>7} {'ACC':>7}")
    for name, factory in contenders.items():
        report = cross_validate(store, dataset, factory, np.random.default_rng(5))
        m, s = report.aggregate.mean, report.aggregate.std
        print(f"{name:<12} {m.precision:>7.3f} {m.recall:>7.3f} "
              f"{m.f1:>7.3f} {m.accuracy:>7.3f}  (F1 std {s.f1:.3f})")


if __name__ == "__main__":
    main()
