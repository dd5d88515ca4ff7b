"""Train the analogy classifier on synthetic labeled pairs.

Keep decisions follow a shared offset direction in embedding space, so a
classifier trained on some seeds transfers zero-shot to unseen ones. The
script builds quadruples under configuration C2, trains the small
convolutional network, and inspects a few votes.
"""

import numpy as np

from kgprune import (
    AnalogyConfiguration,
    EmbeddingTable,
    InputLayout,
    LabeledPair,
    ModelConfig,
    PairRef,
    aggregate_votes,
    assemble_input,
    build_inference_quadruples,
    build_training_set,
    parameter_count,
    predict,
    train,
)
from kgprune.pairs import Decision

DIM = 8
N_SEEDS = 24
rng = np.random.default_rng(42)

keep_direction = np.zeros(DIM)
keep_direction[0] = 1.0
prune_direction = np.zeros(DIM)
prune_direction[1] = 1.0


def build_world():
    table = EmbeddingTable(dim=DIM)
    pairs = []
    for i in range(N_SEEDS):
        seed = f"seed{i}"
        base = rng.normal(scale=2.0, size=DIM)
        table.add(seed, base)
        for j, (decision, direction) in enumerate(
            [(Decision.KEEP, keep_direction), (Decision.PRUNE, prune_direction)] * 2
        ):
            reached = f"seed{i}_n{j}"
            table.add(reached, base + direction + rng.normal(scale=0.05, size=DIM))
            pairs.append(LabeledPair(seed, reached, decision))
    return table, pairs


def main():
    table, pairs = build_world()
    held_out = [p for p in pairs if p.seed in ("seed22", "seed23")]
    training = [p for p in pairs if p not in held_out]

    layout = InputLayout(dim=DIM)
    quadruples = build_training_set(AnalogyConfiguration.C2, training, 5, table)
    x = np.stack([assemble_input(q, layout, table) for q in quadruples])
    y = np.array([q.label for q in quadruples], dtype=float)
    print(f"{len(quadruples)} training quadruples, {int(y.sum())} valid")

    cfg = ModelConfig(n1=4, n2=2, side_length=2, dim=DIM, learning_rate=0.01, seed=0)
    print(f"model has {parameter_count(cfg)} trainable parameters")
    params, history = train(cfg, x, y, x, y, epochs=30)
    print(f"best epoch {history.best_epoch}, val loss {history.best_val_loss:.4f}")

    # Zero-shot votes on the held-out seeds: nearest labeled pairs vote on
    # each unknown (seed, reached) query.
    print("\nvotes on held-out seeds:")
    for pair in held_out:
        unknown = PairRef(seed=pair.seed, reached=pair.reached)
        quads = build_inference_quadruples(
            unknown, training, AnalogyConfiguration.C2, 5, table
        )
        inputs = np.stack([assemble_input(q, layout, table) for q, _ in quads])
        scores = np.atleast_1d(predict(params, cfg, inputs))
        votes = [(float(s), left) for s, (_, left) in zip(scores, quads)]
        decision, score = aggregate_votes(AnalogyConfiguration.C2, votes, 0.5)
        flag = "ok " if decision is pair.decision else "MISS"
        print(
            f"  [{flag}] {pair.seed}->{pair.reached}: keep score {score:.3f}, "
            f"decided {decision.value}, gold {pair.decision.value}"
        )


if __name__ == "__main__":
    main()
