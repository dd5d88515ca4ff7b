"""Acceptance suite: one pass/fail line per criterion.

Each test prints its verdict to the real stdout so the lines survive
pytest's output capture.
"""

import sys
import time

import numpy as np
import pytest

from kgprune.analogy import (
    AnalogyConfiguration,
    InputLayout,
    Padding,
    PairRef,
    PathMode,
    Validity,
    aggregate_votes,
    build_inference_quadruples,
    quadruple_validity,
)
from kgprune.convnet import (
    ModelConfig,
    ModelParams,
    init_params,
    loss_and_grads,
    parameter_count,
)
from kgprune.deciders import (
    Concatenation,
    InferenceConfig,
    MLPConfig,
    analogy_decider,
    depth_decider,
    mlp_parameter_count,
)
from kgprune.embeddings import EmbeddingTable
from kgprune.evaluation import (
    ConfusionBreakdown,
    GoldDataset,
    compute_metrics,
    cross_validate,
)
from kgprune.expansion import expand_downward
from kgprune.pairs import Decision, ExpansionPath, LabeledPair

from conftest import make_store, random_table
from test_deciders import constant_model
from test_evaluation import duplicate_formula
from test_expansion import hash_decider, random_store, recursive_oracle

K, P = Decision.KEEP, Decision.PRUNE


def report(number, ok, description):
    verdict = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number}: {verdict} - {description}", file=sys.__stdout__)
    assert ok, f"acceptance criterion {number} failed: {description}"


def test_acceptance_1_parameter_counts():
    cnn = [
        (ModelConfig(n1=16, n2=8, side_length=2, dim=200), 1369),
        (ModelConfig(n1=16, n2=8, side_length=4, dim=200), 1401),
        (ModelConfig(n1=4, n2=2, side_length=3, dim=200), 251),
    ]
    mlp = [
        (MLPConfig(hidden_layers=(200, 100, 50), concatenation=Concatenation.HORIZONTAL, dim=200), 105401),
        (MLPConfig(hidden_layers=(200, 100, 50), concatenation=Concatenation.TRANSLATION, dim=200), 65401),
    ]
    ok = all(parameter_count(cfg) == want for cfg, want in cnn) and all(
        mlp_parameter_count(cfg) == want for cfg, want in mlp
    )
    report(1, ok, "parameter counts 1369/1401/251 and MLP 105401/65401, exact")


def test_acceptance_2_configuration_truth_tables():
    V, I, X = Validity.VALID, Validity.INVALID, Validity.EXCLUDED
    C1, C2, C3 = AnalogyConfiguration.C1, AnalogyConfiguration.C2, AnalogyConfiguration.C3
    expected = {
        (C1, K, K): V, (C1, K, P): I, (C1, P, K): X, (C1, P, P): X,
        (C2, K, K): V, (C2, K, P): I, (C2, P, K): X, (C2, P, P): I,
        (C3, K, K): V, (C3, K, P): I, (C3, P, K): I, (C3, P, P): V,
    }
    ok = all(
        quadruple_validity(cfg, left, right) is want
        for (cfg, left, right), want in expected.items()
    ) and len(expected) == 12
    report(2, ok, "all 12 configuration x decision validity cases")


def test_acceptance_3_gradient_correctness():
    rng = np.random.default_rng(2024)
    ok = True
    for _ in range(20):
        cfg = ModelConfig(
            n1=int(rng.integers(1, 5)),
            n2=int(rng.integers(1, 3)),
            side_length=int(rng.integers(2, 5)),
            dim=2 * int(rng.integers(1, 5)),
            dropout_rate=0.0,
        )
        params = init_params(cfg, rng)
        params.b1 = rng.normal(size=cfg.n1) * 0.1
        params.b2 = rng.normal(size=cfg.n2) * 0.1
        params.b_fc = float(rng.normal()) * 0.1
        batch = int(rng.integers(1, 4))
        x = rng.normal(size=(batch, cfg.dim, 2 * cfg.side_length))
        y = rng.integers(0, 2, size=batch).astype(float)
        _, grads = loss_and_grads(params, cfg, x, y)
        flat, grad_flat = params.flatten(), grads.flatten()
        h = 1e-6
        for k in range(flat.size):
            bumped = flat.copy()
            bumped[k] += h
            up, _ = loss_and_grads(ModelParams.from_flat(cfg, bumped), cfg, x, y)
            bumped[k] -= 2 * h
            down, _ = loss_and_grads(ModelParams.from_flat(cfg, bumped), cfg, x, y)
            numeric = (up - down) / (2 * h)
            if abs(grad_flat[k] - numeric) > 1e-8 + 1e-4 * abs(numeric):
                ok = False
    report(3, ok, "20 random configs, finite differences within 1e-4 rel / 1e-8 abs")


def test_acceptance_4_metric_oracle_equivalence():
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(1000):
        cb = ConfusionBreakdown(*(int(v) for v in rng.integers(0, 6, size=6)))
        m = compute_metrics(cb)
        p, r, f1, acc = duplicate_formula(cb)
        if (m.precision, m.recall, m.f1, m.accuracy) != (p, r, f1, acc):
            ok = False
    fixture = compute_metrics(
        ConfusionBreakdown(
            kept_gold_keep=2,
            kept_gold_prune=1,
            pruned_gold_keep=1,
            pruned_gold_prune=1,
            unexplored_gold_keep=1,
            unexplored_gold_prune=1,
        )
    )
    ok = ok and (
        abs(fixture.precision - 2 / 3) < 1e-12
        and abs(fixture.recall - 1 / 2) < 1e-12
        and abs(fixture.accuracy - 3 / 7) < 1e-12
        and abs(fixture.f1 - 4 / 7) < 1e-12
    )
    report(4, ok, "1000 random breakdowns equal independent formulas; worked fixture")


def test_acceptance_5_expansion_oracle_equivalence():
    sys.setrecursionlimit(20000)
    rng = np.random.default_rng(11)
    start = time.monotonic()
    ok = True
    for trial in range(200):
        store = random_store(
            rng, n_nodes=200, n_edges=400, cycles=trial % 10 == 0
        )
        entities = list(store.entities())
        seed = entities[int(rng.integers(0, len(entities)))]
        result = expand_downward(store, seed, hash_decider)
        expected_fates, expected_calls = recursive_oracle(store, seed, hash_decider)
        got = {e: (r.fate, r.depth, r.path.nodes) for e, r in result.fates.items()}
        if got != expected_fates or len(result.visit_order) != len(expected_calls):
            ok = False
    elapsed = time.monotonic() - start
    ok = ok and elapsed < 30.0
    report(5, ok, f"200 random DAGs match recursive oracle ({elapsed:.1f}s < 30s)")


def test_acceptance_6_vote_aggregation_semantics():
    C1, C2, C3 = AnalogyConfiguration.C1, AnalogyConfiguration.C2, AnalogyConfiguration.C3
    decision, score = aggregate_votes(C3, [(0.9, P), (0.9, K)], 0.5)
    ok = abs(score - 0.5) < 1e-12 and decision is P

    rng = np.random.default_rng(3)
    entities = [f"Q{i}" for i in range(61)]
    table = random_table(rng, entities, 4)
    pool = [
        LabeledPair(entities[i], f"R{i}", K if i < 30 else P) for i in range(60)
    ]
    unknown = PairRef(seed="Q60", reached="Rx")
    n = 20
    ok = ok and len(build_inference_quadruples(unknown, pool, C1, n, table)) == n
    ok = ok and len(build_inference_quadruples(unknown, pool, C2, n, table)) == 2 * n
    ok = ok and len(build_inference_quadruples(unknown, pool, C3, n, table)) == 2 * n
    report(6, ok, "C3 inversion fixture prunes at 0.5; C1 gives N votes, C2/C3 give 2N")


def synthetic_world(rng, n_clusters=4, seeds_per_cluster=10, dim=16):
    """Embedding space where keeping is a shared offset direction.

    Every seed grows a two-level tree: four children (two keep, two prune)
    and two grandchildren under each keep child (one keep, one prune). Keep
    nodes sit at parent + u, prune nodes at parent + v, with small noise.
    """
    u = np.zeros(dim)
    u[0] = 1.0
    v = np.zeros(dim)
    v[1] = 1.0
    table = EmbeddingTable(dim=dim)
    triples, pairs = [], []
    centers = rng.normal(scale=3.0, size=(n_clusters, dim))
    noise = 0.08

    def place(name, base, direction):
        table.add(name, base + direction + rng.normal(scale=noise, size=dim))

    for cluster in range(n_clusters):
        for j in range(seeds_per_cluster):
            seed = f"S{cluster}_{j}"
            base = centers[cluster] + rng.normal(scale=0.5, size=dim)
            table.add(seed, base)
            sv = np.asarray(table.raw(seed))
            child_idx = 0
            for decision, direction in ((K, u), (K, u), (P, v), (P, v)):
                child = f"{seed}c{child_idx}"
                child_idx += 1
                place(child, sv, direction)
                triples.append(f"{child}\tP279\t{seed}")
                pairs.append(
                    LabeledPair(seed, child, decision, depth=1,
                                path=ExpansionPath((seed, child)))
                )
                if decision is K:
                    cv_ = np.asarray(table.raw(child))
                    for gd, gdir in ((K, u), (P, v)):
                        grand = f"{child}g{'k' if gd is K else 'p'}"
                        place(grand, cv_, gdir)
                        triples.append(f"{grand}\tP279\t{child}")
                        pairs.append(
                            LabeledPair(seed, grand, gd, depth=2,
                                        path=ExpansionPath((seed, child, grand)))
                        )
    store = make_store(triples)
    return store, table, GoldDataset.from_pairs("synthetic", pairs)


def test_acceptance_7_zero_shot_synthetic_end_to_end():
    start = time.monotonic()
    rng = np.random.default_rng(123)
    store, table, dataset = synthetic_world(rng)

    dim = 16
    layout = InputLayout(
        path_mode=PathMode.PATH, side_length=3, padding=Padding.BETWEEN, dim=dim
    )
    model_cfg = ModelConfig(
        n1=4, n2=2, side_length=3, dim=dim, learning_rate=0.005, seed=1
    )
    icfg = InferenceConfig(n=10, m=10, layout=layout)

    from kgprune.cli import RunConfig, make_decider_factory

    run_cfg = RunConfig(model=model_cfg, inference=icfg, epochs=30, batch_size=32)
    analogy_factory = make_decider_factory(run_cfg, store, table)

    cv_rng = np.random.default_rng(5)
    analogy = cross_validate(store, dataset, analogy_factory, cv_rng)
    analogy_f1 = analogy.aggregate.mean.f1

    best_depth_f1 = 0.0
    for k in (1, 2):
        depth = cross_validate(
            store, dataset, lambda tr, va: depth_decider(k), np.random.default_rng(5)
        )
        best_depth_f1 = max(best_depth_f1, depth.aggregate.mean.f1)

    elapsed = time.monotonic() - start
    ok = analogy_f1 >= 0.90 and analogy_f1 > best_depth_f1 and elapsed <= 120.0
    report(
        7,
        ok,
        f"path-analogy CV mean F1 {analogy_f1:.3f} >= 0.90 and beats best depth "
        f"F1 {best_depth_f1:.3f} ({elapsed:.0f}s <= 120s)",
    )


def test_acceptance_8_determinism(tmp_path):
    from kgprune.cli import main

    rng = np.random.default_rng(4)
    lines, gold = [], []
    entities = []
    for s in range(10):
        entities.append(f"S{s}")
        for c in range(4):
            entities.append(f"S{s}C{c}")
            lines.append(f"S{s}C{c}\tP279\tS{s}")
            gold.append(f"S{s}\tS{s}C{c}\t{'keep' if c < 2 else 'prune'}\t1")
    (tmp_path / "triples.tsv").write_text("\n".join(lines) + "\n")
    (tmp_path / "gold.tsv").write_text("\n".join(gold) + "\n")
    emb = [
        e + " " + " ".join(f"{x:.6f}" for x in rng.normal(size=4)) for e in entities
    ]
    (tmp_path / "emb.txt").write_text("\n".join(emb) + "\n")
    out = tmp_path / "out"
    config = (
        f"[paths]\ntriples = {tmp_path / 'triples.tsv'}\n"
        f"embeddings = {tmp_path / 'emb.txt'}\ndataset = {tmp_path / 'gold.tsv'}\n"
        f"output = {out}\n\n[decider]\nkind = analogy\n\n"
        "[model]\ndim = 4\nn1 = 2\nn2 = 1\n\n[inference]\nn = 2\nm = 2\n\n"
        "[training]\nepochs = 3\n\n[run]\nseed = 7\n"
    )
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(config)

    artifacts = {}
    ok = True
    for phase in ("first", "second"):
        assert main(["--config", str(cfg_path), "ingest"]) == 0
        assert main(["--config", str(cfg_path), "train"]) == 0
        assert main(["--config", str(cfg_path), "cv"]) == 0
        blobs = tuple(
            (out / name).read_bytes()
            for name in ("store.snapshot", "model.ckpt", "cv_report.tsv")
        )
        artifacts[phase] = blobs
    ok = artifacts["first"] == artifacts["second"]
    report(8, ok, "repeated ingest/train/cv runs are byte-identical per seed")


@pytest.mark.skip(
    reason="optional tier: needs the released gold datasets and multi-GB "
    "pre-trained embeddings, which are not available at desk scale"
)
def test_acceptance_9_published_benchmark_reproduction():
    pass
