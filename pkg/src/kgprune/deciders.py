"""Pruning deciders for the downward expansion.

A decider is a callable ``(seed, reached, path) -> Decision``. This module
packages the analogy-based decider (with or without paths), the depth and
degree/distance threshold baselines, and an MLP baseline sharing the
optimizer and loss machinery of the convnet module.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import convnet
from .analogy import (
    AnalogyConfiguration,
    InputLayout,
    PairRef,
    aggregate_votes,
    assemble_input,
    build_inference_quadruples,
)
from .embeddings import (
    EmbeddingKind,
    EmbeddingTable,
    ProximityMetric,
    make_resolver,
    vector_proximity,
)
from .ids import EntityId
from .pairs import Decision, ExpansionPath, LabeledPair
from .store import Direction, KGStore

DeciderFn = Callable[[EntityId, EntityId, ExpansionPath], Decision]


class MissingPolicy(enum.Enum):
    """What to do when a candidate entity has no embedding vector."""

    PRUNE = "prune"
    ERROR = "error"


@dataclass(frozen=True)
class InferenceConfig:
    """Knobs of the analogy decider's voting procedure."""

    n: int = 20
    threshold: float = 0.5
    configuration: AnalogyConfiguration = AnalogyConfiguration.C1
    layout: InputLayout = field(default_factory=InputLayout)
    metric: ProximityMetric = ProximityMetric.COSINE
    m: int = 20
    mc_samples: int = 10
    missing_policy: MissingPolicy = MissingPolicy.PRUNE
    kind: EmbeddingKind = EmbeddingKind.E1
    vote_seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be at least 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")


def _pair_rng(base_seed: int, seed: EntityId, reached: EntityId) -> np.random.Generator:
    # Per-(seed, reached) stream: decisions are reproducible regardless of
    # the order in which the expansion visits nodes.
    digest = zlib.crc32(f"{seed}\t{reached}".encode("utf-8"))
    return np.random.default_rng((base_seed, digest))


def analogy_decider(
    params: convnet.ModelParams,
    model_cfg: convnet.ModelConfig,
    labeled: Sequence[LabeledPair],
    icfg: InferenceConfig,
    table: EmbeddingTable,
    store: Optional[KGStore] = None,
) -> DeciderFn:
    """Vote-based decider: nearest labeled pairs on the left, the query pair
    on the right, scores averaged into a keeping decision."""
    if not any(p.decision is Decision.KEEP for p in labeled):
        raise ValueError("labeled pool must contain at least one keep pair")
    resolve = make_resolver(table, store, icfg.kind)

    def decide(seed: EntityId, reached: EntityId, path: ExpansionPath) -> Decision:
        needed = set(path.nodes)
        if any(resolve(e) is None for e in needed):
            if icfg.missing_policy is MissingPolicy.PRUNE:
                return Decision.PRUNE
            missing = next(e for e in path.nodes if resolve(e) is None)
            raise KeyError(f"no embedding for entity {missing}")
        unknown = PairRef(seed=seed, reached=reached, path=path)
        quads = build_inference_quadruples(
            unknown, labeled, icfg.configuration, icfg.n, table, icfg.metric
        )
        inputs = np.stack(
            [assemble_input(q, icfg.layout, resolve) for q, _ in quads]
        )
        rng = _pair_rng(icfg.vote_seed, seed, reached)
        scores = np.atleast_1d(
            convnet.predict(params, model_cfg, inputs, icfg.mc_samples, rng)
        )
        votes = [(float(s), left) for s, (_, left) in zip(scores, quads)]
        decision, _ = aggregate_votes(icfg.configuration, votes, icfg.threshold)
        return decision

    return decide


def depth_decider(k: int) -> DeciderFn:
    """Keep any entity reached at depth <= k, prune deeper ones."""
    if k < 1:
        raise ValueError("depth threshold must be at least 1")

    def decide(seed: EntityId, reached: EntityId, path: ExpansionPath) -> Decision:
        return Decision.KEEP if path.depth <= k else Decision.PRUNE

    return decide


@dataclass(frozen=True)
class ThresholdPrunerConfig:
    """Degree/distance pruning rule parameters.

    The rule itself is a documented reconstruction of an external method; the
    parameters play their advertised roles (distance scaling alpha, hub
    tightening beta above degree gamma, absolute degree cap) but the exact
    original composition is not public.
    """

    alpha: float = 1.5
    beta: float = 1.3
    gamma: int = 20
    absolute_degree: int = 200
    kind: EmbeddingKind = EmbeddingKind.E1
    metric: ProximityMetric = ProximityMetric.COSINE
    missing_policy: MissingPolicy = MissingPolicy.PRUNE

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.gamma < 1 or self.absolute_degree < 1:
            raise ValueError("gamma and absolute_degree must be at least 1")


def threshold_decider(
    tc: ThresholdPrunerConfig, table: EmbeddingTable, store: KGStore
) -> DeciderFn:
    """Prune on hard degree caps and on embedding distance beyond a
    seed-relative baseline; high-degree hubs face a tighter distance bound."""
    resolve = make_resolver(table, store, tc.kind)
    baselines: dict[EntityId, float] = {}

    def baseline_for(seed: EntityId) -> float:
        if seed not in baselines:
            sv = resolve(seed)
            distances = []
            if sv is not None:
                for c in store.first_level_classes(seed, Direction.DOWNWARD):
                    cv = resolve(c)
                    if cv is not None:
                        distances.append(vector_proximity(sv, cv, tc.metric))
            baselines[seed] = float(np.mean(distances)) if distances else 0.0
        return baselines[seed]

    def decide(seed: EntityId, reached: EntityId, path: ExpansionPath) -> Decision:
        sv, rv = resolve(seed), resolve(reached)
        if sv is None or rv is None:
            if tc.missing_policy is MissingPolicy.PRUNE:
                return Decision.PRUNE
            raise KeyError(f"no embedding for {seed if sv is None else reached}")
        degree = store.node_degree(reached)
        if degree > tc.absolute_degree:
            return Decision.PRUNE
        baseline = baseline_for(seed)
        bound = tc.alpha * baseline if baseline > 0.0 else tc.alpha
        distance = vector_proximity(sv, rv, tc.metric)
        if distance > bound:
            return Decision.PRUNE
        if degree > tc.gamma and distance > bound / tc.beta:
            return Decision.PRUNE
        return Decision.KEEP

    return decide


# ---------------------------------------------------------------------------
# MLP baseline
# ---------------------------------------------------------------------------


class Concatenation(enum.Enum):
    HORIZONTAL = "horizontal"  # [emb(seed); emb(reached)]
    TRANSLATION = "translation"  # emb(reached) - emb(seed)


@dataclass(frozen=True)
class MLPConfig:
    hidden_layers: tuple[int, ...] = (100,)
    concatenation: Concatenation = Concatenation.HORIZONTAL
    dim: int = 200
    learning_rate: float = 0.001
    dropout_rate: float = 0.0
    kind: EmbeddingKind = EmbeddingKind.E1
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.hidden_layers or any(w < 1 for w in self.hidden_layers):
            raise ValueError("hidden layer widths must be positive")

    @property
    def input_dim(self) -> int:
        return 2 * self.dim if self.concatenation is Concatenation.HORIZONTAL else self.dim


def mlp_parameter_count(cfg: MLPConfig) -> int:
    sizes = [cfg.input_dim, *cfg.hidden_layers, 1]
    return sum(a * b + b for a, b in zip(sizes, sizes[1:]))


@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def mlp_init(cfg: MLPConfig, rng: np.random.Generator) -> MLPParams:
    sizes = [cfg.input_dim, *cfg.hidden_layers, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights=weights, biases=biases)


def mlp_forward(
    params: MLPParams,
    x: np.ndarray,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, list]:
    """ReLU hidden layers, sigmoid output; returns (scores, cache)."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim == 1:
        h = h[np.newaxis]
    cache = []
    n_layers = len(params.weights)
    for i in range(n_layers - 1):
        z = h @ params.weights[i] + params.biases[i]
        a = np.maximum(z, 0.0)
        mask = None
        if dropout_rate > 0.0:
            mask = (rng.random(a.shape) >= dropout_rate) / (1.0 - dropout_rate)
            a = a * mask
        cache.append((h, z, mask))
        h = a
    logit = (h @ params.weights[-1] + params.biases[-1])[:, 0]
    cache.append((h, logit, None))
    return 1.0 / (1.0 + np.exp(-logit)), cache


def mlp_loss_and_grads(
    params: MLPParams,
    x: np.ndarray,
    labels: np.ndarray,
    class_weights: tuple[float, float] = (1.0, 1.0),
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, MLPParams]:
    scores, cache = mlp_forward(params, x, dropout_rate, rng)
    labels = np.asarray(labels, dtype=np.float64)
    batch = scores.shape[0]
    w_valid, w_invalid = class_weights
    weights = np.where(labels == 1.0, w_valid, w_invalid)
    eps = 1e-7
    s = np.clip(scores, eps, 1.0 - eps)
    loss = float(np.mean(weights * -(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))))
    inside = (scores > eps) & (scores < 1.0 - eps)
    dlogit = weights * inside * (scores - labels) * (
        scores * (1.0 - scores) / (s * (1.0 - s))
    ) / batch

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    h_last, _, _ = cache[-1]
    grad_w[-1] = h_last.T @ dlogit[:, np.newaxis]
    grad_b[-1] = np.array([float(np.sum(dlogit))])
    dh = np.outer(dlogit, params.weights[-1][:, 0])
    for i in range(len(params.weights) - 2, -1, -1):
        h_in, z, mask = cache[i]
        da = dh if mask is None else dh * mask
        dz = da * (z > 0.0)
        grad_w[i] = h_in.T @ dz
        grad_b[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T
    return loss, MLPParams(weights=grad_w, biases=grad_b)


def mlp_train(
    cfg: MLPConfig,
    train_inputs: np.ndarray,
    train_labels: np.ndarray,
    val_inputs: Optional[np.ndarray] = None,
    val_labels: Optional[np.ndarray] = None,
    epochs: int = 50,
    batch_size: int = 32,
    patience: Optional[int] = None,
) -> MLPParams:
    """Adam training mirroring the convnet loop (weighted BCE, early stop)."""
    if train_inputs.shape[0] == 0:
        raise ValueError("training set must be non-empty")
    if patience is None:
        patience = convnet.default_patience(epochs)
    rng = np.random.default_rng(cfg.seed)
    params = mlp_init(cfg, rng)
    arrays = params.weights + params.biases
    m_state = [np.zeros_like(a) for a in arrays]
    v_state = [np.zeros_like(a) for a in arrays]
    step = 0
    weights = convnet.class_weights_for(train_labels)
    has_val = val_inputs is not None and len(val_inputs) > 0

    best = MLPParams([w.copy() for w in params.weights], [b.copy() for b in params.biases])
    best_val = float("inf")
    since_improvement = 0
    n = train_inputs.shape[0]
    for _epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = mlp_loss_and_grads(
                params,
                train_inputs[idx],
                train_labels[idx],
                class_weights=weights,
                dropout_rate=cfg.dropout_rate,
                rng=rng,
            )
            step += 1
            grad_arrays = grads.weights + grads.biases
            for j, (a, g) in enumerate(zip(arrays, grad_arrays)):
                m_state[j] = 0.9 * m_state[j] + 0.1 * g
                v_state[j] = 0.999 * v_state[j] + 0.001 * np.square(g)
                m_hat = m_state[j] / (1.0 - 0.9**step)
                v_hat = v_state[j] / (1.0 - 0.999**step)
                a -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
        if has_val:
            scores, _ = mlp_forward(params, val_inputs)
            vl = np.asarray(val_labels, dtype=np.float64)
            eps = 1e-7
            s = np.clip(scores, eps, 1.0 - eps)
            w = np.where(vl == 1.0, weights[0], weights[1])
            val_loss = float(np.mean(w * -(vl * np.log(s) + (1.0 - vl) * np.log(1.0 - s))))
            if val_loss < best_val:
                best_val = val_loss
                best = MLPParams(
                    [w_.copy() for w_ in params.weights],
                    [b.copy() for b in params.biases],
                )
                since_improvement = 0
            else:
                since_improvement += 1
                if since_improvement >= patience:
                    return best
        else:
            best = params
    return best if has_val else params


def mlp_features(
    cfg: MLPConfig,
    resolve,
    seed: EntityId,
    reached: EntityId,
) -> Optional[np.ndarray]:
    sv, rv = resolve(seed), resolve(reached)
    if sv is None or rv is None:
        return None
    if cfg.concatenation is Concatenation.HORIZONTAL:
        return np.concatenate((sv, rv))
    return rv - sv


def mlp_decider(
    cfg: MLPConfig,
    params: MLPParams,
    table: EmbeddingTable,
    store: Optional[KGStore] = None,
    mc_samples: int = 10,
    missing_policy: MissingPolicy = MissingPolicy.PRUNE,
) -> DeciderFn:
    """Keep iff the network's score strictly exceeds 0.5."""
    resolve = make_resolver(table, store, cfg.kind)

    def decide(seed: EntityId, reached: EntityId, path: ExpansionPath) -> Decision:
        features = mlp_features(cfg, resolve, seed, reached)
        if features is None:
            if missing_policy is MissingPolicy.PRUNE:
                return Decision.PRUNE
            raise KeyError(f"no embedding for ({seed}, {reached})")
        if cfg.dropout_rate > 0.0:
            rng = _pair_rng(cfg.seed, seed, reached)
            score = float(
                np.mean(
                    [
                        mlp_forward(params, features, cfg.dropout_rate, rng)[0][0]
                        for _ in range(mc_samples)
                    ]
                )
            )
        else:
            score = float(mlp_forward(params, features)[0][0])
        return Decision.KEEP if score > 0.5 else Decision.PRUNE

    return decide
