"""Tiny two-convolution analogy classifier, implemented from scratch.

The input is a (d, 2L) matrix of embedding columns: L per quadruple side.
Convolution 1 applies n1 filters with a (1, L) kernel and stride (1, L),
collapsing each side to one column per filter (per-pair dissimilarities).
Convolution 2 applies n2 filters with a (2, 2) kernel and stride (2, 2),
comparing the two sides two embedding rows at a time. A single fully
connected unit with a sigmoid produces the validity score.

Everything runs in float64 numpy: forward, reverse-mode gradients, Adam,
class-weighted binary cross-entropy, early stopping, and Monte Carlo
dropout. The model is small enough that precision beats speed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

_EPS = 1e-7
_CHECKPOINT_MAGIC = b"ANET"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n1: int = 16
    n2: int = 8
    side_length: int = 2
    dim: int = 200
    dropout_rate: float = 0.0
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("filter counts must be at least 1")
        if self.side_length < 2:
            raise ValueError("side length must be at least 2")
        if self.dim % 2 != 0:
            raise ValueError("embedding dimension must be even")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")


def parameter_count(cfg: ModelConfig) -> int:
    """Trainable scalar count: conv1 n1(L+1), conv2 n2(4 n1+1), FC (d/2)n2 + 1."""
    return (
        cfg.n1 * (cfg.side_length + 1)
        + cfg.n2 * (4 * cfg.n1 + 1)
        + (cfg.dim // 2) * cfg.n2
        + 1
    )


@dataclass
class ModelParams:
    w1: np.ndarray  # (n1, L)
    b1: np.ndarray  # (n1,)
    w2: np.ndarray  # (n2, 2, 2, n1)
    b2: np.ndarray  # (n2,)
    w_fc: np.ndarray  # ((d/2) * n2,)
    b_fc: float

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w_fc, np.atleast_1d(self.b_fc)]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def copy(self) -> "ModelParams":
        return ModelParams(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            w_fc=self.w_fc.copy(),
            b_fc=float(self.b_fc),
        )

    @classmethod
    def from_flat(cls, cfg: ModelConfig, flat: np.ndarray) -> "ModelParams":
        shapes = _param_shapes(cfg)
        if flat.size != sum(int(np.prod(s)) for s in shapes):
            raise ValueError("flat vector size does not match the configuration")
        chunks = []
        offset = 0
        for shape in shapes:
            size = int(np.prod(shape))
            chunks.append(flat[offset : offset + size].reshape(shape))
            offset += size
        return cls(
            w1=chunks[0].copy(),
            b1=chunks[1].copy(),
            w2=chunks[2].copy(),
            b2=chunks[3].copy(),
            w_fc=chunks[4].copy(),
            b_fc=float(chunks[5][0]),
        )


def _param_shapes(cfg: ModelConfig) -> list[tuple[int, ...]]:
    return [
        (cfg.n1, cfg.side_length),
        (cfg.n1,),
        (cfg.n2, 2, 2, cfg.n1),
        (cfg.n2,),
        ((cfg.dim // 2) * cfg.n2,),
        (1,),
    ]


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases.

    Fan-in: L for conv1 (1xLx1 kernel), 4 n1 for conv2 (2x2xn1),
    (d/2) n2 for the fully connected layer.
    """
    w1 = rng.normal(0.0, np.sqrt(2.0 / cfg.side_length), size=(cfg.n1, cfg.side_length))
    w2 = rng.normal(0.0, np.sqrt(2.0 / (4 * cfg.n1)), size=(cfg.n2, 2, 2, cfg.n1))
    fc_size = (cfg.dim // 2) * cfg.n2
    w_fc = rng.normal(0.0, np.sqrt(2.0 / fc_size), size=(fc_size,))
    return ModelParams(
        w1=w1,
        b1=np.zeros(cfg.n1),
        w2=w2,
        b2=np.zeros(cfg.n2),
        w_fc=w_fc,
        b_fc=0.0,
    )


@dataclass
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    mask1: Optional[np.ndarray]
    h1: np.ndarray
    z2: np.ndarray
    mask2: Optional[np.ndarray]
    flat: np.ndarray
    logit: np.ndarray
    score: np.ndarray


def forward(
    params: ModelParams,
    cfg: ModelConfig,
    x: np.ndarray,
    dropout_active: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardCache:
    """Batched forward pass; ``x`` has shape (B, d, 2L) or (d, 2L).

    Inverted dropout is applied after each convolution when active, so
    deterministic inference requires no rescaling.
    """
    if x.ndim == 2:
        x = x[np.newaxis]
    batch, d, width = x.shape
    length = cfg.side_length
    if d != cfg.dim or width != 2 * length:
        raise ValueError(f"input shape {x.shape[1:]} does not match ({cfg.dim}, {2 * length})")
    p = cfg.dropout_rate if dropout_active else 0.0
    if p > 0.0 and rng is None:
        raise ValueError("dropout requires an RNG")

    xr = x.reshape(batch, d, 2, length)
    z1 = np.einsum("bdtl,fl->bdtf", xr, params.w1) + params.b1
    a1 = np.maximum(z1, 0.0)
    mask1 = None
    if p > 0.0:
        mask1 = (rng.random(a1.shape) >= p) / (1.0 - p)
        a1 = a1 * mask1
    h1 = a1.reshape(batch, d // 2, 2, 2, cfg.n1)
    z2 = np.einsum("nuijc,fijc->nuf", h1, params.w2) + params.b2
    a2 = np.maximum(z2, 0.0)
    mask2 = None
    if p > 0.0:
        mask2 = (rng.random(a2.shape) >= p) / (1.0 - p)
        a2 = a2 * mask2
    flat = a2.reshape(batch, -1)
    logit = flat @ params.w_fc + params.b_fc
    score = 1.0 / (1.0 + np.exp(-logit))
    return ForwardCache(
        x=x, z1=z1, mask1=mask1, h1=h1, z2=z2, mask2=mask2, flat=flat,
        logit=logit, score=score,
    )


def forward_score(params: ModelParams, cfg: ModelConfig, x: np.ndarray) -> float:
    """Deterministic single-input score."""
    return float(forward(params, cfg, x).score[0])


def loss_and_grads(
    params: ModelParams,
    cfg: ModelConfig,
    inputs: np.ndarray,
    labels: np.ndarray,
    class_weights: tuple[float, float] = (1.0, 1.0),
    dropout_active: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, ModelParams]:
    """Class-weighted binary cross-entropy and its gradients.

    ``class_weights`` is (weight of valid/1 labels, weight of invalid/0
    labels); the loss is the plain batch mean of the weighted per-example
    terms, so scaling a class weight scales that class's gradient
    contribution linearly. Scores are clamped to [1e-7, 1 - 1e-7] before
    the logarithms.
    """
    cache = forward(params, cfg, inputs, dropout_active=dropout_active, rng=rng)
    labels = np.asarray(labels, dtype=np.float64)
    batch = cache.score.shape[0]
    w_valid, w_invalid = class_weights
    weights = np.where(labels == 1.0, w_valid, w_invalid)

    s = np.clip(cache.score, _EPS, 1.0 - _EPS)
    loss = float(np.mean(weights * -(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))))

    inside = (cache.score > _EPS) & (cache.score < 1.0 - _EPS)
    dloss_ds = weights * (-(labels / s) + (1.0 - labels) / (1.0 - s)) / batch
    dlogit = dloss_ds * inside * cache.score * (1.0 - cache.score)

    grads = _backward(params, cfg, cache, dlogit)
    return loss, grads


def _backward(
    params: ModelParams, cfg: ModelConfig, cache: ForwardCache, dlogit: np.ndarray
) -> ModelParams:
    batch, d, _ = cache.x.shape
    length = cfg.side_length

    dw_fc = cache.flat.T @ dlogit
    db_fc = float(np.sum(dlogit))
    dflat = np.outer(dlogit, params.w_fc)

    da2 = dflat.reshape(batch, d // 2, cfg.n2)
    if cache.mask2 is not None:
        da2 = da2 * cache.mask2
    dz2 = da2 * (cache.z2 > 0.0)
    dw2 = np.einsum("nuf,nuijc->fijc", dz2, cache.h1)
    db2 = dz2.sum(axis=(0, 1))

    dh1 = np.einsum("nuf,fijc->nuijc", dz2, params.w2)
    da1 = dh1.reshape(batch, d, 2, cfg.n1)
    if cache.mask1 is not None:
        da1 = da1 * cache.mask1
    dz1 = da1 * (cache.z1 > 0.0)
    xr = cache.x.reshape(batch, d, 2, length)
    dw1 = np.einsum("bdtf,bdtl->fl", dz1, xr)
    db1 = dz1.sum(axis=(0, 1, 2))

    return ModelParams(w1=dw1, b1=db1, w2=dw2, b2=db2, w_fc=dw_fc, b_fc=db_fc)


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        def z() -> ModelParams:
            return ModelParams(
                w1=np.zeros_like(params.w1),
                b1=np.zeros_like(params.b1),
                w2=np.zeros_like(params.w2),
                b2=np.zeros_like(params.b2),
                w_fc=np.zeros_like(params.w_fc),
                b_fc=0.0,
            )

        return cls(m=z(), v=z())


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update over every parameter array."""
    state.step += 1
    t = state.step
    for name in ("w1", "b1", "w2", "b2", "w_fc", "b_fc"):
        g = getattr(grads, name)
        m = beta1 * getattr(state.m, name) + (1.0 - beta1) * g
        v = beta2 * getattr(state.v, name) + (1.0 - beta2) * np.square(g)
        setattr(state.m, name, m)
        setattr(state.v, name, v)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        update = learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        if name == "b_fc":
            params.b_fc = float(params.b_fc - update)
        else:
            setattr(params, name, getattr(params, name) - update)


def class_weights_for(labels: np.ndarray) -> tuple[float, float]:
    """Balanced weights total / (2 * count_c); 1.0 for an absent class."""
    labels = np.asarray(labels)
    total = labels.size
    n_valid = int(np.sum(labels == 1))
    n_invalid = total - n_valid
    w_valid = total / (2.0 * n_valid) if n_valid else 1.0
    w_invalid = total / (2.0 * n_invalid) if n_invalid else 1.0
    return w_valid, w_invalid


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_epoch: int = 0


def default_patience(epochs: int) -> int:
    return 5 if epochs <= 50 else 20


def train(
    cfg: ModelConfig,
    train_inputs: np.ndarray,
    train_labels: np.ndarray,
    val_inputs: Optional[np.ndarray] = None,
    val_labels: Optional[np.ndarray] = None,
    epochs: int = 50,
    batch_size: int = 32,
    patience: Optional[int] = None,
) -> tuple[ModelParams, TrainHistory]:
    """Adam training with early stopping on the validation loss.

    Batches are reshuffled every epoch from the config-seeded RNG, making
    runs bit-reproducible. Returns the parameter snapshot of the best
    validation epoch (last epoch when no validation set is given).
    """
    if train_inputs.ndim != 3 or train_inputs.shape[0] == 0:
        raise ValueError("training set must be a non-empty (B, d, 2L) array")
    if patience is None:
        patience = default_patience(epochs)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    state = AdamState.zeros_like(params)
    weights = class_weights_for(train_labels)
    has_val = val_inputs is not None and len(val_inputs) > 0

    history = TrainHistory()
    best_params = params.copy()
    since_improvement = 0
    n = train_inputs.shape[0]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grads = loss_and_grads(
                params,
                cfg,
                train_inputs[idx],
                train_labels[idx],
                class_weights=weights,
                dropout_active=cfg.dropout_rate > 0.0,
                rng=rng,
            )
            adam_step(params, grads, state, cfg.learning_rate)
            epoch_loss += loss * len(idx)
        history.train_loss.append(epoch_loss / n)

        if has_val:
            val_cache = forward(params, cfg, val_inputs)
            vl = np.asarray(val_labels, dtype=np.float64)
            s = np.clip(val_cache.score, _EPS, 1.0 - _EPS)
            w = np.where(vl == 1.0, weights[0], weights[1])
            val_loss = float(np.mean(w * -(vl * np.log(s) + (1.0 - vl) * np.log(1.0 - s))))
            history.val_loss.append(val_loss)
            if val_loss < history.best_val_loss:
                history.best_val_loss = val_loss
                history.best_epoch = epoch
                best_params = params.copy()
                since_improvement = 0
            else:
                since_improvement += 1
                if since_improvement >= patience:
                    history.stopped_epoch = epoch
                    return best_params, history
        else:
            history.best_epoch = epoch
            best_params = params.copy()
    history.stopped_epoch = epochs
    return best_params, history


def predict(
    params: ModelParams,
    cfg: ModelConfig,
    x: np.ndarray,
    mc_samples: int = 10,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Scores for a batch; Monte Carlo dropout when the config has p > 0.

    With dropout, the returned score is the mean over ``mc_samples``
    stochastic forward passes.
    """
    single = x.ndim == 2
    if cfg.dropout_rate == 0.0:
        scores = forward(params, cfg, x).score
    else:
        if mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        acc = np.zeros(1 if single else x.shape[0])
        for _ in range(mc_samples):
            acc += forward(params, cfg, x, dropout_active=True, rng=rng).score
        scores = acc / mc_samples
    return scores[0] if single else scores


def save_checkpoint(params: ModelParams, cfg: ModelConfig, fp: IO[bytes]) -> None:
    """Versioned binary checkpoint: magic, version, config, then float64
    parameters in the order w1, b1, w2, b2, w_fc, b_fc."""
    fp.write(_CHECKPOINT_MAGIC)
    fp.write(struct.pack("<I", _CHECKPOINT_VERSION))
    fp.write(
        struct.pack(
            "<IIIIddQ",
            cfg.n1,
            cfg.n2,
            cfg.side_length,
            cfg.dim,
            cfg.dropout_rate,
            cfg.learning_rate,
            cfg.seed,
        )
    )
    fp.write(params.flatten().astype("<f8").tobytes())


def load_checkpoint(fp: IO[bytes]) -> tuple[ModelParams, ModelConfig]:
    magic = fp.read(4)
    if magic != _CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    (version,) = struct.unpack("<I", fp.read(4))
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    n1, n2, length, dim, dropout_rate, learning_rate, seed = struct.unpack(
        "<IIIIddQ", fp.read(4 * 4 + 8 * 2 + 8)
    )
    cfg = ModelConfig(
        n1=n1,
        n2=n2,
        side_length=length,
        dim=dim,
        dropout_rate=dropout_rate,
        learning_rate=learning_rate,
        seed=seed,
    )
    count = parameter_count(cfg)
    data = fp.read(8 * count)
    if len(data) != 8 * count:
        raise ValueError("truncated checkpoint")
    flat = np.frombuffer(data, dtype="<f8")
    return ModelParams.from_flat(cfg, flat), cfg


def checkpoint_summary(cfg: ModelConfig, history: TrainHistory) -> str:
    lines = [
        f"n1={cfg.n1} n2={cfg.n2} side_length={cfg.side_length} dim={cfg.dim}",
        f"dropout_rate={cfg.dropout_rate} learning_rate={cfg.learning_rate} seed={cfg.seed}",
        f"parameter_count={parameter_count(cfg)}",
        f"best_epoch={history.best_epoch}",
        f"best_val_loss={history.best_val_loss}",
    ]
    return "\n".join(lines) + "\n"
