import io

import numpy as np
import pytest

from kgprune.convnet import (
    AdamState,
    ModelConfig,
    ModelParams,
    adam_step,
    class_weights_for,
    forward,
    forward_score,
    init_params,
    load_checkpoint,
    loss_and_grads,
    parameter_count,
    predict,
    save_checkpoint,
    train,
)


# ---------------------------------------------------------------------------
# parameter counts and init
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "n1,n2,length,dim,expected",
    [
        (16, 8, 2, 200, 1369),
        (16, 8, 4, 200, 1401),
        (4, 2, 3, 200, 251),
    ],
)
def test_parameter_counts(n1, n2, length, dim, expected):
    cfg = ModelConfig(n1=n1, n2=n2, side_length=length, dim=dim)
    assert parameter_count(cfg) == expected
    assert init_params(cfg, np.random.default_rng(0)).flatten().size == expected


def test_invalid_configs_rejected():
    with pytest.raises(ValueError):
        ModelConfig(n1=0)
    with pytest.raises(ValueError):
        ModelConfig(side_length=1)
    with pytest.raises(ValueError):
        ModelConfig(dim=7)
    with pytest.raises(ValueError):
        ModelConfig(dropout_rate=1.0)


def test_he_init_statistics():
    cfg = ModelConfig(n1=64, n2=64, side_length=8, dim=100)
    params = init_params(cfg, np.random.default_rng(7))
    assert np.std(params.w1) == pytest.approx(np.sqrt(2.0 / 8), rel=0.15)
    assert np.std(params.w2) == pytest.approx(np.sqrt(2.0 / (4 * 64)), rel=0.1)
    assert np.std(params.w_fc) == pytest.approx(np.sqrt(2.0 / (50 * 64)), rel=0.1)
    assert not params.b1.any() and not params.b2.any() and params.b_fc == 0.0


def test_zero_params_score_half(rng):
    cfg = ModelConfig(n1=3, n2=2, side_length=2, dim=8)
    params = init_params(cfg, rng)
    zeros = ModelParams.from_flat(cfg, np.zeros(parameter_count(cfg)))
    x = rng.normal(size=(cfg.dim, 2 * cfg.side_length))
    assert forward_score(zeros, cfg, x) == 0.5


def test_flatten_from_flat_round_trip(rng):
    cfg = ModelConfig(n1=5, n2=3, side_length=3, dim=12)
    params = init_params(cfg, rng)
    again = ModelParams.from_flat(cfg, params.flatten())
    assert np.array_equal(again.flatten(), params.flatten())


# ---------------------------------------------------------------------------
# forward pass against a naive reference
# ---------------------------------------------------------------------------


def naive_forward(params, cfg, x):
    """Scalar-loop reference implementation of the two convolutions."""
    d, width = x.shape
    L = cfg.side_length
    a1 = np.zeros((d, 2, cfg.n1))
    for row in range(d):
        for side in range(2):
            window = x[row, side * L : (side + 1) * L]
            for f in range(cfg.n1):
                a1[row, side, f] = max(0.0, float(window @ params.w1[f]) + params.b1[f])
    a2 = np.zeros((d // 2, cfg.n2))
    for block in range(d // 2):
        patch = a1[2 * block : 2 * block + 2]  # (2, 2, n1)
        for f in range(cfg.n2):
            a2[block, f] = max(0.0, float(np.sum(patch * params.w2[f])) + params.b2[f])
    logit = float(a2.ravel() @ params.w_fc) + params.b_fc
    return 1.0 / (1.0 + np.exp(-logit))


def test_forward_matches_naive_convolution(rng):
    for _ in range(10):
        cfg = ModelConfig(
            n1=int(rng.integers(1, 5)),
            n2=int(rng.integers(1, 4)),
            side_length=int(rng.integers(2, 5)),
            dim=2 * int(rng.integers(1, 5)),
        )
        params = init_params(cfg, rng)
        x = rng.normal(size=(cfg.dim, 2 * cfg.side_length))
        assert forward_score(params, cfg, x) == pytest.approx(
            naive_forward(params, cfg, x), rel=1e-10, abs=1e-10
        )


def test_batched_forward_matches_single(rng):
    cfg = ModelConfig(n1=4, n2=2, side_length=2, dim=8)
    params = init_params(cfg, rng)
    batch = rng.normal(size=(6, cfg.dim, 2 * cfg.side_length))
    scores = forward(params, cfg, batch).score
    for i in range(6):
        assert scores[i] == pytest.approx(forward_score(params, cfg, batch[i]), abs=1e-12)


def test_position_sensitivity():
    # conv1 weights that respond only to the second column of each side
    cfg = ModelConfig(n1=1, n2=1, side_length=2, dim=2)
    params = ModelParams.from_flat(cfg, np.zeros(parameter_count(cfg)))
    params.w1 = np.array([[0.0, 1.0]])
    params.w2 = np.ones((1, 2, 2, 1))
    params.w_fc = np.ones(1)
    a = np.array([[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    b = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    assert forward_score(params, cfg, a) == 0.5
    assert forward_score(params, cfg, b) > 0.5


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def test_gradients_match_finite_differences(rng):
    for trial in range(20):
        cfg = ModelConfig(
            n1=int(rng.integers(1, 5)),
            n2=int(rng.integers(1, 3)),
            side_length=int(rng.integers(2, 5)),
            dim=2 * int(rng.integers(1, 5)),
        )
        params = init_params(cfg, rng)
        # nudge biases off zero so no ReLU input sits exactly on the kink
        params.b1 = rng.normal(size=cfg.n1) * 0.1
        params.b2 = rng.normal(size=cfg.n2) * 0.1
        params.b_fc = float(rng.normal()) * 0.1
        batch = int(rng.integers(1, 5))
        x = rng.normal(size=(batch, cfg.dim, 2 * cfg.side_length))
        y = rng.integers(0, 2, size=batch).astype(float)
        weights = (1.3, 0.7)
        _, grads = loss_and_grads(params, cfg, x, y, class_weights=weights)
        flat = params.flatten()
        grad_flat = grads.flatten()
        h = 1e-6
        for k in range(flat.size):
            bumped = flat.copy()
            bumped[k] += h
            up, _ = loss_and_grads(
                ModelParams.from_flat(cfg, bumped), cfg, x, y, class_weights=weights
            )
            bumped[k] -= 2 * h
            down, _ = loss_and_grads(
                ModelParams.from_flat(cfg, bumped), cfg, x, y, class_weights=weights
            )
            numeric = (up - down) / (2 * h)
            assert grad_flat[k] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


def test_class_weight_linearity(rng):
    cfg = ModelConfig(n1=2, n2=2, side_length=2, dim=4)
    params = init_params(cfg, rng)
    x = rng.normal(size=(4, cfg.dim, 4))
    y = np.array([1.0, 1.0, 1.0, 1.0])
    base, gbase = loss_and_grads(params, cfg, x, y, class_weights=(1.0, 1.0))
    doubled, gdoubled = loss_and_grads(params, cfg, x, y, class_weights=(2.0, 1.0))
    assert doubled == pytest.approx(2 * base)
    assert np.allclose(gdoubled.flatten(), 2 * gbase.flatten())


def test_class_weights_for_balanced_and_skewed():
    assert class_weights_for(np.array([1, 1, 0, 0])) == (1.0, 1.0)
    w1, w0 = class_weights_for(np.array([1, 0, 0, 0]))
    assert w1 == 2.0 and w0 == pytest.approx(4 / 6)
    # absent class falls back to 1.0; the present class still uses the formula
    assert class_weights_for(np.array([1, 1])) == (0.5, 1.0)


def test_adam_reduces_loss_on_fixed_batch(rng):
    cfg = ModelConfig(n1=4, n2=2, side_length=2, dim=8, learning_rate=0.01)
    params = init_params(cfg, rng)
    state = AdamState.zeros_like(params)
    x = rng.normal(size=(16, cfg.dim, 4))
    y = rng.integers(0, 2, size=16).astype(float)
    first, _ = loss_and_grads(params, cfg, x, y)
    for _ in range(50):
        _, grads = loss_and_grads(params, cfg, x, y)
        adam_step(params, grads, state, cfg.learning_rate)
    final, _ = loss_and_grads(params, cfg, x, y)
    assert final < first


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def separable_task(rng, n, cfg):
    """Label 1 inputs carry a constant positive bias on one column."""
    x = rng.normal(size=(n, cfg.dim, 2 * cfg.side_length))
    y = rng.integers(0, 2, size=n).astype(float)
    x[y == 1, :, 0] += 3.0
    return x, y


def test_training_learns_separable_task(rng):
    cfg = ModelConfig(n1=4, n2=2, side_length=2, dim=8, learning_rate=0.01, seed=3)
    x, y = separable_task(rng, 200, cfg)
    vx, vy = separable_task(rng, 60, cfg)
    params, history = train(cfg, x, y, vx, vy, epochs=50)
    preds = (predict(params, cfg, vx) > 0.5).astype(float)
    assert np.mean(preds == vy) >= 0.95
    assert history.best_epoch >= 1


def test_training_is_bit_reproducible(rng):
    cfg = ModelConfig(n1=3, n2=2, side_length=2, dim=6, seed=11, dropout_rate=0.2)
    x, y = separable_task(rng, 80, cfg)
    p1, h1 = train(cfg, x, y, x, y, epochs=8)
    p2, h2 = train(cfg, x, y, x, y, epochs=8)
    assert h1.train_loss == h2.train_loss
    assert h1.val_loss == h2.val_loss
    assert np.array_equal(p1.flatten(), p2.flatten())


def test_early_stopping_contract(monkeypatch, rng):
    """Strictly worsening validation loss stops after patience epochs and
    restores the first-epoch snapshot."""
    cfg = ModelConfig(n1=2, n2=2, side_length=2, dim=4, seed=5)
    x, y = separable_task(rng, 30, cfg)

    import kgprune.convnet as convnet

    real_forward = convnet.forward
    counter = {"epoch": 0}
    snapshots = []

    def fake_forward(params, cfg_, inputs, dropout_active=False, rng=None):
        cache = real_forward(params, cfg_, inputs, dropout_active, rng)
        if inputs is val_x and not dropout_active:
            counter["epoch"] += 1
            snapshots.append(params.flatten().copy())
            # force strictly increasing validation loss via the score
            cache.score = np.full_like(cache.score, min(0.99, 0.5 + 0.04 * counter["epoch"]))
        return cache

    val_x = rng.normal(size=(10, cfg.dim, 4))
    val_y = np.zeros(10)
    monkeypatch.setattr(convnet, "forward", fake_forward)
    params, history = train(cfg, x, y, val_x, val_y, epochs=50)
    # epoch 1 improves on +inf, then 5 consecutive failures
    assert history.best_epoch == 1
    assert history.stopped_epoch == 6
    assert len(history.val_loss) == 6
    assert np.array_equal(params.flatten(), snapshots[0])


def test_no_validation_returns_final_params(rng):
    cfg = ModelConfig(n1=2, n2=1, side_length=2, dim=4, seed=2)
    x, y = separable_task(rng, 20, cfg)
    params, history = train(cfg, x, y, epochs=4)
    assert history.val_loss == []
    assert history.best_epoch == 4
    assert history.stopped_epoch == 4


def test_empty_training_set_rejected():
    cfg = ModelConfig(n1=2, n2=1, side_length=2, dim=4)
    with pytest.raises(ValueError):
        train(cfg, np.zeros((0, 4, 4)), np.zeros(0))


# ---------------------------------------------------------------------------
# Monte Carlo dropout
# ---------------------------------------------------------------------------


def test_predict_without_dropout_is_deterministic_forward(rng):
    cfg = ModelConfig(n1=3, n2=2, side_length=2, dim=6, dropout_rate=0.0)
    params = init_params(cfg, rng)
    x = rng.normal(size=(cfg.dim, 4))
    assert predict(params, cfg, x) == forward_score(params, cfg, x)


def test_mc_dropout_reproducible_and_converging(rng):
    cfg = ModelConfig(n1=4, n2=2, side_length=2, dim=8, dropout_rate=0.3, seed=9)
    params = init_params(cfg, rng)
    x = rng.normal(size=(cfg.dim, 4))
    a = predict(params, cfg, x, mc_samples=10)
    b = predict(params, cfg, x, mc_samples=10)
    assert a == b  # same default rng stream from cfg.seed
    # large sample counts approach the deterministic score thanks to
    # inverted dropout rescaling keeping activations unbiased
    big = predict(params, cfg, x, mc_samples=4000)
    assert big == pytest.approx(forward_score(params, cfg, x), abs=0.08)


def test_mc_samples_must_be_positive(rng):
    cfg = ModelConfig(n1=2, n2=1, side_length=2, dim=4, dropout_rate=0.2)
    params = init_params(cfg, rng)
    with pytest.raises(ValueError):
        predict(params, cfg, rng.normal(size=(cfg.dim, 4)), mc_samples=0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(rng):
    cfg = ModelConfig(
        n1=5, n2=3, side_length=3, dim=10, dropout_rate=0.25, learning_rate=0.002, seed=42
    )
    params = init_params(cfg, rng)
    buf = io.BytesIO()
    save_checkpoint(params, cfg, buf)
    buf.seek(0)
    reloaded, loaded_cfg = load_checkpoint(buf)
    assert loaded_cfg == cfg
    assert np.array_equal(reloaded.flatten(), params.flatten())


def test_checkpoint_bad_magic_and_truncation(rng):
    cfg = ModelConfig(n1=2, n2=1, side_length=2, dim=4)
    params = init_params(cfg, rng)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(io.BytesIO(b"XXXX" + b"\x00" * 64))
    buf = io.BytesIO()
    save_checkpoint(params, cfg, buf)
    data = buf.getvalue()[:-8]
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(io.BytesIO(data))
