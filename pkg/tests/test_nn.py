import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralhash._validation import DimensionError
from neuralhash.nn import (
    BatchNormParams,
    MlpModel,
    ReLUMLPClassifier,
    TrainConfig,
    TrainingDivergedError,
    clip_by_global_norm,
    epoch_permutation,
    forward,
    grad_check,
    init_model,
    load_checkpoint,
    loss_and_grads,
    reference_loss,
    save_checkpoint,
    train,
)

from .conftest import random_model


def naive_forward(model, x):
    """Unit-by-unit loop; shares nothing with the vectorised pass."""
    h = list(x)
    pre_all = []
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = []
        for i in range(W.shape[0]):
            s = b[i]
            for j in range(W.shape[1]):
                s += W[i, j] * h[j]
            if model.bn is not None and k < model.n_hidden:
                p = model.bn[k]
                s = p.gamma[i] * (s - p.running_mean[i]) / math.sqrt(p.running_var[i] + p.epsilon) + p.beta[i]
            z.append(s)
        if k < model.n_hidden:
            pre_all.append(z)
            h = [max(v, 0.0) for v in z]
        else:
            return pre_all, z


# --- construction ---------------------------------------------------------


def test_init_ranges_and_zero_biases():
    model = init_model((784, 100, 10), seed=0)
    assert model.weights[0].shape == (100, 784)
    assert np.abs(model.weights[0]).max() <= math.sqrt(6 / 784)
    assert np.abs(model.weights[1]).max() <= math.sqrt(6 / 100)
    assert all(not b.any() for b in model.biases)
    assert model.code_length == 100 and model.hidden_widths == (100,)


def test_init_is_seeded():
    assert init_model((5, 4, 3), seed=1) == init_model((5, 4, 3), seed=1)
    assert init_model((5, 4, 3), seed=1) != init_model((5, 4, 3), seed=2)


@pytest.mark.parametrize("dims", [(5,), (), (5, 0, 3), (5, -2, 3)])
def test_bad_layer_dims(dims):
    with pytest.raises((ValueError, DimensionError)):
        init_model(dims)


def test_shape_validation():
    with pytest.raises(DimensionError):
        MlpModel((3, 2, 2), [np.zeros((2, 3)), np.zeros((3, 2))], [np.zeros(2), np.zeros(2)])


# --- forward ----------------------------------------------------------------


def test_forward_matches_naive_loop(small_model, rng):
    X = rng.normal(size=(4, 6))
    trace = forward(small_model, X)
    for i, x in enumerate(X):
        pre, logits = naive_forward(small_model, x)
        for k, z in enumerate(pre):
            np.testing.assert_allclose(trace.preactivations[k][i], z, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(trace.logits[i], logits, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(trace.probs.sum(1), 1.0)


def test_forward_with_batch_norm_matches_naive(rng):
    model = random_model(rng, bn=True, d_x=5)
    x = rng.normal(size=5)
    pre, logits = naive_forward(model, x)
    trace = forward(model, x)
    np.testing.assert_allclose(np.concatenate(trace.preactivations), np.concatenate(pre), atol=1e-12)
    np.testing.assert_allclose(trace.logits, logits, atol=1e-12)


def test_forward_single_sample_shapes(small_model):
    trace = forward(small_model, np.zeros(6))
    assert [z.shape for z in trace.preactivations] == [(8,), (5,)]
    assert trace.logits.shape == (3,)


def test_forward_rejects_wrong_width(small_model):
    with pytest.raises(DimensionError):
        forward(small_model, np.zeros(7))


def test_piecewise_linear_within_a_region(small_model, rng):
    # inside one activation region the logits are affine in the input
    x = rng.normal(size=6)
    u = rng.normal(size=6) * 1e-6
    codes = [np.concatenate(forward(small_model, x + t * u).preactivations) > 0 for t in (0, 1, 2)]
    assert all((c == codes[0]).all() for c in codes)
    l0, l1, l2 = (forward(small_model, x + t * u).logits for t in (0, 1, 2))
    np.testing.assert_allclose(l2 - l1, l1 - l0, atol=1e-12)


# --- gradients ------------------------------------------------------------------


def test_reference_loss_agrees_with_training_loss(rng):
    model = random_model(rng, bn=True, d_x=4)
    X = rng.uniform(size=(7, 4))
    y = rng.integers(0, model.n_classes, 7)
    loss, *_ = loss_and_grads(model, X, y, weight_decay=0.01)
    assert float(reference_loss(model, X, y, 0.01)) == pytest.approx(loss, rel=1e-12)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("bn", [False, True])
def test_grad_check(seed, bn):
    gen = np.random.default_rng(seed)
    model = random_model(gen, bn=bn)
    X = gen.uniform(size=(5, model.input_dim))
    y = gen.integers(0, model.n_classes, 5)
    assert grad_check(model, X, y, weight_decay=0.01 * (seed % 2), seed=seed) < 1e-6


def test_grad_check_detects_wrong_gradient(monkeypatch, small_model, rng):
    import neuralhash.nn as nn

    real = nn.loss_and_grads

    def broken(*args, **kwargs):
        loss, grads, logits, stats = real(*args, **kwargs)
        return loss, [g * 1.01 for g in grads], logits, stats

    monkeypatch.setattr(nn, "loss_and_grads", broken)
    X = rng.uniform(size=(4, 6))
    assert grad_check(small_model, X, np.array([0, 1, 2, 0])) > 1e-3


def test_weight_decay_adds_half_squared_norm(small_model, rng):
    X = rng.uniform(size=(3, 6))
    y = np.array([0, 1, 2])
    plain, g0, *_ = loss_and_grads(small_model, X, y)
    decayed, g1, *_ = loss_and_grads(small_model, X, y, weight_decay=0.5)
    norm = sum(float((W**2).sum()) for W in small_model.weights)
    assert decayed == pytest.approx(plain + 0.25 * norm)
    # biases are not decayed
    np.testing.assert_array_equal(g0[1], g1[1])


def test_clip_by_global_norm():
    grads = [np.array([3.0]), np.array([4.0])]
    clipped = clip_by_global_norm(grads, 1.0)
    assert math.hypot(*(float(g[0]) for g in clipped)) == pytest.approx(1.0)
    assert clip_by_global_norm(grads, 10.0)[0][0] == 3.0
    assert clip_by_global_norm(grads, None) is grads


# --- training ----------------------------------------------------------------------


def test_epoch_permutation_is_reproducible():
    a = epoch_permutation(50, 3, 7)
    assert sorted(a) == list(range(50))
    np.testing.assert_array_equal(a, epoch_permutation(50, 3, 7))
    assert not np.array_equal(a, epoch_permutation(50, 3, 8))


def test_zero_lr_leaves_weights_unchanged(small_model, rng):
    X = rng.uniform(size=(20, 6))
    y = rng.integers(0, 3, 20)
    result = train(small_model, X, y, TrainConfig(lr=0.0, epochs=3, batch_size=7))
    assert result.model == small_model
    assert len(result.history) == 3


def test_train_does_not_mutate_input(small_model, rng):
    before = small_model.copy()
    train(small_model, rng.uniform(size=(10, 6)), rng.integers(0, 3, 10), TrainConfig(epochs=2))
    assert small_model == before


def test_interpolates_ten_examples(rng):
    X = rng.uniform(size=(10, 8))
    y = np.arange(10) % 3
    model = init_model((8, 32, 3), seed=0)
    result = train(model, X, y, TrainConfig(lr=0.01, epochs=300, batch_size=10))
    assert result.history[-1][1] == 1.0


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_training_is_deterministic(optimizer, small_model, rng):
    X = rng.uniform(size=(30, 6))
    y = rng.integers(0, 3, 30)
    cfg = TrainConfig(optimizer=optimizer, lr=0.05, momentum=0.9, epochs=4, batch_size=8, seed=5)
    assert train(small_model, X, y, cfg).model == train(small_model, X, y, cfg).model


def test_no_op_regularizer_settings_are_identity(small_model, rng):
    X = rng.uniform(size=(30, 6))
    y = rng.integers(0, 3, 30)
    base = train(small_model, X, y, TrainConfig(epochs=3, batch_size=8)).model
    same = train(
        small_model, X, y, TrainConfig(epochs=3, batch_size=8, weight_decay=0.0, grad_clip_norm=math.inf)
    ).model
    assert base == same


def test_checkpoints_and_callback(small_model, rng):
    seen = []
    result = train(
        small_model,
        rng.uniform(size=(12, 6)),
        rng.integers(0, 3, 12),
        TrainConfig(epochs=4),
        checkpoint_epochs=[0, 2, 4],
        callback=lambda e, m: seen.append(e),
    )
    assert sorted(result.checkpoints) == [0, 2, 4] == seen
    assert result.checkpoints[0] == small_model
    assert result.checkpoints[4] == result.model
    with pytest.raises(ValueError):
        train(small_model, np.zeros((2, 6)), [0, 1], TrainConfig(epochs=2), checkpoint_epochs=[3])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(small_model):
    X = np.ones((8, 6))
    y = np.zeros(8, dtype=int)
    cfg = TrainConfig(optimizer="sgd", lr=1e200, epochs=3, batch_size=2)
    with pytest.raises(TrainingDivergedError) as err:
        train(small_model, X, y, cfg)
    assert err.value.epoch == 1


def test_batch_norm_training_updates_running_stats(small_model, rng):
    X = rng.uniform(size=(40, 6))
    y = rng.integers(0, 3, 40)
    model = train(small_model, X, y, TrainConfig(epochs=2, batch_norm=True)).model
    assert model.bn is not None and len(model.bn) == 2
    assert not np.allclose(model.bn[0].running_mean, 0)


def test_lr_schedule():
    cfg = TrainConfig(lr=0.1, lr_decay=0.5, lr_decay_every=10)
    assert [cfg.lr_at(e) for e in (0, 9, 10, 25)] == [0.1, 0.1, 0.05, 0.025]
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=0.5)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


# --- checkpoints ----------------------------------------------------------------------


@pytest.mark.parametrize("bn", [False, True])
def test_checkpoint_round_trip(tmp_path, rng, bn):
    model = random_model(rng, bn=bn)
    path = tmp_path / "m.nhl"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded == model
    X = rng.normal(size=(5, model.input_dim))
    np.testing.assert_array_equal(forward(loaded, X).logits, forward(model, X).logits)


def test_checkpoint_header_layout(tmp_path):
    model = init_model((3, 2, 2), seed=0)
    path = tmp_path / "m.nhl"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    assert raw[:4] == b"NHL1"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [3, 3, 2, 2]
    assert raw[20] == 0
    assert len(raw) == 21 + 8 * (6 + 4 + 2 + 2)


def test_checkpoint_rejects_corruption(tmp_path, small_model):
    path = tmp_path / "m.nhl"
    save_checkpoint(small_model, path)
    raw = path.read_bytes()
    for bad in (b"XXXX" + raw[4:], raw[:-3], raw + b"\0"):
        path.write_bytes(bad)
        with pytest.raises(ValueError):
            load_checkpoint(path)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.booleans(), st.integers(0, 2**31))
def test_checkpoint_round_trip_property(tmp_path_factory, widths, bn, seed):
    model = init_model((4, *widths, 3), seed=seed)
    if bn:
        model.enable_batch_norm()
        model.bn[0] = BatchNormParams.identity(widths[0])
        model.bn[0].running_var += 0.5
    path = tmp_path_factory.mktemp("ck") / "m.nhl"
    save_checkpoint(model, path)
    assert load_checkpoint(path) == model


# --- estimator API ----------------------------------------------------------------------


def test_classifier_estimator_api(rng):
    from sklearn.base import clone
    from sklearn.exceptions import NotFittedError

    X = rng.uniform(size=(40, 5))
    y = (X[:, 0] > 0.5).astype(int)
    clf = ReLUMLPClassifier(hidden_layer_sizes=(16,), epochs=60, lr=0.01, batch_size=8)
    with pytest.raises(NotFittedError):
        clf.predict(X)
    assert clone(clf).get_params() == clf.get_params()
    clf.fit(X, y)
    assert clf.score(X, y) > 0.8
    assert clf.encode(X).shape == (40, 16)
    assert clf.predict_proba(X).shape == (40, 2)
