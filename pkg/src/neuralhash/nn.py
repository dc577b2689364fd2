"""Dense ReLU multilayer perceptrons in float64 numpy.

The forward pass reports every hidden pre-activation, since their signs are
the neural code. Batch norm, when enabled, sits between each hidden affine
map and its ReLU; anything that reads geometry or codes uses the running
statistics.
"""

from __future__ import annotations

import copy
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    DimensionError,
    check_inputs,
    check_labels,
    check_layer_dims,
)

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"NHL1"
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, message: str = "loss became non-finite"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON

    @classmethod
    def identity(cls, width: int) -> "BatchNormParams":
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
        )

    def inference_affine(self) -> tuple[np.ndarray, np.ndarray]:
        """Scale and shift equivalent to this layer in inference mode."""
        scale = self.gamma / np.sqrt(self.running_var + self.epsilon)
        return scale, self.beta - scale * self.running_mean


@dataclass
class MlpModel:
    """Weights of a ReLU MLP.

    ``weights[k]`` has shape ``(layer_dims[k + 1], layer_dims[k])``. ``bn``
    is either None or holds one entry per hidden layer.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bn: list[BatchNormParams] | None = None

    def __post_init__(self):
        self.layer_dims = check_layer_dims(self.layer_dims)
        self.validate()

    def validate(self) -> None:
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise DimensionError("one weight matrix and bias vector per layer expected")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[k + 1], self.layer_dims[k])
            if W.shape != shape:
                raise DimensionError(f"layer {k} weight shape {W.shape}, expected {shape}")
            if b.shape != (shape[0],):
                raise DimensionError(f"layer {k} bias shape {b.shape}, expected {(shape[0],)}")
        if self.bn is not None:
            if len(self.bn) != self.n_hidden:
                raise DimensionError("batch norm needs one entry per hidden layer")
            for width, p in zip(self.hidden_widths, self.bn):
                for v in (p.gamma, p.beta, p.running_mean, p.running_var):
                    if v.shape != (width,):
                        raise DimensionError("batch norm vector does not match layer width")
                if np.any(p.running_var < 0):
                    raise ValueError("running_var must be non-negative")
                if not p.epsilon > 0:
                    raise ValueError("batch norm epsilon must be positive")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return self.layer_dims[1:-1]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_dims) - 2

    @property
    def code_length(self) -> int:
        return sum(self.hidden_widths)

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def enable_batch_norm(self) -> None:
        if self.bn is None:
            self.bn = [BatchNormParams.identity(w) for w in self.hidden_widths]

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays, in the order gradients are reported."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params += [W, b]
        if self.bn is not None:
            for p in self.bn:
                params += [p.gamma, p.beta]
        return params

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __eq__(self, other):
        if not isinstance(other, MlpModel) or self.layer_dims != other.layer_dims:
            return False
        if (self.bn is None) != (other.bn is None):
            return False
        pairs = list(zip(self.weights + self.biases, other.weights + other.biases))
        if self.bn is not None:
            for p, q in zip(self.bn, other.bn):
                if p.epsilon != q.epsilon:
                    return False
                pairs += [
                    (p.gamma, q.gamma),
                    (p.beta, q.beta),
                    (p.running_mean, q.running_mean),
                    (p.running_var, q.running_var),
                ]
        return all(np.array_equal(a, b) for a, b in pairs)


@dataclass
class ForwardTrace:
    preactivations: list[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    ``lr_decay``/``lr_decay_every`` give a step schedule: the learning rate
    is multiplied by ``lr_decay`` every ``lr_decay_every`` epochs. Leave both
    unset for a constant rate.
    """

    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    momentum: float = 0.0
    epochs: int = 200
    batch_size: int = 128
    lr_decay: float | None = None
    lr_decay_every: int | None = None
    weight_decay: float = 0.0
    grad_clip_norm: float | None = None
    batch_norm: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if (self.lr_decay is None) != (self.lr_decay_every is None):
            raise ValueError("lr_decay and lr_decay_every go together")
        if self.lr_decay_every is not None and self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.grad_clip_norm is not None and not self.grad_clip_norm > 0:
            raise ValueError("grad_clip_norm must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during 0-based ``epoch``."""
        if self.lr_decay is None:
            return self.lr
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class TrainResult:
    model: MlpModel
    history: list[tuple[float, float]] = field(default_factory=list)
    checkpoints: dict[int, MlpModel] = field(default_factory=dict)


def init_model(layer_dims, seed=0) -> MlpModel:
    """He-uniform weights (``U(-sqrt(6/fan_in), sqrt(6/fan_in))``), zero biases."""
    dims = check_layer_dims(layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: MlpModel, x) -> ForwardTrace:
    """Inference-mode forward pass; accepts one sample or a batch."""
    X, single = check_inputs(x, model.input_dim)
    pre = []
    h = X
    for k in range(model.n_hidden):
        z = h @ model.weights[k].T + model.biases[k]
        if model.bn is not None:
            scale, shift = model.bn[k].inference_affine()
            z = z * scale + shift
        pre.append(z)
        h = np.maximum(z, 0.0)
    logits = h @ model.weights[-1].T + model.biases[-1]
    probs = softmax(logits)
    if single:
        return ForwardTrace([z[0] for z in pre], logits[0], probs[0])
    return ForwardTrace(pre, logits, probs)


def predict_proba(model: MlpModel, X) -> np.ndarray:
    return forward(model, X).probs


def accuracy(model: MlpModel, X, y) -> float:
    X, _ = check_inputs(X, model.input_dim)
    logits = forward(model, X).logits
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def loss_and_grads(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    weight_decay: float = 0.0,
    training: bool = True,
):
    """Mean softmax cross-entropy plus ``weight_decay/2 * sum ||W||^2``.

    With ``training=True`` batch norm normalises by batch statistics, as
    during optimisation. Returns ``(loss, grads, logits, batch_stats)`` where
    ``grads`` aligns with ``model.parameters()`` and ``batch_stats`` lists
    per-layer ``(mean, var)`` (empty without batch norm or in inference mode).
    """
    n = X.shape[0]
    use_batch_stats = training and model.bn is not None
    cache = []
    batch_stats = []
    h = X
    for k in range(model.n_hidden):
        a = h @ model.weights[k].T + model.biases[k]
        if model.bn is None:
            z = a
            bn_cache = None
        else:
            p = model.bn[k]
            if use_batch_stats:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                batch_stats.append((mu, var))
            else:
                mu, var = p.running_mean, p.running_var
            inv_std = 1.0 / np.sqrt(var + p.epsilon)
            xhat = (a - mu) * inv_std
            z = p.gamma * xhat + p.beta
            bn_cache = (xhat, inv_std)
        cache.append((h, z, bn_cache))
        h = np.maximum(z, 0.0)
    logits = h @ model.weights[-1].T + model.biases[-1]
    probs = softmax(logits)
    loss = cross_entropy(probs, y)
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(W * W)) for W in model.weights)

    n_layers = len(model.weights)
    dW = [None] * n_layers
    db = [None] * n_layers
    dgamma = [None] * model.n_hidden
    dbeta = [None] * model.n_hidden

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    dW[-1] = delta.T @ h
    db[-1] = delta.sum(axis=0)
    dh = delta @ model.weights[-1]
    for k in reversed(range(model.n_hidden)):
        h_prev, z, bn_cache = cache[k]
        dz = dh * (z > 0)
        if bn_cache is None:
            da = dz
        else:
            xhat, inv_std = bn_cache
            gamma = model.bn[k].gamma
            dgamma[k] = np.sum(dz * xhat, axis=0)
            dbeta[k] = dz.sum(axis=0)
            dxhat = dz * gamma
            if use_batch_stats:
                da = (inv_std / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                )
            else:
                da = dxhat * inv_std
        dW[k] = da.T @ h_prev
        db[k] = da.sum(axis=0)
        dh = da @ model.weights[k]
    if weight_decay:
        dW = [g + weight_decay * W for g, W in zip(dW, model.weights)]

    grads = []
    for gW, gb in zip(dW, db):
        grads += [gW, gb]
    if model.bn is not None:
        for gg, gbeta in zip(dgamma, dbeta):
            grads += [gg, gbeta]
    return loss, grads, logits, batch_stats


class _Adam:
    def __init__(self, params, config: TrainConfig):
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.adam_epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, params, config: TrainConfig):
        self.momentum = config.momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        for p, g, vel in zip(params, grads, self.velocity):
            if self.momentum:
                vel *= self.momentum
                vel += g
                p -= lr * vel
            else:
                p -= lr * g


def clip_by_global_norm(grads: list[np.ndarray], clip_norm: float | None) -> list[np.ndarray]:
    if clip_norm is None or not math.isfinite(clip_norm):
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > clip_norm:
        scale = clip_norm / norm
        return [g * scale for g in grads]
    return grads


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffle order for one epoch, replayable from ``(seed, epoch)``."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(
    model: MlpModel,
    X,
    y,
    config: TrainConfig,
    checkpoint_epochs=(),
    callback=None,
) -> TrainResult:
    """Minibatch training on a copy of ``model``.

    ``checkpoint_epochs`` lists epoch counts (0 = untrained) at which a copy
    of the model is kept in ``TrainResult.checkpoints``; ``callback(epoch,
    model)`` is called at the same points if given. ``history[i]`` holds the
    minibatch-averaged loss and accuracy of epoch ``i + 1``.
    """
    X, _ = check_inputs(X, model.input_dim)
    y = check_labels(y, X.shape[0], model.n_classes)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    checkpoint_epochs = sorted(set(int(e) for e in checkpoint_epochs))
    if checkpoint_epochs and (checkpoint_epochs[0] < 0 or checkpoint_epochs[-1] > config.epochs):
        raise ValueError("checkpoint epochs must lie in [0, epochs]")

    model = model.copy()
    if config.batch_norm:
        model.enable_batch_norm()
    params = model.parameters()
    opt = _Adam(params, config) if config.optimizer == "adam" else _SGD(params, config)
    result = TrainResult(model)

    def checkpoint(epoch):
        if epoch in checkpoint_epochs:
            result.checkpoints[epoch] = model.copy()
            if callback is not None:
                callback(epoch, result.checkpoints[epoch])

    checkpoint(0)
    n = X.shape[0]
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = epoch_permutation(n, config.seed, epoch)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = X[idx], y[idx]
            loss, grads, logits, stats = loss_and_grads(model, xb, yb, config.weight_decay)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch + 1)
            grads = clip_by_global_norm(grads, config.grad_clip_norm)
            opt.step(params, grads, lr)
            for p, (mu, var) in zip(model.bn or (), stats):
                m = len(idx)
                unbiased = var * m / (m - 1) if m > 1 else var
                p.running_mean *= BN_MOMENTUM
                p.running_mean += (1 - BN_MOMENTUM) * mu
                p.running_var *= BN_MOMENTUM
                p.running_var += (1 - BN_MOMENTUM) * unbiased
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == yb))
        result.history.append((loss_sum / n, correct / n))
        logger.debug("epoch %d loss %.5f acc %.4f", epoch + 1, *result.history[-1])
        checkpoint(epoch + 1)
    return result


def reference_loss(model: MlpModel, X, y, weight_decay: float = 0.0, dtype=np.longdouble):
    """Straight-line evaluation of the training loss in extended precision.

    Shares no code with :func:`loss_and_grads`, so it can referee it.
    """
    X = np.asarray(X, dtype=dtype)
    h = X
    for k in range(model.n_hidden):
        a = h @ model.weights[k].astype(dtype).T + model.biases[k].astype(dtype)
        if model.bn is not None:
            p = model.bn[k]
            mu = a.sum(axis=0) / a.shape[0]
            var = ((a - mu) ** 2).sum(axis=0) / a.shape[0]
            a = p.gamma.astype(dtype) * (a - mu) / np.sqrt(var + dtype(p.epsilon)) + p.beta.astype(dtype)
        h = np.where(a > 0, a, dtype(0))
    logits = h @ model.weights[-1].astype(dtype).T + model.biases[-1].astype(dtype)
    top = logits.max(axis=1, keepdims=True)
    log_norm = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    loss = (log_norm - logits[np.arange(len(y)), y]).sum() / len(y)
    if weight_decay:
        loss += dtype(weight_decay) / 2 * sum((W.astype(dtype) ** 2).sum() for W in model.weights)
    return loss


def grad_check(
    model: MlpModel,
    X,
    y,
    epsilon: float = 1e-5,
    n_params: int = 100,
    seed: int = 0,
    weight_decay: float = 0.0,
) -> float:
    """Max relative error between backprop and central differences.

    ``n_params`` scalar parameters are drawn uniformly (or all of them, if
    the model has fewer). Differences are taken on :func:`reference_loss`
    in extended precision so that float64 round-off does not swamp small
    gradients. Per entry the error is ``|a - n| / max(|a|, |n|)``, counted
    as 0 when both are below ``1e-12``; batch norm makes the gradient of
    the bias feeding it exactly zero.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    X, _ = check_inputs(X, model.input_dim)
    y = check_labels(y, X.shape[0], model.n_classes)
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    model = model.copy()
    params = model.parameters()
    _, grads, _, _ = loss_and_grads(model, X, y, weight_decay)

    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    if total <= n_params:
        flat_ids = np.arange(total)
    else:
        flat_ids = np.sort(rng.choice(total, size=n_params, replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for fid in flat_ids:
        which = int(np.searchsorted(offsets, fid, side="right") - 1)
        local = int(fid - offsets[which])
        p = params[which].reshape(-1)
        original = p[local]
        p[local] = original + epsilon
        plus = reference_loss(model, X, y, weight_decay)
        p[local] = original - epsilon
        minus = reference_loss(model, X, y, weight_decay)
        p[local] = original
        # the perturbation actually applied, after float64 rounding
        step = (np.longdouble(original + epsilon) - np.longdouble(original - epsilon))
        numeric = float((plus - minus) / step)
        analytic = float(grads[which].reshape(-1)[local])
        scale = max(abs(analytic), abs(numeric))
        if scale > 1e-12:
            worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def save_checkpoint(model: MlpModel, path) -> None:
    """Write the binary ``NHL1`` checkpoint format (little-endian)."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(model.layer_dims))]
    parts += [struct.pack("<I", d) for d in model.layer_dims]
    parts.append(struct.pack("<B", 0 if model.bn is None else 1))
    for arr in model.weights + model.biases:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for p in model.bn or ():
        for arr in (p.gamma, p.beta, p.running_mean, p.running_var):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        parts.append(struct.pack("<d", p.epsilon))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> MlpModel:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an NHL1 checkpoint")
    pos = 4

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(data):
            raise ValueError(f"{path}: truncated checkpoint")
        chunk = data[pos : pos + nbytes]
        pos += nbytes
        return chunk

    def take_array(shape):
        count = int(np.prod(shape))
        return np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

    (n_dims,) = struct.unpack("<I", take(4))
    dims = tuple(struct.unpack("<I", take(4))[0] for _ in range(n_dims))
    (has_bn,) = struct.unpack("<B", take(1))
    pairs = list(zip(dims[:-1], dims[1:]))
    weights = [take_array((out, inp)) for inp, out in pairs]
    biases = [take_array((out,)) for _, out in pairs]
    bn = None
    if has_bn:
        bn = []
        for width in dims[1:-1]:
            vecs = [take_array((width,)) for _ in range(4)]
            (eps,) = struct.unpack("<d", take(8))
            bn.append(BatchNormParams(*vecs, epsilon=eps))
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after checkpoint")
    return MlpModel(dims, weights, biases, bn)


class ReLUMLPClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`init_model` and :func:`train`.

    Labels must already be integers ``0..n_classes-1`` so that output unit
    ``j`` means class ``j``; ``n_classes`` defaults to ``max(y) + 1``.
    After fitting, :meth:`encode` returns the neural codes of inputs.
    """

    def __init__(
        self,
        hidden_layer_sizes=(100,),
        n_classes=None,
        optimizer="adam",
        lr=1e-3,
        epochs=200,
        batch_size=128,
        lr_decay=None,
        lr_decay_every=None,
        weight_decay=0.0,
        grad_clip_norm=None,
        batch_norm=False,
        checkpoint_epochs=(),
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.n_classes = n_classes
        self.optimizer = optimizer
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.weight_decay = weight_decay
        self.grad_clip_norm = grad_clip_norm
        self.batch_norm = batch_norm
        self.checkpoint_epochs = checkpoint_epochs
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            optimizer=self.optimizer,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_decay=self.lr_decay,
            lr_decay_every=self.lr_decay_every,
            weight_decay=self.weight_decay,
            grad_clip_norm=self.grad_clip_norm,
            batch_norm=self.batch_norm,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, _ = check_inputs(X)
        y = check_labels(y, X.shape[0])
        n_classes = self.n_classes if self.n_classes is not None else int(y.max()) + 1
        dims = (X.shape[1], *self.hidden_layer_sizes, n_classes)
        model = init_model(dims, seed=self.random_state)
        result = train(model, X, y, self.train_config(), self.checkpoint_epochs)
        self.model_ = result.model
        self.history_ = result.history
        self.checkpoints_ = result.checkpoints
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, check_inputs(X, self.n_features_in_)[0]).probs

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def encode(self, X):
        """Neural codes of ``X`` as an ``(n, code_length)`` 0/1 matrix."""
        from .codes import code_matrix

        check_is_fitted(self, "model_")
        return code_matrix(self.model_, X)
