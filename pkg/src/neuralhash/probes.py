"""Determinism and categorization probes over neural codes.

Every probe accepts codes either as a list of :class:`NeuralCode` or as a
0/1 matrix with one row per example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, check_bit_matrix, check_labels, check_random_state
from .codes import LayoutMismatchError, NeuralCode, build_code_table, codes_to_matrix


class DegenerateClusteringError(ValueError):
    pass


class ProbeFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class RedundancyReport:
    n: int
    m: int
    ratio: float
    largest_bucket: int


@dataclass
class ProbeResult:
    method: str
    train_accuracy: float
    test_accuracy: float
    hyperparams: dict = field(default_factory=dict)


def as_bit_matrix(codes) -> tuple[np.ndarray, tuple[int, ...]]:
    """Normalise probe input to ``(bits, layout)``."""
    if isinstance(codes, np.ndarray):
        bits = check_bit_matrix(codes)
        return bits, (bits.shape[1],)
    codes = list(codes)
    if codes and isinstance(codes[0], NeuralCode):
        return codes_to_matrix(codes)
    bits = check_bit_matrix(np.asarray(codes))
    return bits, (bits.shape[1],)


def _paired(train_codes, test_codes):
    Xtr, lay_tr = as_bit_matrix(train_codes)
    Xte, lay_te = as_bit_matrix(test_codes)
    if Xtr.shape[1] != Xte.shape[1] or (
        len(lay_tr) > 1 and len(lay_te) > 1 and lay_tr != lay_te
    ):
        raise LayoutMismatchError(f"train layout {lay_tr} and test layout {lay_te} differ")
    return Xtr, Xte


def redundancy(codes) -> RedundancyReport:
    """Share of examples that sit in an already-occupied activation region: ``(n - m) / n``."""
    if isinstance(codes, np.ndarray):
        table = build_code_table(codes)
    else:
        codes = list(codes)
        if not codes:
            raise ValueError("no codes given")
        table = build_code_table(codes)
    n, m = table.n, table.m
    return RedundancyReport(n=n, m=m, ratio=(n - m) / n, largest_bucket=table.largest_bucket)


# --- K-Means --------------------------------------------------------------


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each new center is drawn with probability proportional
    to its squared distance from the nearest center chosen so far."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise DegenerateClusteringError("fewer distinct points than clusters")
        idx = rng.choice(n, p=closest / total)
        centers[j] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[j : j + 1])[:, 0])
    return centers


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300, tol: float = 1e-4):
    """Lloyd iterations from ``centers``.

    Stops when no center moves more than ``tol`` (Euclidean) or after
    ``max_iter`` updates. An emptied cluster is re-seeded at the point
    farthest from its assigned center. Returns ``(centers, assignment,
    inertia, n_iter)``.
    """
    centers = centers.copy()
    k = centers.shape[0]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(X, centers)
        assign = np.argmin(d, axis=1)
        counts = np.bincount(assign, minlength=k)
        new = np.zeros_like(centers)
        np.add.at(new, assign, X)
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        if not nonempty.all():
            far = np.argsort(-d[np.arange(len(X)), assign], kind="stable")
            for j, idx in zip(np.flatnonzero(~nonempty), far):
                new[j] = X[idx]
        shift = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if shift < tol:
            break
    d = _sq_dists(X, centers)
    assign = np.argmin(d, axis=1)
    inertia = float(d[np.arange(len(X)), assign].sum())
    return centers, assign, inertia, n_iter


class CodeKMeansClassifier(ClassifierMixin, BaseEstimator):
    """K-Means on codes, with each cluster labelled by its most frequent class.

    Clustering ignores the labels; they are used only to name clusters.
    Ties between labels inside a cluster go to the smallest label.
    """

    def __init__(self, n_clusters=10, max_iter=300, tol=1e-4, n_init=1, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y):
        bits, _ = as_bit_matrix(X)
        y = check_labels(y, bits.shape[0])
        Xf = bits.astype(np.float64)
        n_distinct = len(np.unique(bits, axis=0))
        if self.n_clusters > n_distinct:
            raise DegenerateClusteringError(
                f"{self.n_clusters} clusters requested but only {n_distinct} distinct codes"
            )
        rng = check_random_state(self.random_state)
        best = None
        for _ in range(self.n_init):
            seeds = kmeans_plusplus(Xf, self.n_clusters, rng)
            run = lloyd(Xf, seeds, self.max_iter, self.tol)
            if best is None or run[2] < best[2]:
                best = run
        self.cluster_centers_, self.labels_, self.inertia_, self.n_iter_ = best
        self.classes_ = np.unique(y)
        n_labels = int(y.max()) + 1
        table = np.zeros((self.n_clusters, n_labels), dtype=np.int64)
        np.add.at(table, (self.labels_, y), 1)
        majority = int(np.argmax(np.bincount(y)))
        self.cluster_label_ = np.where(table.sum(1) > 0, np.argmax(table, axis=1), majority)
        self.n_features_in_ = bits.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        bits, _ = as_bit_matrix(X)
        if bits.shape[1] != self.n_features_in_:
            raise DimensionError("code length differs from training codes")
        nearest = np.argmin(_sq_dists(bits.astype(np.float64), self.cluster_centers_), axis=1)
        return self.cluster_label_[nearest]

    def training_accuracy(self, y) -> float:
        return float(np.mean(self.cluster_label_[self.labels_] == np.asarray(y)))


def kmeans_accuracy(train_codes, train_labels, test_codes, test_labels, K, seed=0, **kwargs):
    Xtr, Xte = _paired(train_codes, test_codes)
    clf = CodeKMeansClassifier(n_clusters=K, random_state=seed, **kwargs).fit(Xtr, train_labels)
    return ProbeResult(
        "kmeans",
        clf.training_accuracy(train_labels),
        float(np.mean(clf.predict(Xte) == np.asarray(test_labels))),
        {**clf.get_params(), "inertia": clf.inertia_, "n_iter": clf.n_iter_},
    )


# --- K-NN -----------------------------------------------------------------


def hamming_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between rows of two 0/1 matrices."""
    Af = A.astype(np.float32)
    Bf = B.astype(np.float32)
    cross = Af @ Bf.T
    d = Af.sum(1)[:, None] + Bf.sum(1)[None, :] - 2.0 * cross
    return np.rint(d).astype(np.int64)


class HammingKNNClassifier(ClassifierMixin, BaseEstimator):
    """Exact k-NN under Hamming distance with majority vote.

    Equal distances are ordered by training index. A tied vote goes to the
    label whose nearest voting neighbour is closest, then to the smallest
    label.
    """

    def __init__(self, n_neighbors=5, chunk_size=1024):
        self.n_neighbors = n_neighbors
        self.chunk_size = chunk_size

    def fit(self, X, y):
        bits, layout = as_bit_matrix(X)
        y = check_labels(y, bits.shape[0])
        if not 1 <= self.n_neighbors <= bits.shape[0]:
            raise ValueError(f"n_neighbors must be in [1, {bits.shape[0]}]")
        self.codes_ = bits
        self.layout_ = layout
        self.classes_, self.y_index_ = np.unique(y, return_inverse=True)
        self.n_features_in_ = bits.shape[1]
        return self

    def kneighbors(self, X):
        """Sorted neighbour indices and distances, shape ``(n_queries, k)``."""
        check_is_fitted(self, "codes_")
        bits, layout = as_bit_matrix(X)
        if bits.shape[1] != self.n_features_in_ or (
            len(layout) > 1 and len(self.layout_) > 1 and layout != self.layout_
        ):
            raise LayoutMismatchError("query codes do not match training layout")
        k = self.n_neighbors
        n_train = self.codes_.shape[0]
        all_idx = np.empty((bits.shape[0], k), dtype=np.int64)
        all_dist = np.empty((bits.shape[0], k), dtype=np.int64)
        for start in range(0, bits.shape[0], self.chunk_size):
            d = hamming_matrix(bits[start : start + self.chunk_size], self.codes_)
            key = d * n_train + np.arange(n_train)[None, :]
            if k < n_train:
                part = np.argpartition(key, k - 1, axis=1)[:, :k]
            else:
                part = np.broadcast_to(np.arange(n_train), key.shape)
            order = np.argsort(np.take_along_axis(key, part, axis=1), axis=1)
            idx = np.take_along_axis(part, order, axis=1)
            all_idx[start : start + len(d)] = idx
            all_dist[start : start + len(d)] = np.take_along_axis(d, idx, axis=1)
        return all_dist, all_idx

    def predict(self, X):
        dist, idx = self.kneighbors(X)
        n_labels = len(self.classes_)
        votes = self.y_index_[idx]
        counts = np.zeros((len(idx), n_labels), dtype=np.int64)
        np.add.at(counts, (np.arange(len(idx))[:, None], votes), 1)
        nearest = np.full((len(idx), n_labels), np.iinfo(np.int64).max)
        np.minimum.at(nearest, (np.arange(len(idx))[:, None], votes), dist)
        tied = counts == counts.max(axis=1, keepdims=True)
        score = np.where(tied, nearest, np.iinfo(np.int64).max)
        return self.classes_[np.argmin(score, axis=1)]


def knn_accuracy(train_codes, train_labels, eval_codes, eval_labels, k=5):
    Xtr, Xev = _paired(train_codes, eval_codes)
    clf = HammingKNNClassifier(n_neighbors=k).fit(Xtr, train_labels)
    acc = float(np.mean(clf.predict(Xev) == np.asarray(eval_labels)))
    # each training code counts itself among its neighbours
    train_acc = float(np.mean(clf.predict(Xtr) == np.asarray(train_labels)))
    return ProbeResult("knn", train_acc, acc, clf.get_params())


# --- logistic regression ----------------------------------------------------


class CodeLogisticRegression(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression on raw 0/1 code features.

    Plain minibatch gradient descent on mean cross-entropy plus
    ``l2 / 2 * ||W||^2`` (bias unpenalised), zero initialisation.
    """

    def __init__(
        self,
        l2=1e-4,
        epochs=100,
        lr=0.1,
        lr_decay=0.5,
        lr_decay_every=25,
        batch_size=128,
        random_state=0,
    ):
        self.l2 = l2
        self.epochs = epochs
        self.lr = lr
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        bits, _ = as_bit_matrix(X)
        y = check_labels(y, bits.shape[0])
        self.classes_, yi = np.unique(y, return_inverse=True)
        Xf = bits.astype(np.float64)
        n, L = Xf.shape
        c = len(self.classes_)
        W = np.zeros((L, c))
        b = np.zeros(c)
        rng = check_random_state(self.random_state)
        for epoch in range(self.epochs):
            lr = self.lr * self.lr_decay ** (epoch // self.lr_decay_every)
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                logits = Xf[idx] @ W + b
                logits -= logits.max(1, keepdims=True)
                p = np.exp(logits)
                p /= p.sum(1, keepdims=True)
                p[np.arange(len(idx)), yi[idx]] -= 1.0
                p /= len(idx)
                W -= lr * (Xf[idx].T @ p + self.l2 * W)
                b -= lr * p.sum(0)
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ProbeFailedError(f"logistic regression diverged at epoch {epoch + 1}")
        self.coef_ = W.T
        self.intercept_ = b
        self.n_features_in_ = L
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        bits, _ = as_bit_matrix(X)
        return bits.astype(np.float64) @ self.coef_.T + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def logreg_accuracy(train_codes, train_labels, test_codes, test_labels, config=None):
    """``config`` overrides :class:`CodeLogisticRegression` parameters."""
    Xtr, Xte = _paired(train_codes, test_codes)
    clf = CodeLogisticRegression(**(config or {})).fit(Xtr, train_labels)
    train_acc = float(np.mean(clf.predict(Xtr) == np.asarray(train_labels)))
    test_acc = float(np.mean(clf.predict(Xte) == np.asarray(test_labels)))
    if not (math.isfinite(train_acc) and math.isfinite(test_acc)):
        raise ProbeFailedError("non-finite accuracy")
    return ProbeResult("logreg", train_acc, test_acc, clf.get_params())
