"""Dataset loading and synthetic controls.

Real datasets are read from user-supplied files; nothing is downloaded.
``load_mnist``/``load_cifar10`` look under ``$NEURALHASH_DATA`` (default
``~/.cache/neuralhash``) for ``mnist/*-ubyte`` and
``cifar-10-batches-bin/*.bin``.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import DimensionError, check_random_state

logger = logging.getLogger(__name__)

DATA_ENV = "NEURALHASH_DATA"
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
PROVENANCES = {
    "mnist_train",
    "mnist_test",
    "cifar10_train",
    "cifar10_test",
    "random_ball",
    "random_pixel",
    "derived",
}


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    """Inputs ``X`` (``n x d_X`` float64) and integer labels ``y``.

    Pixels lie in ``[0, 1]`` for every provenance except ``random_ball``,
    whose points fill the unit ball around the origin.
    """

    X: np.ndarray
    y: np.ndarray
    provenance: str = "derived"
    n_classes: int = 10
    noisy_indices: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DimensionError(f"X {self.X.shape} and y {self.y.shape} do not pair up")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("labels out of range")
        if self.provenance != "random_ball" and self.X.size:
            if self.X.min() < 0 or self.X.max() > 1:
                raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self):
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def take(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], "derived", self.n_classes)


def data_dir() -> Path:
    return Path(os.environ.get(DATA_ENV, Path.home() / ".cache" / "neuralhash"))


def _read(path) -> bytes:
    return Path(path).read_bytes()


def load_mnist_idx(images_path, labels_path, provenance="derived") -> Dataset:
    """Parse an IDX image/label file pair; pixels are scaled by 1/255."""
    raw_x = _read(images_path)
    raw_y = _read(labels_path)
    if len(raw_x) < 16:
        raise DatasetFormatError(f"{images_path}: truncated header")
    magic, count, rows, cols = struct.unpack(">IIII", raw_x[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetFormatError(f"{images_path}: bad magic {magic:#010x}")
    if len(raw_x) != 16 + count * rows * cols:
        raise DatasetFormatError(f"{images_path}: expected {count} images, file is truncated")
    if len(raw_y) < 8:
        raise DatasetFormatError(f"{labels_path}: truncated header")
    magic_y, count_y = struct.unpack(">II", raw_y[:8])
    if magic_y != IDX_LABELS_MAGIC:
        raise DatasetFormatError(f"{labels_path}: bad magic {magic_y:#010x}")
    if len(raw_y) != 8 + count_y:
        raise DatasetFormatError(f"{labels_path}: expected {count_y} labels, file is truncated")
    if count != count_y:
        raise DatasetFormatError(f"{count} images but {count_y} labels")
    X = np.frombuffer(raw_x, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    y = np.frombuffer(raw_y, dtype=np.uint8, offset=8)
    if y.size and y.max() > 9:
        raise DatasetFormatError(f"{labels_path}: label {y.max()} out of range")
    return Dataset(X / 255.0, y.astype(np.int64), provenance)


def load_cifar10_bin(paths, provenance="derived") -> Dataset:
    """Concatenate CIFAR-10 binary batches; images are flattened R, G, B planes."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    xs, ys = [], []
    for path in paths:
        raw = _read(path)
        if len(raw) == 0 or len(raw) % CIFAR_RECORD:
            raise DatasetFormatError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        if rec[:, 0].max() > 9:
            raise DatasetFormatError(f"{path}: label {rec[:, 0].max()} out of range")
        ys.append(rec[:, 0].astype(np.int64))
        xs.append(rec[:, 1:])
    return Dataset(np.concatenate(xs) / 255.0, np.concatenate(ys), provenance)


def load_mnist(split="train", root=None) -> Dataset:
    root = Path(root) if root is not None else data_dir() / "mnist"
    prefix = "train" if split == "train" else "t10k"
    return load_mnist_idx(
        root / f"{prefix}-images-idx3-ubyte",
        root / f"{prefix}-labels-idx1-ubyte",
        provenance=f"mnist_{'train' if split == 'train' else 'test'}",
    )


def load_cifar10(split="train", root=None) -> Dataset:
    root = Path(root) if root is not None else data_dir() / "cifar-10-batches-bin"
    if split == "train":
        files = [root / f"data_batch_{i}.bin" for i in range(1, 6)]
    else:
        files = [root / "test_batch.bin"]
    return load_cifar10_bin(files, provenance=f"cifar10_{'train' if split == 'train' else 'test'}")


def mnist_available(root=None) -> bool:
    root = Path(root) if root is not None else data_dir() / "mnist"
    return all(
        (root / f).exists()
        for f in (
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        )
    )


def subsample(dataset: Dataset, size: int, seed=0) -> Dataset:
    """Uniform draw of ``size`` examples without replacement, kept in original order."""
    n = len(dataset)
    if not 1 <= size <= n:
        raise ValueError(f"subsample size {size} outside [1, {n}]")
    idx = np.sort(check_random_state(seed).choice(n, size=size, replace=False))
    out = Dataset(dataset.X[idx], dataset.y[idx], "derived", dataset.n_classes)
    logger.info("subsample of %d: class counts %s", size, out.class_counts().tolist())
    return out


def random_ball(n: int, d_x: int, seed=0, n_classes: int = 10) -> Dataset:
    """``n`` points uniform in the unit ball of ``R^d_x``; labels are placeholders."""
    if n < 1 or d_x < 1:
        raise ValueError("n and d_x must be positive")
    rng = check_random_state(seed)
    g = rng.standard_normal((n, d_x))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d_x)
    y = rng.integers(0, n_classes, size=n)
    return Dataset(r * g, y, "random_ball", n_classes)


def random_pixels(n: int, d_x: int = 784, seed=0, n_classes: int = 10) -> Dataset:
    """I.i.d. ``U(0, 1)`` pixels with uniformly random labels."""
    if n < 1 or d_x < 1:
        raise ValueError("n and d_x must be positive")
    rng = check_random_state(seed)
    X = rng.uniform(0.0, 1.0, size=(n, d_x))
    y = rng.integers(0, n_classes, size=n)
    return Dataset(X, y, "random_pixel", n_classes)


def inject_label_noise(dataset: Dataset, rate: float, seed=0) -> Dataset:
    """Redraw the labels of ``floor(rate * n)`` random examples uniformly over
    all classes (a redraw may land on the original label)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate {rate} outside [0, 1]")
    n = len(dataset)
    n_noisy = int(np.floor(rate * n))
    rng = check_random_state(seed)
    idx = rng.choice(n, size=n_noisy, replace=False)
    y = dataset.y.copy()
    y[idx] = rng.integers(0, dataset.n_classes, size=n_noisy)
    logger.info(
        "label noise rate %.3f: %d redrawn, %d changed (expected flip rate %.3f)",
        rate,
        n_noisy,
        int(np.sum(y != dataset.y)),
        rate * (dataset.n_classes - 1) / dataset.n_classes,
    )
    return Dataset(dataset.X, y, dataset.provenance, dataset.n_classes, np.sort(idx))
