"""Input validation helpers shared by the estimators and functional API."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


class DimensionError(ValueError):
    """Raised when array shapes or layer dimensions do not fit together."""


def check_layer_dims(layer_dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise DimensionError(f"need at least input and output dims, got {dims}")
    if any(d <= 0 for d in dims):
        raise DimensionError(f"layer dims must be positive, got {dims}")
    return dims


def check_inputs(X, n_features: int | None = None) -> tuple[np.ndarray, bool]:
    """Coerce ``X`` to a float64 2-D array.

    Returns the array and whether the caller passed a single 1-D sample, so
    results can be squeezed back to the caller's shape.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError(f"expected 1-D or 2-D input, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionError(f"expected {n_features} features, got {X.shape[1]}")
    return X, single


def check_labels(y, n_samples: int, n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise DimensionError(f"labels shape {y.shape} does not match {n_samples} samples")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(f"label {y.max()} out of range for {n_classes} classes")
    return y


def check_bit_matrix(codes) -> np.ndarray:
    """Return ``codes`` as a 2-D uint8 array of zeros and ones."""
    arr = check_array(codes, dtype=None, ensure_2d=True, ensure_min_samples=1)
    if arr.dtype != np.uint8:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("code matrix must contain only 0/1 values")
        arr = arr.astype(np.uint8)
    elif arr.size and arr.max() > 1:
        raise ValueError("code matrix must contain only 0/1 values")
    return arr


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
