"""Neural codes: the on/off pattern of every hidden ReLU for one input.

A code is a packed bit vector ordered layer by layer (layer 1 units first).
It carries its per-layer widths so codes from different architectures are
never compared by accident.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, check_bit_matrix
from .nn import MlpModel, forward


class LayoutMismatchError(ValueError):
    pass


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack an ``(n, L)`` 0/1 matrix into ``(n, ceil(L/64))`` uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    n, length = bits.shape
    n_words = max(1, -(-length // 64))
    packed = np.packbits(bits, axis=1, bitorder="little")
    out = np.zeros((n, n_words * 8), dtype=np.uint8)
    out[:, : packed.shape[1]] = packed
    return out.view("<u8")


def _unpack_row(words: np.ndarray, length: int) -> np.ndarray:
    return np.unpackbits(words.view(np.uint8), bitorder="little")[:length]


class NeuralCode:
    """Immutable packed activation pattern."""

    __slots__ = ("_words", "_layout", "_hash")

    def __init__(self, bits, layout=None):
        bits = np.asarray(bits).reshape(-1)
        if bits.size and not np.all((bits == 0) | (bits == 1)):
            raise ValueError("code bits must be 0 or 1")
        layout = (bits.size,) if layout is None else tuple(int(w) for w in layout)
        if sum(layout) != bits.size or any(w <= 0 for w in layout):
            raise LayoutMismatchError(f"layout {layout} does not cover {bits.size} bits")
        words = _pack_rows(bits[None, :])[0]
        self._init(words, layout)

    def _init(self, words, layout):
        words = np.array(words, dtype="<u8")
        words.setflags(write=False)
        self._words = words
        self._layout = layout
        self._hash = hash((layout, words.tobytes()))

    @classmethod
    def from_words(cls, words, layout) -> "NeuralCode":
        code = cls.__new__(cls)
        layout = tuple(int(w) for w in layout)
        words = np.asarray(words, dtype="<u8")
        if words.shape != (max(1, -(-sum(layout) // 64)),):
            raise LayoutMismatchError("word count does not match layout")
        code._init(words, layout)
        return code

    @classmethod
    def from_string(cls, bitstring: str, layout=None) -> "NeuralCode":
        return cls(np.frombuffer(bitstring.encode("ascii"), dtype=np.uint8) - ord("0"), layout)

    @property
    def words(self) -> np.ndarray:
        return self._words

    @property
    def layout(self) -> tuple[int, ...]:
        return self._layout

    @property
    def bits(self) -> np.ndarray:
        return _unpack_row(self._words, len(self))

    def __len__(self):
        return sum(self._layout)

    def __eq__(self, other):
        if not isinstance(other, NeuralCode):
            return NotImplemented
        return self._layout == other._layout and np.array_equal(self._words, other._words)

    def __hash__(self):
        return self._hash

    def __str__(self):
        return "".join("1" if b else "0" for b in self.bits)

    def __repr__(self):
        return f"NeuralCode({str(self)!r}, layout={self._layout})"

    def layer_bits(self, layer: int) -> np.ndarray:
        """Bits of hidden layer ``layer`` (1-based)."""
        start = sum(self._layout[: layer - 1])
        return self.bits[start : start + self._layout[layer - 1]]


@dataclass(frozen=True)
class LayerMask:
    """Set of 1-based hidden-layer indices to keep."""

    selected_layers: frozenset

    def __init__(self, layers):
        object.__setattr__(self, "selected_layers", frozenset(int(k) for k in layers))
        if not self.selected_layers:
            raise ValueError("layer mask must select at least one layer")

    @classmethod
    def parse(cls, text: str) -> "LayerMask":
        """Parse ``"1,3"`` or ``"1-3"`` (inclusive ranges) style specs."""
        layers = set()
        for part in text.replace(" ", "").split(","):
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-")
                layers.update(range(int(lo), int(hi) + 1))
            else:
                layers.add(int(part))
        return cls(layers)

    def check(self, layout) -> list[int]:
        layers = sorted(self.selected_layers)
        if layers[0] < 1 or layers[-1] > len(layout):
            raise ValueError(f"mask {layers} out of range for {len(layout)} layers")
        return layers

    def columns(self, layout) -> np.ndarray:
        """Bit positions selected by this mask, ascending."""
        offsets = np.concatenate([[0], np.cumsum(layout)])
        return np.concatenate(
            [np.arange(offsets[k - 1], offsets[k]) for k in self.check(layout)]
        )

    def __str__(self):
        return ",".join(str(k) for k in sorted(self.selected_layers))


def code_matrix(model: MlpModel, X) -> np.ndarray:
    """Codes of a batch as an ``(n, code_length)`` uint8 matrix."""
    trace = forward(model, X)
    pre = trace.preactivations
    if pre[0].ndim == 1:
        pre = [z[None, :] for z in pre]
    return np.concatenate([(z > 0) for z in pre], axis=1).astype(np.uint8)


def encode(model: MlpModel, x) -> NeuralCode:
    """Code of a single input; bit is 1 iff its pre-activation is strictly positive."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"encode takes one sample, got shape {x.shape}")
    return NeuralCode(code_matrix(model, x)[0], model.hidden_widths)


def encode_batch(model: MlpModel, X) -> list[NeuralCode]:
    return codes_from_matrix(code_matrix(model, X), model.hidden_widths)


def codes_from_matrix(bits, layout=None) -> list[NeuralCode]:
    bits = check_bit_matrix(bits)
    layout = (bits.shape[1],) if layout is None else tuple(layout)
    if sum(layout) != bits.shape[1]:
        raise LayoutMismatchError(f"layout {layout} does not cover {bits.shape[1]} bits")
    return [NeuralCode.from_words(w, layout) for w in _pack_rows(bits)]


def codes_to_matrix(codes) -> tuple[np.ndarray, tuple[int, ...]]:
    """Stack codes into a 0/1 matrix; all codes must share one layout."""
    codes = list(codes)
    if not codes:
        raise ValueError("no codes given")
    layout = codes[0].layout
    for c in codes:
        if c.layout != layout:
            raise LayoutMismatchError(f"layouts {layout} and {c.layout} differ")
    words = np.stack([c.words for c in codes])
    bits = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")
    return bits[:, : sum(layout)], layout


def restrict(code: NeuralCode, mask: LayerMask) -> NeuralCode:
    """Keep only the layers in ``mask``, concatenated in ascending order."""
    layers = mask.check(code.layout)
    bits = code.bits[mask.columns(code.layout)]
    return NeuralCode(bits, [code.layout[k - 1] for k in layers])


def restrict_matrix(bits: np.ndarray, layout, mask: LayerMask):
    """Matrix version of :func:`restrict`; returns ``(bits, layout)``."""
    layout = tuple(layout)
    layers = mask.check(layout)
    return bits[:, mask.columns(layout)], tuple(layout[k - 1] for k in layers)


def hamming(a: NeuralCode, b: NeuralCode) -> int:
    if a.layout != b.layout:
        raise LayoutMismatchError(f"layouts {a.layout} and {b.layout} differ")
    return int(np.bitwise_count(a.words ^ b.words).sum())


@dataclass
class CodeTable:
    """Distinct codes mapped to the sorted indices of the examples carrying them."""

    buckets: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return sum(len(v) for v in self.buckets.values())

    @property
    def m(self) -> int:
        return len(self.buckets)

    @property
    def largest_bucket(self) -> int:
        return max((len(v) for v in self.buckets.values()), default=0)

    def bucket_sizes(self) -> list[int]:
        return sorted(len(v) for v in self.buckets.values())

    def merge(self, other: "CodeTable") -> "CodeTable":
        """Union of two tables built over disjoint index ranges."""
        merged = defaultdict(list)
        for table in (self, other):
            for code, idx in table.buckets.items():
                merged[code].extend(idx)
        return CodeTable({c: sorted(v) for c, v in merged.items()})


def build_code_table(codes, layout=None, offset: int = 0) -> CodeTable:
    """Group example indices by code.

    ``codes`` is a sequence of :class:`NeuralCode` or a 0/1 matrix (then
    ``layout`` defaults to one layer). ``offset`` is added to every index,
    which lets per-chunk tables be merged.
    """
    if isinstance(codes, np.ndarray):
        bits = check_bit_matrix(codes)
        layout = (bits.shape[1],) if layout is None else tuple(layout)
        packed = _pack_rows(bits)
        uniq, inverse = np.unique(packed, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
        buckets = {}
        for u in range(len(uniq)):
            key = NeuralCode.from_words(uniq[u], layout)
            buckets[key] = (order[bounds[u] : bounds[u + 1]] + offset).tolist()
        return CodeTable(buckets)
    codes = list(codes)
    if not codes:
        raise ValueError("cannot build a table from no codes")
    buckets = defaultdict(list)
    for i, c in enumerate(codes):
        buckets[c].append(i + offset)
    return CodeTable(dict(buckets))


def write_code_export(path, codes, labels) -> None:
    """One ``index,label,bitstring`` line per example."""
    if isinstance(codes, np.ndarray):
        bits = check_bit_matrix(codes)
    else:
        bits, _ = codes_to_matrix(codes)
    labels = np.asarray(labels)
    if len(labels) != len(bits):
        raise DimensionError("one label per code expected")
    chars = (bits + ord("0")).astype(np.uint8)
    with open(Path(path), "w", encoding="ascii") as fh:
        for i, (row, label) in enumerate(zip(chars, labels)):
            fh.write(f"{i},{int(label)},{row.tobytes().decode('ascii')}\n")


def read_code_export(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_code_export`: ``(indices, labels, bits)``."""
    idx, labels, rows = [], [], []
    with open(Path(path), encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, label, bitstring = line.split(",")
            idx.append(int(i))
            labels.append(int(label))
            rows.append(np.frombuffer(bitstring.encode("ascii"), dtype=np.uint8) - ord("0"))
    return np.array(idx), np.array(labels), check_bit_matrix(np.stack(rows))


class NeuralCodeEncoder(TransformerMixin, BaseEstimator):
    """Transformer mapping inputs to neural codes of a fixed trained model.

    ``model`` may be an :class:`MlpModel` or a fitted
    :class:`~neuralhash.nn.ReLUMLPClassifier`. ``layers`` optionally
    restricts the code to a subset of hidden layers (1-based).
    """

    def __init__(self, model=None, layers=None):
        self.model = model
        self.layers = layers

    def fit(self, X=None, y=None):
        model = getattr(self.model, "model_", self.model)
        if not isinstance(model, MlpModel):
            raise TypeError("model must be an MlpModel or a fitted ReLUMLPClassifier")
        self.model_ = model
        self.layout_ = model.hidden_widths
        self.mask_ = None if self.layers is None else LayerMask(self.layers)
        if self.mask_ is not None:
            self.layout_ = restrict_matrix(
                np.zeros((1, model.code_length), np.uint8), model.hidden_widths, self.mask_
            )[1]
        self.n_features_in_ = model.input_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        bits = code_matrix(self.model_, X)
        if self.mask_ is not None:
            bits, _ = restrict_matrix(bits, self.model_.hidden_widths, self.mask_)
        return bits
