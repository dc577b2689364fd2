"""Stochastic activation diameters.

Along the line ``x + t*u`` and with the activation pattern of ``x`` held
fixed, every pre-activation is affine in ``t``. The region's chord through
``x`` therefore ends at the first sign change on either side, which we get
in closed form from one forward-like pass.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import DimensionError, check_inputs, check_random_state
from .nn import MlpModel

logger = logging.getLogger(__name__)

DEFAULT_CAP = 1e6
SLOPE_TOL = 1e-12


class BoundaryPointError(ValueError):
    """The anchor point has a pre-activation of exactly zero."""


@dataclass(frozen=True)
class DiameterSample:
    anchor_index: int
    direction: np.ndarray
    t_lo: float
    t_hi: float
    bounded_lo: bool
    bounded_hi: bool

    @property
    def diameter(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def bounded(self) -> bool:
        return self.bounded_lo and self.bounded_hi


@dataclass
class DiameterSummary:
    """Diameters over a set of anchors.

    ``mean`` averages only fully bounded samples; ``unbounded_count`` says
    how many were left out. ``skipped`` lists anchors that sat on a region
    boundary for two directions in a row.
    """

    samples: list[DiameterSample] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)

    @property
    def diameters(self) -> np.ndarray:
        return np.array([s.diameter for s in self.samples])

    @property
    def bounded_count(self) -> int:
        return sum(s.bounded for s in self.samples)

    @property
    def unbounded_count(self) -> int:
        return len(self.samples) - self.bounded_count

    @property
    def mean(self) -> float:
        bounded = [s.diameter for s in self.samples if s.bounded]
        return float(np.mean(bounded)) if bounded else float("nan")

    def histogram(self, bins=30, range=None):
        """Counts over bounded diameters, as ``np.histogram`` returns them."""
        bounded = np.array([s.diameter for s in self.samples if s.bounded])
        return np.histogram(bounded, bins=bins, range=range)


def sample_direction(d_x: int, rng=None) -> np.ndarray:
    """Uniform direction on the unit sphere in ``R^d_x``."""
    if d_x < 1:
        raise ValueError("dimension must be at least 1")
    rng = check_random_state(rng)
    while True:
        g = rng.standard_normal(d_x)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


def _line_preactivations(model: MlpModel, x: np.ndarray, u: np.ndarray):
    """Offsets and slopes of every hidden pre-activation along ``x + t*u``
    with the pattern at ``t = 0`` frozen."""
    offset, slope = x, u
    offsets, slopes = [], []
    for k in range(model.n_hidden):
        W, b = model.weights[k], model.biases[k]
        a = W @ offset + b
        s = W @ slope
        if model.bn is not None:
            scale, shift = model.bn[k].inference_affine()
            a = a * scale + shift
            s = s * scale
        offsets.append(a)
        slopes.append(s)
        on = a > 0
        offset = np.where(on, a, 0.0)
        slope = np.where(on, s, 0.0)
    return np.concatenate(offsets), np.concatenate(slopes)


def region_interval(
    model: MlpModel, x, direction, cap: float = DEFAULT_CAP, anchor_index: int = -1
) -> DiameterSample:
    """Exact parameter interval ``[t_lo, t_hi]`` of the activation region of
    ``x`` along ``direction``. Sides without a crossing are clamped to
    ``-cap``/``cap`` and flagged unbounded."""
    X, _ = check_inputs(x, model.input_dim)
    U, _ = check_inputs(direction, model.input_dim)
    if X.shape[0] != 1 or U.shape[0] != 1:
        raise DimensionError("region_interval takes one point and one direction")
    alpha, beta = _line_preactivations(model, X[0], U[0])
    if np.any(alpha == 0):
        raise BoundaryPointError("anchor lies on a region boundary")
    moving = np.abs(beta) > SLOPE_TOL
    t_cross = -alpha[moving] / beta[moving]
    ahead = t_cross[t_cross > 0]
    behind = t_cross[t_cross < 0]
    t_hi = float(ahead.min()) if ahead.size else cap
    t_lo = float(behind.max()) if behind.size else -cap
    return DiameterSample(
        anchor_index=anchor_index,
        direction=U[0].copy(),
        t_lo=max(t_lo, -cap),
        t_hi=min(t_hi, cap),
        bounded_lo=bool(behind.size) and t_lo > -cap,
        bounded_hi=bool(ahead.size) and t_hi < cap,
    )


def avg_stochastic_diameter(
    model: MlpModel,
    examples,
    rng=None,
    cap: float = DEFAULT_CAP,
    shared_direction: bool = False,
    indices=None,
) -> DiameterSummary:
    """Chord lengths through each example along a random direction.

    A fresh direction is drawn per example unless ``shared_direction``. An
    example on a region boundary gets one redrawn direction, then is
    skipped. ``indices`` names the examples in the returned samples.
    """
    X, _ = check_inputs(examples, model.input_dim)
    if X.shape[0] == 0:
        raise ValueError("no examples given")
    rng = check_random_state(rng)
    indices = np.arange(len(X)) if indices is None else np.asarray(indices)
    summary = DiameterSummary()
    shared = sample_direction(model.input_dim, rng) if shared_direction else None
    for i, x in zip(indices, X):
        u = shared if shared is not None else sample_direction(model.input_dim, rng)
        try:
            summary.samples.append(region_interval(model, x, u, cap, int(i)))
            continue
        except BoundaryPointError:
            pass
        try:
            u = sample_direction(model.input_dim, rng)
            summary.samples.append(region_interval(model, x, u, cap, int(i)))
        except BoundaryPointError:
            # a zero pre-activation does not depend on the direction
            logger.warning("example %d lies on a region boundary; skipped", i)
            summary.skipped.append(int(i))
    return summary


def write_histogram_csv(path, summary: DiameterSummary) -> None:
    """One ``diameter,bounded_lo,bounded_hi`` row per sample."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["diameter", "bounded_lo", "bounded_hi"])
        for s in summary.samples:
            w.writerow([repr(s.diameter), int(s.bounded_lo), int(s.bounded_hi)])


def read_histogram_csv(path) -> list[tuple[float, bool, bool]]:
    with open(path, newline="") as fh:
        return [
            (float(r["diameter"]), r["bounded_lo"] == "1", r["bounded_hi"] == "1")
            for r in csv.DictReader(fh)
        ]
