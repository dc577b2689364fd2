import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralhash.codes import code_matrix
from neuralhash.geometry import (
    BoundaryPointError,
    avg_stochastic_diameter,
    read_histogram_csv,
    region_interval,
    sample_direction,
    write_histogram_csv,
)
from neuralhash.nn import MlpModel

from .conftest import random_model


def code_at(model, x):
    return code_matrix(model, x[None, :])[0]


def scan_and_bisect(model, x, u, cap, step=1e-3, tol=1e-9):
    """Walk outward in fixed steps until the code changes, then bisect.

    Returns ``(t_lo, t_hi)``; a side that never changes before ``cap``
    comes back as +-cap. Only code equality is used, never the slopes.
    """
    c0 = code_at(model, x)
    ends = []
    for sign in (-1.0, 1.0):
        inside, t = 0.0, step
        found = None
        while t < cap:
            if not np.array_equal(code_at(model, x + sign * t * u), c0):
                found = t
                break
            inside = t
            t = t + step if t < 1.0 else t * 2.0
        if found is None:
            ends.append(sign * cap)
            continue
        lo, hi = inside, found
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if np.array_equal(code_at(model, x + sign * mid * u), c0):
                lo = mid
            else:
                hi = mid
        ends.append(sign * 0.5 * (lo + hi))
    return ends[0], ends[1]


def two_unit_model():
    # z1 = x1, z2 = 1 - x1
    W0 = np.array([[1.0, 0.0], [-1.0, 0.0]])
    b0 = np.array([0.0, 1.0])
    return MlpModel((2, 2, 2), [W0, np.eye(2)], [b0, np.zeros(2)])


def test_analytic_two_unit_interval():
    s = region_interval(two_unit_model(), np.array([0.3, 0.5]), np.array([1.0, 0.0]))
    assert s.t_lo == pytest.approx(-0.3) and s.t_hi == pytest.approx(0.7)
    assert s.diameter == pytest.approx(1.0)
    assert s.bounded


def test_direction_parallel_to_boundaries_is_unbounded():
    s = region_interval(two_unit_model(), np.array([0.3, 0.5]), np.array([0.0, 1.0]), cap=50.0)
    assert (s.t_lo, s.t_hi) == (-50.0, 50.0)
    assert not s.bounded_lo and not s.bounded_hi


def test_one_sided_region():
    # a single unit z = x1: only the negative side has a boundary
    model = MlpModel((1, 1, 2), [np.ones((1, 1)), np.ones((2, 1))], [np.zeros(1), np.zeros(2)])
    s = region_interval(model, np.array([2.0]), np.array([1.0]), cap=100.0)
    assert s.t_lo == pytest.approx(-2.0) and s.bounded_lo
    assert s.t_hi == 100.0 and not s.bounded_hi


def test_boundary_point_raises():
    with pytest.raises(BoundaryPointError):
        region_interval(two_unit_model(), np.array([0.0, 0.5]), np.array([1.0, 0.0]))


def test_matches_scan_and_bisect_oracle():
    gen = np.random.default_rng(2024)
    checked = 0
    for trial in range(40):
        model = random_model(gen, max_width=30, d_x=int(gen.integers(2, 10)), bn=trial % 4 == 0)
        x = gen.uniform(size=model.input_dim)
        u = sample_direction(model.input_dim, gen)
        s = region_interval(model, x, u, cap=1e3)
        lo, hi = scan_and_bisect(model, x, u, cap=1e3)
        if s.bounded_lo:
            assert s.t_lo == pytest.approx(lo, abs=1e-6)
            checked += 1
        else:
            assert lo == -1e3
        if s.bounded_hi:
            assert s.t_hi == pytest.approx(hi, abs=1e-6)
            checked += 1
        else:
            assert hi == 1e3
    assert checked > 40


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_interior_points_share_the_code(seed):
    gen = np.random.default_rng(seed)
    model = random_model(gen, d_x=5)
    x = gen.uniform(size=5)
    u = sample_direction(5, gen)
    s = region_interval(model, x, u, cap=1e4)
    c0 = code_at(model, x)
    for f in gen.uniform(0.001, 0.999, size=10):
        t = s.t_lo + f * (s.t_hi - s.t_lo)
        assert np.array_equal(code_at(model, x + t * u), c0)
    nudge = 1e-6 * (s.t_hi - s.t_lo)
    if s.bounded_hi:
        assert not np.array_equal(code_at(model, x + (s.t_hi + nudge) * u), c0)
    if s.bounded_lo:
        assert not np.array_equal(code_at(model, x + (s.t_lo - nudge) * u), c0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10.0))
def test_direction_sign_and_scale(seed, scale):
    gen = np.random.default_rng(seed)
    model = random_model(gen, d_x=4)
    x = gen.uniform(size=4)
    u = sample_direction(4, gen)
    cap = 1e5
    s = region_interval(model, x, u, cap=cap)
    flipped = region_interval(model, x, -u, cap=cap)
    assert flipped.t_lo == pytest.approx(-s.t_hi) and flipped.t_hi == pytest.approx(-s.t_lo)
    assert (flipped.bounded_lo, flipped.bounded_hi) == (s.bounded_hi, s.bounded_lo)
    scaled = region_interval(model, x, scale * u, cap=cap)
    if s.bounded:
        assert scaled.diameter == pytest.approx(s.diameter / scale, rel=1e-9)


def test_sample_direction_unit_norm(rng):
    dirs = np.array([sample_direction(10, rng) for _ in range(2000)])
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)
    assert np.abs(dirs.mean(0)).max() < 0.05
    with pytest.raises(ValueError):
        sample_direction(0)


def test_avg_diameter_summary(small_model, rng):
    X = rng.uniform(size=(25, 6))
    summary = avg_stochastic_diameter(small_model, X, np.random.default_rng(0), cap=1e4)
    assert len(summary.samples) == 25 and not summary.skipped
    assert summary.bounded_count + summary.unbounded_count == 25
    bounded = [s.diameter for s in summary.samples if s.bounded]
    assert summary.mean == pytest.approx(np.mean(bounded))
    counts, _ = summary.histogram(bins=5)
    assert counts.sum() == summary.bounded_count
    again = avg_stochastic_diameter(small_model, X, np.random.default_rng(0), cap=1e4)
    np.testing.assert_array_equal(again.diameters, summary.diameters)


def test_shared_direction(small_model, rng):
    X = rng.uniform(size=(5, 6))
    summary = avg_stochastic_diameter(small_model, X, rng, shared_direction=True)
    dirs = np.array([s.direction for s in summary.samples])
    assert (dirs == dirs[0]).all()


def test_boundary_examples_are_skipped(caplog):
    X = np.array([[0.0, 0.5], [0.3, 0.5]])
    summary = avg_stochastic_diameter(two_unit_model(), X, np.random.default_rng(0))
    assert summary.skipped == [0]
    assert [s.anchor_index for s in summary.samples] == [1]
    assert "boundary" in caplog.text


def test_histogram_csv_round_trip(tmp_path, small_model, rng):
    summary = avg_stochastic_diameter(small_model, rng.uniform(size=(8, 6)), rng, cap=10.0)
    path = tmp_path / "hist.csv"
    write_histogram_csv(path, summary)
    rows = read_histogram_csv(path)
    assert [r[0] for r in rows] == summary.diameters.tolist()
    assert [r[1] for r in rows] == [s.bounded_lo for s in summary.samples]
