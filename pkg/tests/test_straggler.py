import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csgd import rng as streams
from csgd.errors import SupportTooLargeError
from csgd.straggler import (
    Constant,
    ShiftedGeometric,
    TwoPoint,
    UniformRange,
    expected_inverse_sum,
    from_dict,
    inverse_mean,
    mean_batch,
    moments,
    moments_closed_form,
    moments_monte_carlo,
    sample_batches,
)
from tests.oracles import TWO_POINT_MU2, geometric_inverse_mean, moments_fraction

SKEWED = TwoPoint(1, 60, 0.8)


def close(x, y, se):
    # 4 SE plus a floor for rounding when the SE itself collapses to ~0
    return abs(x - y) <= 4 * se + 1e-12


# -- streams ------------------------------------------------------------------


def test_streams_are_reproducible_and_distinct():
    a = streams.stream(7, streams.BATCH, 3, 2).random(5)
    b = streams.stream(7, streams.BATCH, 3, 2).random(5)
    c = streams.stream(7, streams.BATCH, 3, 1).random(5)
    d = streams.stream(7, streams.DATA, 3, 2).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_stream_seed_range():
    streams.stream(2**64 - 1, 0)
    with pytest.raises(ValueError):
        streams.stream(2**64, 0)
    with pytest.raises(ValueError):
        streams.stream(-1, 0)


# -- models -------------------------------------------------------------------


def test_sample_examples():
    rng = np.random.default_rng(0)
    B, b = sample_batches(Constant(5), 3, rng)
    assert B.tolist() == [5, 5, 5] and b == 15
    B, _ = sample_batches(SKEWED, 10, rng)
    assert set(B.tolist()) <= {1, 60}
    B, b = sample_batches(TwoPoint(1, 60, 1.0), 4, rng)
    assert B.tolist() == [60] * 4 and b == 240


def test_sample_needs_two_workers():
    with pytest.raises(ValueError):
        sample_batches(SKEWED, 1, np.random.default_rng(0))


@pytest.mark.parametrize(
    "model", [SKEWED, Constant(3), UniformRange(2, 7), ShiftedGeometric(0.3)], ids=lambda m: type(m).__name__
)
def test_support_at_least_one(model):
    B = np.asarray(model.sample(np.random.default_rng(1), 10_000))
    assert B.min() >= 1 and B.dtype == np.int64


def test_two_point_frequency():
    B = SKEWED.sample(np.random.default_rng(2), 100_000)
    p = (B == 60).mean()
    assert abs(p - 0.8) <= 4 * math.sqrt(0.16 / 100_000)


@pytest.mark.parametrize(
    "bad",
    [lambda: TwoPoint(0, 5, 0.5), lambda: TwoPoint(5, 2, 0.5), lambda: TwoPoint(1, 2, 1.5), lambda: Constant(0),
     lambda: UniformRange(3, 2), lambda: ShiftedGeometric(0.0)],
)
def test_invalid_models(bad):
    with pytest.raises(ValueError):
        bad()


def test_mean_and_inverse_mean():
    assert mean_batch(SKEWED) == pytest.approx(48.2)
    assert inverse_mean(SKEWED) == pytest.approx(TWO_POINT_MU2, rel=1e-15)
    assert inverse_mean(UniformRange(1, 3)) == pytest.approx((1 + 1 / 2 + 1 / 3) / 3)
    assert inverse_mean(ShiftedGeometric(0.3)) == pytest.approx(geometric_inverse_mean(0.3), rel=1e-12)
    assert inverse_mean(ShiftedGeometric(1.0)) == 1.0
    assert mean_batch(ShiftedGeometric(0.25)) == 4.0


# -- moments ------------------------------------------------------------------


@pytest.mark.parametrize("c, n", [(1, 2), (5, 3), (60, 10)])
def test_constant_moments(c, n):
    m = moments_closed_form(Constant(c), n)
    assert m.mu1 == pytest.approx(1 / n, abs=1e-15)
    assert m.mu2 == 1 / c
    assert m.mu3 == pytest.approx(1 / (c * n * n), rel=1e-14)
    assert m.s2 == pytest.approx(0.0, abs=1e-30)


@pytest.mark.parametrize(
    "model, n",
    [(SKEWED, 4), (SKEWED, 6), (UniformRange(1, 3), 4), (UniformRange(2, 5), 3), (TwoPoint(2, 9, 0.3), 5)],
)
def test_enumeration_matches_rational_oracle(model, n):
    vals, probs = model.support()
    mu1, mu2, mu3, s2 = moments_fraction(vals, probs, n)
    m = moments_closed_form(model, n)
    assert m.mu1 == pytest.approx(float(mu1), abs=1e-14)
    assert m.mu2 == pytest.approx(float(mu2), rel=1e-9)
    assert m.mu3 == pytest.approx(float(mu3), rel=1e-9)
    assert m.s2 == pytest.approx(float(s2), rel=1e-9)


def test_enumeration_cap():
    with pytest.raises(SupportTooLargeError):
        moments_closed_form(UniformRange(1, 10), 7)
    with pytest.raises(SupportTooLargeError):
        moments_closed_form(ShiftedGeometric(0.5), 2)


def test_monte_carlo_constant_is_exact():
    m = moments_monte_carlo(Constant(5), 3, 1000, np.random.default_rng(0))
    assert m.mu1 == pytest.approx(1 / 3, abs=1e-15) and m.s2 == pytest.approx(0.0, abs=1e-30)


def test_monte_carlo_needs_trials():
    with pytest.raises(ValueError):
        moments_monte_carlo(SKEWED, 4, 999, np.random.default_rng(0))


@pytest.mark.parametrize("model", [SKEWED, UniformRange(1, 3)], ids=["two_point", "uniform"])
def test_monte_carlo_agrees_with_enumeration(model):
    exact = moments_closed_form(model, 4)
    mc = moments_monte_carlo(model, 4, 10**6, np.random.default_rng(11))
    for f in ("mu1", "mu2", "mu3", "s2"):
        assert close(getattr(mc, f), getattr(exact, f), getattr(mc, "se_" + f)), f


def test_moments_falls_back_to_monte_carlo():
    m = moments(ShiftedGeometric(0.4), 4, trials=20_000, rng=np.random.default_rng(0))
    assert m.source == "monte_carlo" and close(m.mu1, 0.25, m.se_mu1)
    assert moments(SKEWED, 4).source == "closed_form"


@settings(max_examples=30, deadline=None)
@given(
    lo=st.integers(1, 20),
    width=st.integers(0, 40),
    p=st.floats(0.0, 1.0),
    n=st.integers(2, 8),
)
def test_moment_invariants(lo, width, p, n):
    model = TwoPoint(lo, lo + width, p)
    m = moments_closed_form(model, n)
    assert abs(m.mu1 - 1 / n) <= 1e-12
    assert n * n * m.mu3 <= m.mu2 * (1 + 1e-12)
    assert m.s2 >= 0 and 0 < m.mu2 <= 1


def test_moment_set_json_keys():
    d = moments_closed_form(Constant(5), 3).to_dict()
    assert list(d) == ["n", "source", "mu1", "mu2", "mu3", "s2", "se"] and d["se"] is None
    d = moments_monte_carlo(SKEWED, 3, 1000, np.random.default_rng(0)).to_dict()
    assert set(d["se"]) == {"mu1", "mu2", "mu3", "s2"}


def test_expected_inverse_sum():
    # M, N in {1, 2} uniformly: E[1/(M+N)] = (1/2 + 2/3 + 1/4) / 4
    assert expected_inverse_sum(UniformRange(1, 2)) == pytest.approx((0.5 + 2 / 3 + 0.25) / 4)
    assert expected_inverse_sum(Constant(5)) == pytest.approx(0.1)


def test_from_dict():
    assert from_dict({"type": "two_point", "lo": 1, "hi": 60, "p_hi": 0.8}) == SKEWED
    assert from_dict({"type": "constant", "c": 4}) == Constant(4)
    with pytest.raises(ValueError):
        from_dict({"type": "constant", "c": 4, "extra": 1})
    with pytest.raises(ValueError):
        from_dict({"type": "uniform_range", "lo": 1})
    with pytest.raises(ValueError):
        from_dict({"type": "poisson"})
