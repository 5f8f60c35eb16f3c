import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from codedcache.model import (DemandRealization, InvalidParameterError, PopularityDist,
                              SystemParams, sample_demands, zipf)


@pytest.mark.parametrize("m, alpha, expected", [
    (4, 0.0, [0.25, 0.25, 0.25, 0.25]),
    (2, 1.0, [2 / 3, 1 / 3]),
    (3, 2.0, [36 / 49, 9 / 49, 4 / 49]),
])
def test_zipf_examples(m, alpha, expected):
    np.testing.assert_allclose(zipf(m, alpha).q, expected, rtol=1e-14)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -0.5])
def test_zipf_rejects_bad_alpha(bad):
    with pytest.raises(InvalidParameterError):
        zipf(10, bad)


def test_zipf_rejects_empty_library():
    with pytest.raises(InvalidParameterError):
        zipf(0, 1.0)


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 2000), alpha=st.floats(0, 3))
def test_zipf_normalized_and_monotone(m, alpha):
    q = zipf(m, alpha).q
    assert abs(math.fsum(q) - 1) <= 1e-12
    d = np.diff(q)
    assert np.all(d <= 0)
    if alpha >= 1e-3 and m > 1:
        assert np.all(d < 0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_zipf_normalized_at_million_files(alpha):
    assert abs(math.fsum(zipf(10**6, alpha).q) - 1) <= 1e-12


def test_zipf_one_based_indexing():
    q = zipf(3, 2.0)
    assert q[1] == pytest.approx(36 / 49)
    assert q[3] == pytest.approx(4 / 49)


def test_popularity_validation():
    with pytest.raises(InvalidParameterError):
        PopularityDist([0.5, 0.4])
    with pytest.raises(InvalidParameterError):
        PopularityDist([1.5, -0.5])


@pytest.mark.parametrize("kwargs", [
    dict(n=0, m=3, M=1), dict(n=2, m=0, M=0), dict(n=2, m=3, M=4),
    dict(n=2, m=3, M=-1), dict(n=2, m=3, M=1, B=0),
])
def test_system_params_invariants(kwargs):
    with pytest.raises(InvalidParameterError):
        SystemParams(**kwargs)


def test_packet_budget_rounding():
    assert SystemParams(2, 5, 0.3, 10).packet_budget == 3
    assert SystemParams(2, 5, 1.25, 3).packet_budget == 3


def test_degenerate_demands():
    d = sample_demands(PopularityDist([1.0, 0.0, 0.0]), 5, 0)
    assert d.d.tolist() == [1, 1, 1, 1, 1]


def test_zero_mass_files_never_requested():
    q = PopularityDist([0.0, 0.5, 0.0, 0.5, 0.0])
    d = sample_demands(q, 50_000, 3).d
    assert set(np.unique(d).tolist()) == {2, 4}


def test_demands_deterministic_per_seed():
    q = zipf(20, 0.8)
    a = sample_demands(q, 100, 42)
    b = sample_demands(q, 100, np.random.default_rng(42))
    assert np.array_equal(a.d, b.d)
    assert not np.array_equal(a.d, sample_demands(q, 100, 43).d)


def test_fair_coin_frequency_and_chi_square():
    n = 10**5
    d = sample_demands(PopularityDist([0.5, 0.5]), n, 7).d
    counts = np.bincount(d, minlength=3)[1:]
    assert abs(counts[0] / n - 0.5) <= 0.01
    assert stats.chisquare(counts).pvalue > 1e-3


@pytest.mark.parametrize("alpha", [0.0, 0.6, 1.6])
def test_demand_marginals_within_four_sigma(alpha):
    q = zipf(12, alpha)
    n = 10**5
    d = sample_demands(q, n, int(alpha * 10))
    freq = np.bincount(d.d, minlength=13)[1:] / n
    tol = 4 * np.sqrt(q.q * (1 - q.q) / n)
    assert np.all(np.abs(freq - q.q) <= tol)


def test_demand_realization_checks():
    with pytest.raises(InvalidParameterError):
        DemandRealization([0, 1])
    d = DemandRealization([1, 3, 3])
    assert d.distinct() == 2
    with pytest.raises(InvalidParameterError):
        d.check(2)
