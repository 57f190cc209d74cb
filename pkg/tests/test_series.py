import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnbarter.analytics.graph import FollowGraph
from attnbarter.analytics.series import (
    distribution_rows,
    followee_ability_distributions,
    percentile_series,
)


def test_series_one_bin_constant():
    s = percentile_series([1, 1, 1], [0.2, 0.3, 0.4], bins=1)
    assert s.rows() == [(1, 1.0, 1.0, 1.0, 3)]


def test_series_one_bin_two_values():
    s = percentile_series([0, 2], [0.5, 1.0], bins=1)
    b, m, lo, hi, n = s.rows()[0]
    assert (b, m, n) == (1, 1.0, 2)
    assert lo == pytest.approx(-0.96, abs=1e-12) and hi == pytest.approx(2.96, abs=1e-12)


def test_series_bins_and_nan():
    s = percentile_series([1.0, 3.0, np.nan, 10.0], [0.1, 0.2, 0.3, 0.9], bins=4)
    assert s.bins.tolist() == [1, 4]
    assert s.mean.tolist() == [2.0, 10.0]
    assert s.n.tolist() == [2, 1]
    assert s.pooled_mean(1, 4) == pytest.approx(14 / 3)


def test_series_empty():
    s = percentile_series([np.nan], [0.5])
    assert s.rows() == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(0.001, 1.0)), min_size=1, max_size=60))
def test_series_partitions_users(pairs):
    values = [v for v, _ in pairs]
    pct = [p for _, p in pairs]
    s = percentile_series(values, pct, bins=10)
    assert s.n.sum() == len(pairs)
    assert np.all(s.ci_low <= s.mean) and np.all(s.mean <= s.ci_high)
    assert s.pooled_mean(1, 10) == pytest.approx(np.mean(values), abs=1e-9 * (1 + np.abs(values).max()))


def test_followee_pools_example():
    g = FollowGraph.from_edges([("a", "b"), ("b", "a"), ("a", "c")])
    ability = {"a": 0.2, "b": 0.6, "c": 0.9}
    dist = followee_ability_distributions(g, ability, bins=10)
    assert dist[2]["organic"].median == 0.9 and dist[2]["organic"].n == 1
    assert dist[2]["reciprocal"].median == 0.6
    assert dist[6]["reciprocal"].median == 0.2 and dist[6]["organic"] is None
    assert dist[9] == {"organic": None, "reciprocal": None}
    rows = distribution_rows(dist)
    assert rows[0] == (2, "organic", 0.9, 0.9, 0.9, 1)
    assert len(rows) == 3


def test_followee_pools_quantiles_and_missing_ability():
    edges = [("x", f"t{k}") for k in range(11)] + [("x", "ghost")]
    ability = {"x": 0.05, **{f"t{k}": k / 10 for k in range(11)}}
    dist = followee_ability_distributions(FollowGraph.from_edges(edges), ability, bins=10)
    pool = dist[1]["organic"]
    assert pool.n == 11
    assert pool.median == pytest.approx(0.5) and pool.p10 == pytest.approx(0.1) and pool.p90 == pytest.approx(0.9)
