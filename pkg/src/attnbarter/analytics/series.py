"""Per-percentile aggregates: mean series with intervals and followee-ability pools."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import FollowGraph
from .stats import mean_ci, quantile
from .users import AbilityIndex, percentile_bins

SERIES_COLUMNS = ("bin", "mean", "ci_low", "ci_high", "n")
DISTRIBUTION_COLUMNS = ("bin", "pool", "median", "p10", "p90", "n")


@dataclass(frozen=True)
class PercentileSeries:
    """Mean and normal 95% interval per ability bin; empty bins are omitted."""

    bins: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n: np.ndarray

    def rows(self) -> list[tuple]:
        return [
            (int(b), float(m), float(lo), float(hi), int(k))
            for b, m, lo, hi, k in zip(self.bins, self.mean, self.ci_low, self.ci_high, self.n)
        ]

    def pooled_mean(self, lo: int, hi: int) -> float:
        """Mean over all users in bins lo..hi inclusive (bin means weighted by size)."""
        mask = (self.bins >= lo) & (self.bins <= hi)
        return float((self.mean[mask] * self.n[mask]).sum() / self.n[mask].sum())


def _percentiles(ability) -> np.ndarray:
    return ability.percentile if isinstance(ability, AbilityIndex) else np.asarray(ability, dtype=float)


def percentile_series(values, ability, bins: int = 100) -> PercentileSeries:
    """Group ``values`` by ability bin (aligned by position); NaN values are skipped."""
    v = np.asarray(values, dtype=float)
    b = percentile_bins(_percentiles(ability), bins)
    if v.shape != b.shape:
        raise ValueError("values and ability must have the same length")
    ok = ~np.isnan(v)
    v, b = v[ok], b[ok]
    out = []
    for k in np.unique(b):
        out.append((k, *mean_ci(v[b == k])))
    if not out:
        empty = np.zeros(0)
        return PercentileSeries(empty.astype(np.int64), empty, empty, empty, empty.astype(np.int64))
    cols = list(zip(*out))
    return PercentileSeries(
        np.array(cols[0], dtype=np.int64),
        np.array(cols[1]),
        np.array(cols[2]),
        np.array(cols[3]),
        np.array(cols[4], dtype=np.int64),
    )


@dataclass(frozen=True)
class PoolSummary:
    median: float
    p10: float
    p90: float
    n: int


def _summary(values) -> PoolSummary:
    q10, q50, q90 = quantile(values, [0.1, 0.5, 0.9])
    return PoolSummary(float(q50), float(q10), float(q90), int(len(values)))


def followee_ability_distributions(graph: FollowGraph, ability: dict[str, float], bins: int = 100) -> dict:
    """Abilities of each bin's followees, split into reciprocal and organic pools.

    A followee is reciprocal when it follows back and organic otherwise.
    Returns ``{bin: {"organic": PoolSummary | None, "reciprocal": ...}}``;
    an empty pool is ``None``. Nodes without an ability are skipped.
    """
    a = np.array([ability.get(i, np.nan) for i in graph.ids])
    src, dst, mutual = graph.src, graph.dst, graph.mutual
    ok = ~np.isnan(a[src]) & ~np.isnan(a[dst])
    src, dst, mutual = src[ok], dst[ok], mutual[ok]
    own_bin = percentile_bins(a[src], bins) if src.size else np.zeros(0, dtype=np.int64)
    target = a[dst]
    result = {}
    node_bins = percentile_bins(a[~np.isnan(a)], bins)
    for k in np.unique(node_bins):
        result[int(k)] = {"organic": None, "reciprocal": None}
    if src.size == 0:
        return result
    key = own_bin * 2 + mutual.astype(np.int64)
    order = np.argsort(key, kind="stable")
    key, target = key[order], target[order]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    ends = np.r_[starts[1:], key.size]
    for s, e in zip(starts, ends):
        k, is_mutual = divmod(int(key[s]), 2)
        pool = "reciprocal" if is_mutual else "organic"
        result.setdefault(k, {"organic": None, "reciprocal": None})[pool] = _summary(target[s:e])
    return result


def distribution_rows(dist: dict) -> list[tuple]:
    rows = []
    for k in sorted(dist):
        for pool in ("organic", "reciprocal"):
            s = dist[k][pool]
            if s is not None:
                rows.append((k, pool, s.median, s.p10, s.p90, s.n))
    return rows
