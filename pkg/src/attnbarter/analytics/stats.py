"""Small statistical helpers shared by the empirical pipeline.

One quantile rule is used everywhere (linear interpolation between order
statistics, numpy's default), so IQRs, medians and interdecile ranges agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

CI_Z = 1.96
QUANTILE_METHOD = "linear"


def quantile(values, q):
    return np.quantile(np.asarray(values, dtype=float), q, method=QUANTILE_METHOD)


@dataclass(frozen=True)
class OLSFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    r2: float

    def to_mapping(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "n": int(self.residuals.size)}


def ols(x, y) -> OLSFit:
    """Least-squares line through (x, y) from the normal equations.

    When y is constant the total sum of squares is zero and r2 is reported
    as 0 by convention.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("ols needs two 1-d sequences of equal length")
    if x.size < 2:
        raise DomainError("ols needs at least two observations")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DomainError("degenerate regressor: x is constant")
    slope = float(dx @ (y - ym)) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    return OLSFit(slope, intercept, resid, _r2(y, resid))


def _r2(y, resid) -> float:
    dy = y - y.mean()
    sst = float(dy @ dy)
    if sst == 0.0:
        return 0.0
    return 1.0 - float(resid @ resid) / sst


def ols_multi(X, y) -> tuple[np.ndarray, np.ndarray, float]:
    """Coefficients (intercept first), residuals and r2 for several regressors."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    design = np.column_stack([np.ones(len(y)), X])
    gram = design.T @ design
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise DomainError("degenerate regressors: design matrix is rank deficient")
    beta = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ beta
    return beta, resid, _r2(y, resid)


def silverman_bandwidth(sample) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5), sd with the n - 1 denominator.

    A zero IQR with positive spread falls back to the sd term alone.
    """
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise DomainError("bandwidth needs at least two observations")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DomainError("bandwidth undefined for a zero-variance sample")
    q75, q25 = quantile(x, [0.75, 0.25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** -0.2


@dataclass(frozen=True)
class KDEResult:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    median: float
    mean: float


def kde(sample, grid, bandwidth: float | None = None) -> KDEResult:
    """Gaussian kernel density of ``sample`` evaluated on ``grid``."""
    x = np.asarray(sample, dtype=float)
    g = np.asarray(grid, dtype=float)
    if x.size < 2:
        raise DomainError("kde needs at least two observations")
    if not np.std(x) > 0:
        raise DomainError("kde undefined for a zero-variance sample")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DomainError("bandwidth must be positive")
    dens = np.zeros(g.shape)
    norm = 1.0 / (x.size * h * math.sqrt(2 * math.pi))
    # chunk over the sample to bound memory on large inputs
    for start in range(0, x.size, 4096):
        z = (g[:, None] - x[None, start : start + 4096]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    return KDEResult(g, dens * norm, h, float(quantile(x, 0.5)), float(x.mean()))


def kde_grid(sample, size: int = 512, bandwidth: float | None = None) -> np.ndarray:
    """Evenly spaced grid reaching 5 bandwidths past the sample extremes."""
    x = np.asarray(sample, dtype=float)
    h = silverman_bandwidth(x) if bandwidth is None else bandwidth
    return np.linspace(x.min() - 5 * h, x.max() + 5 * h, size)


def normalize_unit(series):
    """Min-max scale to [0, 1]; a constant series maps to 0.5. NaNs pass through."""
    s = np.asarray(series, dtype=float)
    if s.size == 0 or np.all(np.isnan(s)):
        return s.copy()
    lo, hi = np.nanmin(s), np.nanmax(s)
    if hi == lo:
        return np.where(np.isnan(s), np.nan, 0.5)
    return (s - lo) / (hi - lo)


def mean_ci(values) -> tuple[float, float, float, int]:
    """Mean with a normal-approximation 95% interval; degenerate for n = 1."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        return math.nan, math.nan, math.nan, 0
    m = float(v.mean())
    if n == 1:
        return m, m, m, 1
    half = CI_Z * float(np.std(v, ddof=1)) / math.sqrt(n)
    return m, m - half, m + half, n
