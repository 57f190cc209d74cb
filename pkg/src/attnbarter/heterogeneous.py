"""Equilibrium with idiosyncratic opportunity costs.

Every user draws an independent uniform opportunity cost for each potential
followee. A strategy is a single threshold ``f`` in [0, 1], the largest
consumption loss a user accepts to sustain a reciprocal relationship. The
pairwise reciprocal mass between abilities ``a`` and ``x`` simplifies to
``min(f_a, 1 - x) * min(f_x, 1 - a)``, which is what the quadrature below
integrates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ModelParams, OutcomeCurve, make_point
from .errors import ConfigError, ConvergenceError, DomainError

BRACKET_TOL = 1e-14
POLISH_TOL = 1e-13
POLISH_SWEEPS = 200
TIE_TOL = 1e-14
SCAN_POINTS = 33


@dataclass(frozen=True)
class ThresholdProfile:
    grid: np.ndarray
    thresholds: np.ndarray
    iterations: int = 0
    last_change: float = math.nan

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        f = np.asarray(self.thresholds, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise DomainError("profile grid must be strictly ascending with at least two nodes")
        if grid[0] != 0.0 or grid[-1] != 1.0:
            raise DomainError("profile grid must span [0, 1]")
        if f.shape != grid.shape:
            raise DomainError("one threshold per grid ability is required")
        if np.any(f < 0) or np.any(f > 1):
            raise DomainError("thresholds must lie in [0, 1]")
        grid.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "thresholds", f)

    @classmethod
    def constant(cls, value: float, grid_size: int = 201) -> "ThresholdProfile":
        grid = np.linspace(0.0, 1.0, grid_size)
        return cls(grid, np.full(grid_size, float(value)))

    def at(self, x):
        return np.interp(x, self.grid, self.thresholds)


def no_barter_outcomes(alpha: float, params: ModelParams | None = None) -> dict[str, float]:
    """Closed forms when no one reciprocates: a user of ability ``alpha`` is
    followed organically by a fraction ``alpha`` of everyone."""
    if not 0 <= alpha <= 1:
        raise DomainError(f"ability must lie in [0, 1], got {alpha}")
    out = {"followees": 0.5, "consumption_u": 1.0 / 6.0, "followers": float(alpha)}
    if params is not None:
        out["attention_u"] = float(params.I(alpha))
    return out


def reciprocal_mass(alpha: float, x: float, f_alpha: float, f_x: float) -> float:
    """Mass of reciprocal relationships between abilities ``alpha`` and ``x``."""
    for name, v in (("alpha", alpha), ("x", x), ("f_alpha", f_alpha), ("f_x", f_x)):
        if not 0 <= v <= 1:
            raise DomainError(f"{name} must lie in [0, 1], got {v}")
    pref = (1 - alpha) * (1 - x)
    if pref == 0:
        return 0.0
    take_a = min(f_alpha / (1 - x), 1.0)
    take_x = min(f_x / (1 - alpha), 1.0)
    return pref * take_a * take_x


class _PartnerIntegrals:
    """Prefix integrals that make r(f) cheap for many trial thresholds.

    For each row ability ``a`` the partner weight is ``w(x) = min(f(x), 1 - a)``
    with ``f`` piecewise linear on the profile grid. Then

        r(A) = A * int_0^{1-A} w dx + int_{1-A}^1 (1 - x) w dx,

    evaluated by the trapezoid rule on the grid nodes plus the two kinks:
    ``x = 1 - A`` and the point where ``f`` crosses ``1 - a``.
    """

    def __init__(self, alphas, profile: ThresholdProfile):
        x = profile.grid
        f = profile.thresholds
        self.x = x
        a = np.atleast_1d(np.asarray(alphas, dtype=float))
        self.b = (1.0 - a)[:, None]
        self.x0, self.x1 = x[None, :-1], x[None, 1:]
        self.f0, self.f1 = f[None, :-1], f[None, 1:]
        r0 = self.f0 - self.b
        r1 = self.f1 - self.b
        crosses = (r0 * r1) < 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            tc = self.x0 + (self.b - self.f0) / (self.f1 - self.f0) * (self.x1 - self.x0)
        # Segments without a crossing get a harmless midpoint node.
        self.tc = np.where(crosses, tc, 0.5 * (self.x0 + self.x1))
        self.wc = np.minimum(self._f(self.tc), self.b)
        w0 = np.minimum(self.f0, self.b)
        w1 = np.minimum(self.f1, self.b)
        self.w0, self.w1 = w0, w1
        s0 = _trap2(self.x0, self.tc, self.x1, w0, self.wc, w1)
        s1 = _trap2(self.x0, self.tc, self.x1, (1 - self.x0) * w0, (1 - self.tc) * self.wc, (1 - self.x1) * w1)
        zeros = np.zeros((a.size, 1))
        self.c0 = np.concatenate([zeros, np.cumsum(s0, axis=1)], axis=1)  # int over segments < k
        tail = np.cumsum(s1[:, ::-1], axis=1)[:, ::-1]
        self.c1 = np.concatenate([tail, zeros], axis=1)  # int over segments >= k
        self.rows = np.arange(a.size)

    def _f(self, t):
        return self.f0 + (self.f1 - self.f0) * (t - self.x0) / (self.x1 - self.x0)

    def r(self, A):
        """Reciprocal mass for threshold ``A[i]`` of row ability ``i``."""
        return self.r_and_slope(A)[0]

    def r_and_slope(self, A):
        """r(A) and its exact derivative dr/dA under the same quadrature."""
        A = np.broadcast_to(np.asarray(A, dtype=float), self.rows.shape)
        t = 1.0 - A
        k = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, self.x.size - 2)
        i = self.rows
        x0, x1 = self.x0[0, k], self.x1[0, k]
        f0, f1 = self.f0[0, k], self.f1[0, k]
        b = self.b[:, 0]
        tc, wc = self.tc[i, k], self.wc[i, k]
        w0, w1 = self.w0[i, k], self.w1[i, k]
        slope_f = (f1 - f0) / (x1 - x0)
        ft = f0 + slope_f * (t - x0)
        wt = np.minimum(ft, b)
        dwt = np.where(ft < b, slope_f, 0.0)
        # The crossing node only counts when strictly inside the partial piece.
        left_has = (tc > x0) & (tc < t)
        right_has = (tc > t) & (tc < x1)
        tl = np.where(left_has, tc, x0)
        wl = np.where(left_has, wc, w0)
        left = _trap2(x0, tl, t, w0, wl, wt)
        d_left = 0.5 * (wl + wt) + 0.5 * dwt * (t - tl)
        tr = np.where(right_has, tc, x1)
        wr = np.where(right_has, wc, w1)
        gt, gr = (1 - t) * wt, (1 - tr) * wr
        right = _trap2(t, tr, x1, gt, gr, (1 - x1) * w1)
        d_right = 0.5 * (-wt + (1 - t) * dwt) * (tr - t) - 0.5 * (gt + gr)
        head = self.c0[i, k] + left
        r = A * head + right + self.c1[i, k + 1]
        # d/dA with dt/dA = -1.
        dr = head - A * d_left - d_right
        return r, dr


def _trap2(x0, xm, x1, y0, ym, y1):
    return 0.5 * (y0 + ym) * (xm - x0) + 0.5 * (ym + y1) * (x1 - xm)


def reciprocal_total(alpha, f_alpha, profile: ThresholdProfile):
    """r_alpha, the integral over partner abilities of the pairwise mass."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    out = _PartnerIntegrals(alpha, profile).r(np.broadcast_to(f_alpha, alpha.shape))
    return out if out.size > 1 else float(out[0])


def _utility(alpha, A, r, params: ModelParams):
    return 1.0 / 6.0 - (A / 2.0 + params.c) * r + params.I(alpha + r)


def total_utility(alpha: float, f_alpha: float, profile: ThresholdProfile, params: ModelParams) -> float:
    if not (0 <= alpha <= 1 and 0 <= f_alpha <= 1):
        raise DomainError("alpha and f_alpha must lie in [0, 1]")
    r = reciprocal_total(alpha, f_alpha, profile)
    return float(_utility(alpha, f_alpha, r, params))


def _best_responses(alphas, profile: ThresholdProfile, params: ModelParams) -> np.ndarray:
    """Vectorised maximisation over [0, 1], one lane per ability.

    The objective is not concave near f = 1, so a coarse scan brackets the
    global maximum first. Inside the bracket the root of the exact derivative
    is bisected; golden-section on the values alone stalls near 1e-8 because
    the objective is flat at its peak.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    pi = _PartnerIntegrals(alphas, profile)
    c = params.c

    def value(A):
        return _utility(alphas, A, pi.r(A), params)

    def slope(A):
        r, dr = pi.r_and_slope(A)
        return -0.5 * r + (params.dI(alphas + r) - A / 2.0 - c) * dr

    scan = np.linspace(0.0, 1.0, SCAN_POINTS)
    scores = np.stack([value(np.full_like(alphas, s)) for s in scan])
    k = np.argmax(scores, axis=0)
    lo = scan[np.maximum(k - 1, 0)]
    hi = scan[np.minimum(k + 1, SCAN_POINTS - 1)]
    while np.max(hi - lo) > BRACKET_TOL:
        mid = 0.5 * (lo + hi)
        up = slope(mid) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    best = 0.5 * (lo + hi)
    zeros, ones = np.zeros_like(alphas), np.ones_like(alphas)
    best = np.where((slope(ones) > 0) & (value(ones) > value(best)), 1.0, best)
    # Flat objectives (no willing partners) resolve to the costless f = 0.
    best = np.where((slope(zeros) <= 0) & (value(zeros) >= value(best) - TIE_TOL), 0.0, best)
    return best


def best_response(alpha: float, profile: ThresholdProfile, params: ModelParams) -> float:
    if not 0 <= alpha <= 1:
        raise DomainError(f"ability must lie in [0, 1], got {alpha}")
    return float(_best_responses([alpha], profile, params)[0])


def best_response_residual(profile: ThresholdProfile, params: ModelParams) -> float:
    br = _best_responses(profile.grid, profile, params)
    return float(np.max(np.abs(br - profile.thresholds)))


def _sweep(grid, f, params, damping):
    br = _best_responses(grid, ThresholdProfile(grid, f), params)
    new = (1.0 - damping) * f + damping * br
    return new, float(np.max(np.abs(new - f)))


def solve_fixed_point(
    params: ModelParams,
    grid_size: int = 201,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    initial: ThresholdProfile | np.ndarray | None = None,
) -> ThresholdProfile:
    """Damped simultaneous best-response iteration.

    Starts from the fully willing profile ``f = 1`` by default: the all-zero
    profile is always a (degenerate) fixed point, since nobody gains from
    reciprocating with users who never reciprocate.
    """
    if grid_size < 3:
        raise DomainError("grid_size must be at least 3")
    if not 0 < damping <= 1:
        raise ConfigError(f"damping must lie in (0, 1], got {damping}")
    grid = np.linspace(0.0, 1.0, grid_size)
    if initial is None:
        f = np.ones(grid_size)
    else:
        f = np.asarray(initial.thresholds if isinstance(initial, ThresholdProfile) else initial, dtype=float)
        if f.shape != grid.shape:
            raise DomainError("initial profile does not match grid_size")
    change = math.inf
    for it in range(1, max_iter + 1):
        f, change = _sweep(grid, f, params, damping)
        if change < tol:
            # Keep sweeping a little past ``tol`` so that restarting from the
            # result is a no-op to ~1e-13.
            for _ in range(POLISH_SWEEPS):
                if change < POLISH_TOL:
                    break
                f, change = _sweep(grid, f, params, damping)
                it += 1
            # One undamped step: at a fixed point it moves f by ~1e-13 and
            # lands exactly on corner responses such as f = 0.
            f = _best_responses(grid, ThresholdProfile(grid, f), params)
            return ThresholdProfile(grid, f, iterations=it, last_change=change)
    raise ConvergenceError(
        f"best-response iteration did not converge in {max_iter} sweeps (last change {change:.3e})",
        residual=change,
        iterations=max_iter,
    )


def reciprocal_profile(profile: ThresholdProfile) -> np.ndarray:
    """r_alpha at every grid ability of a profile."""
    pi = _PartnerIntegrals(profile.grid, profile)
    return pi.r(profile.thresholds)


def hetero_outcome_curve(profile: ThresholdProfile, params: ModelParams) -> OutcomeCurve:
    r = reciprocal_profile(profile)
    points = []
    for alpha, fa, ra in zip(profile.grid, profile.thresholds, r):
        points.append(
            make_point(
                alpha,
                followers=alpha + ra,
                followees=0.5 + ra,
                bartered=ra,
                bidirectional=ra,
                consumption_u=1.0 / 6.0 - (fa / 2.0) * ra,
                attention_u=params.I(alpha + ra),
                monitoring_c=params.c * ra,
            )
        )
    return OutcomeCurve(grid=profile.grid, points=tuple(points))
