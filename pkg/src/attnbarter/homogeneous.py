"""Equilibria with homogeneous consumption preferences.

Two regimes are covered: the no-bartering benchmark, where everyone follows
exactly the users above the opportunity cost ``q0``, and the club partition,
built top-down from ``q0`` by repeatedly choosing the lower bound that
maximises the club gain.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .core import (
    Club,
    HomogeneousEquilibrium,
    ModelParams,
    OutcomeCurve,
    as_grid,
    make_point,
)
from .errors import ConfigError, ConvergenceError, DomainError

FOC_TOL = 1e-12
MAX_CLUBS = 10_000
# q0 = 0.8, c = 0.2 give club gains 0.0715 (5th) and 0.0662 (6th); 0.07 keeps five.
FIVE_CLUB_EPSILON = 0.07


@dataclass(frozen=True)
class StoppingRule:
    """``literal`` stops at an empty club or at ability 0; ``gain_floor`` also
    refuses to append a club whose gain is below ``epsilon``."""

    kind: str = "literal"
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind == "literal":
            if self.epsilon is not None:
                raise ConfigError("literal stopping rule takes no epsilon")
        elif self.kind == "gain_floor":
            if self.epsilon is None or not self.epsilon >= 0:
                raise ConfigError("gain_floor stopping rule needs epsilon >= 0")
        else:
            raise ConfigError(f"unknown stopping rule {self.kind!r}")

    @property
    def tag(self) -> str:
        return "literal" if self.kind == "literal" else f"gain_floor({self.epsilon!r})"

    @classmethod
    def parse(cls, value) -> "StoppingRule":
        """Accept a rule, a tag string such as ``"gain_floor(0.07)"``, or a mapping."""
        if isinstance(value, StoppingRule):
            return value
        if value is None:
            return cls()
        if isinstance(value, Mapping):
            extra = set(value) - {"rule", "epsilon"}
            if extra:
                raise ConfigError(f"unknown stopping keys: {', '.join(sorted(extra))}")
            return cls(value.get("rule", "literal"), value.get("epsilon"))
        if isinstance(value, str):
            text = value.strip()
            if text == "literal":
                return cls()
            if text.startswith("gain_floor(") and text.endswith(")"):
                try:
                    return cls("gain_floor", float(text[len("gain_floor(") : -1]))
                except ValueError as exc:
                    raise ConfigError(f"bad stopping rule {value!r}") from exc
        raise ConfigError(f"bad stopping rule {value!r}")


def _consumption_integral(lower: float, upper: float, q0: float) -> float:
    """Closed form of the integral of (x - q0) over [lower, upper]."""
    return (upper * upper / 2 - q0 * upper) - (lower * lower / 2 - q0 * lower)


def club_gain(lower: float, upper: float, params: ModelParams) -> float:
    """Utility change of a member of the club (lower, upper] relative to lurking:
    consumption loss from following below ``q0``, monitoring cost, and the
    attention gained from the club's mass of reciprocal followers."""
    if not 0 <= lower <= upper <= params.q0:
        raise DomainError(f"club_gain needs 0 <= lower <= upper <= q0, got ({lower}, {upper}]")
    size = upper - lower
    return _consumption_integral(lower, upper, params.q0) - params.c * size + float(params.I(size))


def foc(size: float, upper: float, params: ModelParams) -> float:
    """Derivative of the club gain with respect to club size, at fixed upper bound."""
    return float(params.dI(size)) - (params.q0 - upper + size) - params.c


def optimal_lower_bound(upper: float, params: ModelParams) -> float:
    """Lower bound maximising ``club_gain(., upper)``.

    The first-order condition is strictly decreasing in club size, so the
    maximiser is found by bisection on it, with corner solutions checked first.
    """
    if not 0 < upper <= params.q0:
        raise DomainError(f"optimal_lower_bound needs 0 < upper <= q0, got {upper}")
    if foc(0.0, upper, params) <= 0:
        return upper
    if foc(upper, upper, params) >= 0:
        return 0.0
    lo, hi = 0.0, upper
    while hi - lo >= FOC_TOL:
        mid = 0.5 * (lo + hi)
        g = foc(mid, upper, params)
        if abs(g) < FOC_TOL:
            lo = hi = mid
            break
        if g > 0:
            lo = mid
        else:
            hi = mid
    size = 0.5 * (lo + hi)
    return upper - size


def solve_clubs(params: ModelParams, stopping: StoppingRule | str | None = None) -> HomogeneousEquilibrium:
    rule = StoppingRule.parse(stopping)
    clubs: list[Club] = []
    upper = params.q0
    while upper > 0:
        if len(clubs) >= MAX_CLUBS:
            raise ConvergenceError(
                f"club construction exceeded {MAX_CLUBS} clubs; parameters look degenerate",
                iterations=len(clubs),
            )
        lower = optimal_lower_bound(upper, params)
        if lower >= upper:
            break
        if rule.kind == "gain_floor" and club_gain(lower, upper, params) < rule.epsilon:
            break
        clubs.append(Club(lower, upper))
        if lower <= 0:
            break
        upper = lower
    return HomogeneousEquilibrium(params=params, clubs=tuple(clubs), stopping=rule.tag)


def no_barter_equilibrium(params: ModelParams, grid=None) -> tuple[HomogeneousEquilibrium, OutcomeCurve]:
    eq = HomogeneousEquilibrium(params=params, clubs=(), stopping="no_barter")
    return eq, outcome_curve(eq, grid)


def club_report(eq: HomogeneousEquilibrium) -> list[dict[str, float]]:
    """Per-club lower, upper, size, gain and first-order residual."""
    rows = []
    for club in eq.clubs:
        rows.append(
            {
                "lower": club.lower,
                "upper": club.upper,
                "size": club.size,
                "gain": club_gain(club.lower, club.upper, eq.params),
                "foc_residual": foc(club.size, club.upper, eq.params),
            }
        )
    return rows


def outcome_curve(eq: HomogeneousEquilibrium, grid=None) -> OutcomeCurve:
    params = eq.params
    q0 = params.q0
    grid = as_grid(grid)
    base_u = (1 - q0) ** 2 / 2
    organic = 1 - q0
    points = []
    for alpha in grid:
        k = eq.club_index(alpha)
        if alpha > q0:
            points.append(make_point(alpha, 1.0, organic, 0.0, organic, base_u, params.I(1.0), 0.0))
        elif k is not None:
            club = eq.clubs[k]
            s = club.size
            cons = base_u + _consumption_integral(club.lower, club.upper, q0)
            points.append(make_point(alpha, s, organic + s, s, s, cons, params.I(s), params.c * s))
        else:
            points.append(make_point(alpha, 0.0, organic, 0.0, 0.0, base_u, 0.0, 0.0))
    return OutcomeCurve(grid=grid, points=tuple(points))


@dataclass(frozen=True)
class FolloweeRange:
    ability: float
    organic_low: float
    organic_high: float
    organic_median: float
    reciprocal_low: float
    reciprocal_high: float
    reciprocal_median: float

    COLUMNS = (
        "ability",
        "organic_low",
        "organic_high",
        "organic_median",
        "reciprocal_low",
        "reciprocal_high",
        "reciprocal_median",
    )

    @property
    def reciprocal_empty(self) -> bool:
        return math.isnan(self.reciprocal_median)

    def row(self):
        return tuple(getattr(self, c) for c in self.COLUMNS)


def followee_ability_ranges(eq: HomogeneousEquilibrium, grid=None) -> list[FolloweeRange]:
    """Ability intervals each user follows organically and reciprocally.

    Empty intervals are reported as NaN bounds. Users above ``q0`` follow
    each other organically in both directions, so their reciprocal set is
    (q0, 1] as well.
    """
    q0 = eq.params.q0
    nan = math.nan
    if q0 < 1:
        org = (q0, 1.0, (1 + q0) / 2)
    else:
        org = (nan, nan, nan)
    out = []
    for alpha in as_grid(grid):
        k = eq.club_index(alpha)
        if alpha > q0:
            rec = org
        elif k is not None:
            club = eq.clubs[k]
            rec = (club.lower, club.upper, (club.lower + club.upper) / 2)
        else:
            rec = (nan, nan, nan)
        out.append(FolloweeRange(float(alpha), *org, *rec))
    return out


@dataclass(frozen=True)
class VerificationReport:
    max_gain: float
    worst_ability: float
    worst_lower: float
    worst_upper: float
    n_grid: int
    epsilon: float

    @property
    def passed(self) -> bool:
        return self.max_gain <= self.epsilon

    def to_mapping(self) -> dict[str, Any]:
        return {
            "max_gain": self.max_gain,
            "worst_deviation": {
                "ability": self.worst_ability,
                "lower": self.worst_lower,
                "upper": self.worst_upper,
            },
            "n_grid": self.n_grid,
            "epsilon": self.epsilon,
            "passed": self.passed,
        }


def _current_gain(eq: HomogeneousEquilibrium, gains: list[float], alpha: float) -> float:
    k = eq.club_index(alpha)
    return gains[k] if k is not None else 0.0


def verify_equilibrium(
    eq: HomogeneousEquilibrium, n_grid: int = 200, epsilon: float = 1e-3, threads: int = 1
) -> VerificationReport:
    """Brute-force search for profitable interval deviations.

    Deviation intervals (lo, hi] have endpoints on an ``n_grid`` partition of
    [0, q0]; abilities are the ``n_grid`` cell midpoints of [0, 1]. Follows
    of users above ``q0`` stay fixed. A user may shrink their reciprocation set
    inside their own club unilaterally. Any other interval requires consent:
    every member must weakly prefer the interval's gain to what they earn
    now. The gain of the best feasible deviation, floored at 0 for staying
    put, is reported.
    """
    if n_grid < 100:
        raise DomainError("verify_equilibrium needs n_grid >= 100")
    params = eq.params
    q0 = params.q0
    gains = [club_gain(c.lower, c.upper, params) for c in eq.clubs]
    ends = np.linspace(0.0, q0, n_grid + 1)
    lo = ends[:, None]
    hi = ends[None, :]
    valid = hi > lo
    size = np.where(valid, hi - lo, 0.0)
    cons = (hi * hi / 2 - q0 * hi) - (lo * lo / 2 - q0 * lo)
    r_member = np.where(valid, cons - params.c * size + params.I(size), -np.inf)
    # High-ability users are already followed by everyone: no attention gain.
    r_high = np.where(valid, cons - params.c * size, -np.inf)

    # Best current gain among members of each candidate interval.
    best_member = np.full_like(size, -np.inf)
    for club, g in zip(eq.clubs, gains):
        overlap = (club.lower < hi) & (club.upper > lo)
        best_member = np.where(overlap, np.maximum(best_member, g), best_member)
    best_member = np.where(lo < eq.lurker_threshold, np.maximum(best_member, 0.0), best_member)
    consent = valid & (r_member >= best_member - 1e-12)

    abilities = (np.arange(n_grid) + 0.5) / n_grid

    def best_for(alpha: float) -> tuple[float, float, float]:
        if alpha > q0:
            cand = np.where(valid, r_high, -np.inf)
        else:
            contains = (lo < alpha) & (alpha <= hi)
            k = eq.club_index(alpha)
            feasible = contains & consent
            if k is not None:
                club = eq.clubs[k]
                inside = (lo >= club.lower - 1e-12) & (hi <= club.upper + 1e-12) & contains
                feasible = feasible | inside
            cand = np.where(feasible, r_member, -np.inf) - _current_gain(eq, gains, alpha)
        idx = int(np.argmax(cand))
        i, j = divmod(idx, cand.shape[1])
        return float(cand[i, j]), float(ends[i]), float(ends[j])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(best_for, abilities))
    else:
        results = [best_for(a) for a in abilities]

    best = (0.0, math.nan, math.nan, math.nan)
    for alpha, (gain, lo_b, hi_b) in zip(abilities, results):
        if gain > best[0]:
            best = (gain, float(alpha), lo_b, hi_b)
    return VerificationReport(
        max_gain=best[0],
        worst_ability=best[1],
        worst_lower=best[2],
        worst_upper=best[3],
        n_grid=n_grid,
        epsilon=epsilon,
    )


def equilibrium_document(eq: HomogeneousEquilibrium) -> dict[str, Any]:
    return {
        "params": eq.params.to_mapping(),
        "stopping": eq.stopping,
        "clubs": club_report(eq),
        "lurker_threshold": eq.lurker_threshold,
    }


def equilibrium_from_document(doc: Mapping[str, Any]) -> HomogeneousEquilibrium:
    try:
        params = ModelParams.from_mapping(doc["params"])
        clubs = tuple(Club(float(c["lower"]), float(c["upper"])) for c in doc.get("clubs", []))
        stopping = str(doc.get("stopping", "literal"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed equilibrium document: {exc}") from exc
    return HomogeneousEquilibrium(params=params, clubs=clubs, stopping=stopping)
