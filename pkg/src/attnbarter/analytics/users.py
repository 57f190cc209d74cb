"""User metadata, sample filters and the list-membership ability proxy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from ..errors import ConfigError, DataError, DomainError
from .graph import FollowGraph
from .stats import ols, ols_multi

USER_COLUMNS = ("id", "followers_count", "followees_count", "tweets", "likes", "tenure_days", "list_count")
COUNT_COLUMNS = USER_COLUMNS[1:]


@dataclass(frozen=True)
class UserRecord:
    id: str
    followers_count: int
    followees_count: int
    tweets: int
    likes: int
    tenure_days: int
    list_count: int

    def __post_init__(self):
        for name in COUNT_COLUMNS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise DataError(f"user {self.id!r}: {name} must be a non-negative integer, got {value!r}")


def users_frame(records: Sequence[UserRecord]) -> pd.DataFrame:
    """Tabular form of user records, one row per user, columns in file order."""
    rows = [asdict(r) for r in records]
    frame = pd.DataFrame(rows, columns=list(USER_COLUMNS))
    frame["id"] = frame["id"].astype(str)
    for name in COUNT_COLUMNS:
        frame[name] = frame[name].astype(np.int64)
    return frame


def load_users(path) -> pd.DataFrame:
    """Read the users table; every count column must hold non-negative integers."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"users file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read users file {path}: {exc}") from exc
    if tuple(frame.columns) != USER_COLUMNS:
        raise DataError(f"{path}: header must be {','.join(USER_COLUMNS)}, got {','.join(frame.columns)}")
    frame["id"] = frame["id"].str.strip()
    if (frame["id"] == "").any():
        line = int(np.flatnonzero((frame["id"] == "").to_numpy())[0]) + 2
        raise DataError(f"{path}: empty user id at line {line}")
    if frame["id"].duplicated().any():
        raise DataError(f"{path}: duplicate user id {frame['id'][frame['id'].duplicated()].iloc[0]!r}")
    for name in COUNT_COLUMNS:
        col = frame[name].str.strip()
        good = col.str.fullmatch(r"\d+")
        if not good.all():
            line = int(np.flatnonzero(~good.to_numpy())[0]) + 2
            raise DataError(f"{path}: {name} must be a non-negative integer at line {line}")
        frame[name] = col.astype(np.int64)
    return frame


FILTER_RULES = ("min_followers", "min_followees", "min_tweets", "max_followers", "max_followees")
_RULE_COLUMN = {
    "min_followers": "followers_count",
    "min_followees": "followees_count",
    "min_tweets": "tweets",
    "max_followers": "followers_count",
    "max_followees": "followees_count",
}


@dataclass(frozen=True)
class FilterConfig:
    """Inclusive sample bounds; ``None`` disables a rule."""

    min_followers: int | None = None
    min_followees: int | None = None
    min_tweets: int | None = None
    max_followers: int | None = None
    max_followees: int | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 0):
                raise ConfigError(f"filters.{f.name} must be a non-negative integer or null, got {v!r}")
        for lo, hi in (("min_followers", "max_followers"), ("min_followees", "max_followees")):
            a, b = getattr(self, lo), getattr(self, hi)
            if a is not None and b is not None and a > b:
                raise ConfigError(f"filters.{lo} exceeds filters.{hi}")

    @classmethod
    def sample_defaults(cls) -> "FilterConfig":
        """Followee floor of 10 and cap of 5000, the two bounds with published values."""
        return cls(min_followees=10, max_followees=5000)

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any] | None) -> "FilterConfig":
        doc = dict(doc or {})
        unknown = sorted(set(doc) - set(FILTER_RULES))
        if unknown:
            raise ConfigError(f"unknown filter keys: {', '.join('filters.' + k for k in unknown)}")
        return cls(**doc)

    def to_mapping(self) -> dict:
        return {name: getattr(self, name) for name in FILTER_RULES}

    def active(self) -> list[str]:
        return [name for name in FILTER_RULES if getattr(self, name) is not None]


@dataclass(frozen=True)
class FilterResult:
    retained: tuple[str, ...]
    dropped: dict[str, int]
    total: int


def apply_filters(graph: FollowGraph | None, users: pd.DataFrame | None, cfg: FilterConfig) -> FilterResult:
    """Users passing every active bound.

    Bounds read the users table. Without a table, follower and followee counts
    come from the graph degrees, and a tweet filter is an error. ``dropped``
    counts, per rule, the users that rule rejects on its own.
    """
    if users is None:
        if graph is None:
            raise DataError("apply_filters needs a graph or a users table")
        table = pd.DataFrame(
            {"id": list(graph.ids), "followers_count": graph.in_degree(), "followees_count": graph.out_degree()}
        )
    else:
        table = users
    keep = np.ones(len(table), dtype=bool)
    dropped = {}
    for rule in cfg.active():
        column = _RULE_COLUMN[rule]
        if column not in table.columns:
            raise DataError(f"filter {rule} needs user field {column!r}, which is missing")
        values = table[column].to_numpy()
        bound = getattr(cfg, rule)
        passes = values >= bound if rule.startswith("min_") else values <= bound
        dropped[rule] = int((~passes).sum())
        keep &= passes
    ids = tuple(sorted(table["id"].astype(str).to_numpy()[keep]))
    return FilterResult(ids, dropped, len(table))


@dataclass(frozen=True)
class AbilityIndex:
    """Rank-based ability percentile per user, in (0, 1], with fit diagnostics."""

    ids: tuple[str, ...]
    percentile: np.ndarray
    residual: np.ndarray
    slope: float
    intercept: float
    r2: float

    def lookup(self) -> dict[str, float]:
        return dict(zip(self.ids, self.percentile.tolist()))

    def diagnostics(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "n": len(self.ids)}


def percentile_ranks(values) -> np.ndarray:
    """Average rank over n, so ties share a value and the maximum is 1."""
    v = np.asarray(values, dtype=float)
    return rankdata(v, method="average") / v.size


def ability_index(users: pd.DataFrame, offset: float = 1.0, extra_regressors: Sequence[str] = ()) -> AbilityIndex:
    """Percentile rank of the residual of log(offset + lists) on log(offset + tweets).

    A constant tweet count leaves nothing to partial out; the fit then falls
    back to the intercept alone (slope 0, r2 0).
    """
    if users is None or len(users) < 2:
        raise DomainError("ability_index needs at least two users")
    if not offset > 0:
        raise ConfigError("ability offset must be positive")
    y = np.log(offset + users["list_count"].to_numpy(dtype=float))
    x = np.log(offset + users["tweets"].to_numpy(dtype=float))
    if extra_regressors:
        missing = [c for c in extra_regressors if c not in users.columns]
        if missing:
            raise ConfigError(f"unknown extra regressors: {', '.join(missing)}")
        extra = [np.log(offset + users[c].to_numpy(dtype=float)) for c in extra_regressors]
        beta, resid, r2 = ols_multi(np.column_stack([x, *extra]), y)
        slope, intercept = float(beta[1]), float(beta[0])
    elif np.all(x == x[0]):
        intercept = float(y.mean())
        slope, resid, r2 = 0.0, y - intercept, 0.0
    else:
        fit = ols(x, y)
        slope, intercept, resid, r2 = fit.slope, fit.intercept, fit.residuals, fit.r2
    ids = tuple(users["id"].astype(str))
    return AbilityIndex(ids, percentile_ranks(resid), resid, slope, intercept, r2)


def percentile_bins(percentiles, bins: int = 100) -> np.ndarray:
    """Bin 1..bins holding percentile p, i.e. ceil(p * bins) guarded against round-off."""
    p = np.asarray(percentiles, dtype=float)
    b = np.ceil(p * bins - 1e-9).astype(np.int64)
    return np.clip(b, 1, bins)


def tenure_regression(users: pd.DataFrame, ability: AbilityIndex) -> dict:
    """Ability percentile regressed on tenure in days; NaNs if tenure is constant."""
    lookup = ability.lookup()
    t = users["tenure_days"].to_numpy(dtype=float)
    p = np.array([lookup[i] for i in users["id"].astype(str)])
    try:
        return ols(t, p).to_mapping()
    except DomainError:
        return {"slope": math.nan, "intercept": math.nan, "r2": math.nan, "n": len(t)}
