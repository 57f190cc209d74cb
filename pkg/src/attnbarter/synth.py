"""Synthetic follower graphs and user tables drawn from an analytic equilibrium.

Abilities sit on the midpoint grid (k + 0.5) / n, so each club holds its
size times n users, give or take one. Every user follows every user above
q0 organically, and club members follow each other. List counts rise
exponentially in ability, which gives the ability proxy a known ground truth.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

import numpy as np
import pandas as pd

from .analytics.users import USER_COLUMNS
from .core import HomogeneousEquilibrium
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings; none of these come from measured data.

    ``list_count = round(exp(base + beta*ability + gamma*log1p(tweets) + noise*z))``
    with z standard normal. ``base`` is raised when needed so that adjacent
    abilities never round to the same count.
    """

    n: int = 5000
    noise: float = 0.5
    beta: float = 6.0
    gamma: float = 0.3
    list_log_base: float = 9.0
    tweets_log_mean: float = 6.0
    tweets_log_sd: float = 1.2
    likes_per_tweet: float = 2.0
    tenure_min: int = 30
    tenure_max: int = 5000

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 2:
            raise ConfigError(f"synth.n must be an integer >= 2, got {self.n!r}")
        if not self.noise >= 0:
            raise ConfigError("synth.noise must be >= 0")
        if not self.beta > 0:
            raise ConfigError("synth.beta must be > 0")
        if not self.tweets_log_sd >= 0 or not self.likes_per_tweet >= 0:
            raise ConfigError("synth.tweets_log_sd and synth.likes_per_tweet must be >= 0")
        if not 0 <= self.tenure_min <= self.tenure_max:
            raise ConfigError("synth tenure bounds must satisfy 0 <= tenure_min <= tenure_max")

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any] | None) -> "SynthConfig":
        doc = dict(doc or {})
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown synth keys: {', '.join(unknown)}")
        return cls(**doc)

    def to_mapping(self) -> dict:
        return asdict(self)

    def effective_base(self) -> float:
        return max(self.list_log_base, math.log(4.0 * self.n / self.beta))


@dataclass(frozen=True)
class SynthData:
    ids: tuple[str, ...]
    ability: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    barter: np.ndarray
    users: pd.DataFrame
    base: float

    def edge_frame(self) -> pd.DataFrame:
        ids = np.asarray(self.ids, dtype=object)
        return pd.DataFrame(
            {"src": ids[self.src], "dst": ids[self.dst], "kind": np.where(self.barter, "barter", "organic")}
        )


def _pairs_within(members: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = members.size
    s = np.repeat(members, k)
    d = np.tile(members, k)
    keep = s != d
    return s[keep], d[keep]


def synth_graph(eq: HomogeneousEquilibrium, cfg: SynthConfig, seed: int) -> SynthData:
    n = cfg.n
    q0 = eq.params.q0
    ability = (np.arange(n) + 0.5) / n
    width = len(str(n - 1))
    ids = tuple(f"u{k:0{width}d}" for k in range(n))

    high = np.flatnonzero(ability > q0)
    s = np.repeat(np.arange(n), high.size)
    d = np.tile(high, n)
    keep = s != d
    src_parts, dst_parts, barter_parts = [s[keep]], [d[keep]], [np.zeros(int(keep.sum()), dtype=bool)]
    for club in eq.clubs:
        members = np.flatnonzero((ability > club.lower) & (ability <= club.upper))
        cs, cd = _pairs_within(members)
        src_parts.append(cs)
        dst_parts.append(cd)
        barter_parts.append(np.ones(cs.size, dtype=bool))
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    barter = np.concatenate(barter_parts)
    order = np.lexsort((dst, src))
    src, dst, barter = src[order], dst[order], barter[order]

    rng = np.random.default_rng(seed)
    half = (n + 1) // 2
    draw = np.floor(rng.lognormal(cfg.tweets_log_mean, cfg.tweets_log_sd, size=half)).astype(np.int64)
    # mirrored users share a tweet count, so activity is uncorrelated with
    # ability in-sample and regressing it out cannot reorder abilities
    tweets = np.concatenate([draw, draw[: n - half][::-1]])
    z = rng.standard_normal(n)
    tenure = rng.integers(cfg.tenure_min, cfg.tenure_max + 1, size=n)
    likes = rng.poisson(cfg.likes_per_tweet * tweets)
    base = cfg.effective_base()
    log_lists = base + cfg.beta * ability + cfg.gamma * np.log1p(tweets) + cfg.noise * z
    lists = np.rint(np.exp(log_lists)).astype(np.int64)

    users = pd.DataFrame(
        {
            "id": list(ids),
            "followers_count": np.bincount(dst, minlength=n),
            "followees_count": np.bincount(src, minlength=n),
            "tweets": tweets,
            "likes": likes,
            "tenure_days": tenure,
            "list_count": lists,
        },
        columns=list(USER_COLUMNS),
    )
    return SynthData(ids, ability, src, dst, barter, users, base)
