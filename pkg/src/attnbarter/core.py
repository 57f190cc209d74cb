"""Model primitives: attention utility, parameters, and equilibrium value types.

Abilities are uniform on [0, 1] and tweet quality equals ability. All masses
and utilities live on a unit population mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError

ATTENTION_KINDS = ("sqrt_half", "log1p", "power")
CURVE_COLUMNS = (
    "ability",
    "followers",
    "followees",
    "bartered",
    "bidirectional",
    "ratio",
    "consumption_u",
    "attention_u",
    "monitoring_c",
    "total_v",
)


@dataclass(frozen=True)
class AttentionSpec:
    """Attention utility I(x) of receiving follower mass x.

    ``sqrt_half`` is sqrt(x)/2, ``log1p`` is ln(1 + x) and ``power`` is
    ``coefficient * x**exponent`` with the exponent in (0, 1).
    """

    kind: str = "sqrt_half"
    coefficient: float | None = None
    exponent: float | None = None

    def __post_init__(self):
        if self.kind not in ATTENTION_KINDS:
            raise ConfigError(f"attention.kind must be one of {ATTENTION_KINDS}, got {self.kind!r}")
        if self.kind == "power":
            if self.coefficient is None or self.exponent is None:
                raise ConfigError("power attention needs attention.coefficient and attention.exponent")
            if not self.coefficient > 0:
                raise ConfigError("attention.coefficient must be > 0")
            if not 0 < self.exponent < 1:
                raise ConfigError("attention.exponent must lie in (0, 1)")
        elif self.coefficient is not None or self.exponent is not None:
            raise ConfigError(f"attention.coefficient/exponent only apply to kind 'power', not {self.kind!r}")

    @property
    def diverges_at_zero(self) -> bool:
        return self.kind in ("sqrt_half", "power")

    def value(self, x):
        """Vectorised I(x) without domain checks."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sqrt_half":
            out = np.sqrt(x) / 2.0
        elif self.kind == "log1p":
            out = np.log1p(x)
        else:
            out = self.coefficient * np.power(x, self.exponent)
        return out if out.ndim else float(out)

    def slope(self, x):
        """Vectorised I'(x); +inf at 0 for kinds whose derivative diverges."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            if self.kind == "sqrt_half":
                out = 0.25 / np.sqrt(x)
            elif self.kind == "log1p":
                out = 1.0 / (1.0 + x)
            else:
                out = self.coefficient * self.exponent * np.power(x, self.exponent - 1.0)
        if self.diverges_at_zero:
            out = np.where(x == 0, np.inf, out)
        return out if out.ndim else float(out)


def _check_mass(x):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"attention argument must lie in [0, 1], got {x!r}")


def attention(spec: AttentionSpec, x):
    """Attention utility I(x) for follower mass ``x`` in [0, 1]."""
    _check_mass(x)
    return spec.value(x)


def attention_derivative(spec: AttentionSpec, x):
    """Analytic I'(x).

    Returns ``math.inf`` at x = 0 for ``sqrt_half`` and ``power``, whose
    derivative diverges there. Bisection on first-order conditions relies on
    this sentinel.
    """
    _check_mass(x)
    return spec.slope(x)


@dataclass(frozen=True)
class ModelParams:
    q0: float
    c: float
    attention: AttentionSpec = field(default_factory=AttentionSpec)

    def __post_init__(self):
        if not (isinstance(self.q0, (int, float)) and 0 <= self.q0 <= 1):
            raise ConfigError(f"q0 must lie in [0, 1], got {self.q0!r}")
        if not (isinstance(self.c, (int, float)) and self.c >= 0 and math.isfinite(self.c)):
            raise ConfigError(f"c must be a finite number >= 0, got {self.c!r}")

    def I(self, x):  # noqa: E743 - model symbol
        return self.attention.value(x)

    def dI(self, x):
        return self.attention.slope(x)

    def to_mapping(self) -> dict[str, Any]:
        att: dict[str, Any] = {"kind": self.attention.kind}
        if self.attention.kind == "power":
            att["coefficient"] = self.attention.coefficient
            att["exponent"] = self.attention.exponent
        return {"q0": self.q0, "c": self.c, "attention": att}

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any]) -> "ModelParams":
        """Build params from a nested or dotted-key mapping.

        Accepted keys are ``q0``, ``c``, ``attention.kind``,
        ``attention.coefficient`` and ``attention.exponent``.
        """
        flat = flatten_keys(doc)
        allowed = {"q0", "c", "attention.kind", "attention.coefficient", "attention.exponent"}
        unknown = sorted(set(flat) - allowed)
        if unknown:
            raise ConfigError(f"unknown parameter keys: {', '.join(unknown)}")
        for key in ("q0", "c"):
            if key not in flat:
                raise ConfigError(f"missing required parameter key: {key}")
        spec = AttentionSpec(
            kind=flat.get("attention.kind", "sqrt_half"),
            coefficient=_opt_float(flat.get("attention.coefficient"), "attention.coefficient"),
            exponent=_opt_float(flat.get("attention.exponent"), "attention.exponent"),
        )
        return cls(q0=_req_float(flat["q0"], "q0"), c=_req_float(flat["c"], "c"), attention=spec)

    def dumps(self) -> str:
        return json.dumps(self.to_mapping(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ModelParams":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"parameter document is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("parameter document must be a JSON object")
        return cls.from_mapping(doc)

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.loads(Path(path).read_text())


def flatten_keys(doc: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten_keys(value, name + "."))
        else:
            out[name] = value
    return out


def _req_float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _opt_float(value, key):
    return None if value is None else _req_float(value, key)


@dataclass(frozen=True)
class Club:
    """Ability interval (lower, upper] whose members barter only with each other."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0 <= self.lower < self.upper:
            raise DomainError(f"club needs 0 <= lower < upper, got ({self.lower}, {self.upper}]")

    @property
    def size(self) -> float:
        return self.upper - self.lower

    def contains(self, alpha: float) -> bool:
        return self.lower < alpha <= self.upper


@dataclass(frozen=True)
class HomogeneousEquilibrium:
    params: ModelParams
    clubs: tuple[Club, ...] = ()
    stopping: str = "literal"

    def __post_init__(self):
        object.__setattr__(self, "clubs", tuple(self.clubs))
        q0 = self.params.q0
        prev = q0
        for club in self.clubs:
            if not math.isclose(club.upper, prev, rel_tol=0, abs_tol=1e-12) or club.upper > q0 + 1e-12:
                raise DomainError("clubs must be contiguous and descending from q0")
            prev = club.lower

    @property
    def lurker_threshold(self) -> float:
        return self.clubs[-1].lower if self.clubs else self.params.q0

    def club_index(self, alpha: float) -> int | None:
        """Index of the club containing ``alpha`` under the half-open rule."""
        for k, club in enumerate(self.clubs):
            if club.contains(alpha):
                return k
        return None


@dataclass(frozen=True)
class OutcomePoint:
    ability: float
    followers: float
    followees: float
    bartered: float
    bidirectional: float
    ratio: float
    consumption_u: float
    attention_u: float
    monitoring_c: float
    total_v: float

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in CURVE_COLUMNS)


def make_point(ability, followers, followees, bartered, bidirectional, consumption_u, attention_u, monitoring_c):
    """OutcomePoint with ratio and total utility derived from the other fields."""
    ratio = followers / followees if followees > 0 else math.nan
    return OutcomePoint(
        ability=float(ability),
        followers=float(followers),
        followees=float(followees),
        bartered=float(bartered),
        bidirectional=float(bidirectional),
        ratio=float(ratio),
        consumption_u=float(consumption_u),
        attention_u=float(attention_u),
        monitoring_c=float(monitoring_c),
        total_v=float(consumption_u + attention_u - monitoring_c),
    )


@dataclass(frozen=True)
class OutcomeCurve:
    grid: np.ndarray
    points: tuple[OutcomePoint, ...]

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise DomainError("outcome grid must be strictly ascending")
        if len(self.points) != grid.size:
            raise DomainError("outcome curve needs one point per grid ability")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "points", tuple(self.points))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])

    def rows(self) -> list[tuple[float, ...]]:
        return [p.row() for p in self.points]


def default_grid(size: int = 1001) -> np.ndarray:
    if size < 2:
        raise DomainError("grid needs at least two abilities")
    return np.linspace(0.0, 1.0, size)


def as_grid(grid: Sequence[float] | np.ndarray | int | None) -> np.ndarray:
    if grid is None:
        return default_grid()
    if isinstance(grid, (int, np.integer)):
        return default_grid(int(grid))
    return np.asarray(grid, dtype=float)

