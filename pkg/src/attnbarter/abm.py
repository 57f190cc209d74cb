"""Finite-population realisation of the homogeneous model.

Each of ``n`` agents carries mass 1/n. Organic follows of users above ``q0``
are fixed at initialisation. Only barter partnerships, which are always
mutual, evolve. Dynamics are greedy asynchronous best responses: a visited
agent first drops partners it is better off without, then recruits the
highest-ability agents willing to reciprocate.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import HomogeneousEquilibrium, ModelParams
from .errors import DomainError


@dataclass
class AgentState:
    id: int
    ability: float
    organic_out: frozenset
    barter_partners: set = field(default_factory=set)


@dataclass
class SimState:
    agents: list[AgentState]
    params: ModelParams
    rng_seed: int
    sweep_count: int = 0

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def abilities(self) -> np.ndarray:
        return np.array([a.ability for a in self.agents])

    def is_high(self) -> np.ndarray:
        return self.abilities > self.params.q0

    def follower_counts(self) -> np.ndarray:
        """Followers per agent: everyone else if above q0, otherwise the partners."""
        n = self.n
        high = self.is_high()
        deg = np.array([len(a.barter_partners) for a in self.agents])
        return np.where(high, n - 1, deg)

    def barter_edges(self) -> list[tuple[int, int]]:
        return sorted((a.id, j) for a in self.agents for j in a.barter_partners if a.id < j)

    def check_symmetry(self) -> bool:
        return all(i in self.agents[j].barter_partners for i, a in enumerate(self.agents) for j in a.barter_partners)


class Move(NamedTuple):
    kind: str  # "drop" or "add"
    partner: int


def drop_partner(j: int) -> Move:
    return Move("drop", j)


def add_partner(j: int) -> Move:
    return Move("add", j)


def init_population(n: int, seed: int, params: ModelParams, placement: str = "iid_uniform") -> SimState:
    """Agents with no barter partners.

    ``even_grid`` places ability k at (k + 0.5) / n; ``iid_uniform`` draws
    abilities from U[0, 1] with ``seed``.
    """
    if n < 2:
        raise DomainError("population needs at least two agents")
    if placement == "iid_uniform":
        abilities = np.random.default_rng(seed).uniform(0.0, 1.0, size=n)
    elif placement == "even_grid":
        abilities = (np.arange(n) + 0.5) / n
    else:
        raise DomainError(f"unknown placement {placement!r}")
    high = frozenset(int(i) for i in np.flatnonzero(abilities > params.q0))
    agents = []
    for i, a in enumerate(abilities):
        out = high - {i} if i in high else high
        agents.append(AgentState(id=i, ability=float(a), organic_out=frozenset(out)))
    return SimState(agents=agents, params=params, rng_seed=int(seed))


def agent_utility(i: int, state: SimState) -> float:
    """V = U + I(m / n) - c * |partners| / n for agent ``i``."""
    p = state.params
    n = state.n
    me = state.agents[i]
    followees = me.organic_out | me.barter_partners
    u = sum(state.agents[j].ability - p.q0 for j in followees) / n
    m = sum(1 for j, other in enumerate(state.agents) if j != i and (i in other.organic_out or i in other.barter_partners))
    return u + float(p.I(m / n)) - p.c * len(me.barter_partners) / n


def _pair_gain(state: SimState, i: int, j: int, m_i: int, sign: int) -> float:
    """Gain to ``i`` of adding (sign=+1) or dropping (sign=-1) partner ``j``."""
    p = state.params
    n = state.n
    me, other = state.agents[i], state.agents[j]
    du = (other.ability - p.q0) / n if j not in me.organic_out else 0.0
    di = float(p.I((m_i + sign) / n) - p.I(m_i / n)) if i not in other.organic_out else 0.0
    return sign * du + di - sign * p.c / n


def deviation_gain(i: int, state: SimState, action: Move) -> float:
    """Utility change for agent ``i`` from one move, under mutual following.

    Dropping ``j`` also loses ``j`` as a follower. Whether an add can happen
    at all depends on the partner's willingness, see :func:`willing`.
    """
    if action.partner == i or not 0 <= action.partner < state.n:
        raise DomainError("move partner must be another agent")
    partners = state.agents[i].barter_partners
    m_i = int(state.follower_counts()[i])
    if action.kind == "drop":
        if action.partner not in partners:
            raise DomainError(f"agent {action.partner} is not a partner of {i}")
        return _pair_gain(state, i, action.partner, m_i, -1)
    if action.kind == "add":
        if action.partner in partners:
            raise DomainError(f"agent {action.partner} is already a partner of {i}")
        return _pair_gain(state, i, action.partner, m_i, +1)
    raise DomainError(f"unknown move {action.kind!r}")


def willing(j: int, i: int, state: SimState) -> bool:
    """Whether ``j`` weakly gains from taking ``i`` as a partner."""
    return deviation_gain(j, state, add_partner(i)) >= 0


class _Dynamics:
    """Array mirror of a state used inside sweeps."""

    def __init__(self, state: SimState):
        self.state = state
        p = state.params
        self.n = state.n
        self.a = state.abilities
        self.high = self.a > p.q0
        self.m = state.follower_counts().astype(float)
        self.partners = [a.barter_partners for a in state.agents]

    def attention_step(self, m, sign):
        p = self.state.params
        return p.I(np.clip(m + sign, 0, self.n) / self.n) - p.I(m / self.n)

    def add_gain_of_others(self, i):
        """Gain to every j of becoming partners with i (the willingness test)."""
        p = self.state.params
        du = 0.0 if self.high[i] else (self.a[i] - p.q0) / self.n
        di = np.where(self.high, 0.0, self.attention_step(self.m, +1))
        return du + di - p.c / self.n

    def gain(self, i, j, sign):
        p = self.state.params
        du = 0.0 if self.high[j] else (self.a[j] - p.q0) / self.n
        di = 0.0 if self.high[i] else float(self.attention_step(self.m[i], sign))
        return sign * du + di - sign * p.c / self.n

    def drop_gains(self, i, js):
        """Vectorised ``gain(i, j, -1)`` over the partners ``js``."""
        p = self.state.params
        du = np.where(self.high[js], 0.0, (self.a[js] - p.q0) / self.n)
        di = 0.0 if self.high[i] else float(self.attention_step(self.m[i], -1))
        return -du + di + p.c / self.n

    def link(self, i, j, sign):
        if sign > 0:
            self.partners[i].add(j)
            self.partners[j].add(i)
        else:
            self.partners[i].discard(j)
            self.partners[j].discard(i)
        for k in (i, j):
            if not self.high[k]:
                self.m[k] += sign

    def visit(self, i) -> int:
        changes = 0
        while self.partners[i]:
            options = np.array(sorted(self.partners[i]))
            gains = self.drop_gains(i, options)
            best = int(np.argmax(gains))
            if gains[best] <= 0:
                break
            self.link(i, int(options[best]), -1)
            changes += 1
        while True:
            ok = self.add_gain_of_others(i) >= 0
            ok[i] = False
            if self.partners[i]:
                ok[list(self.partners[i])] = False
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                break
            j = int(idx[np.argmax(self.a[idx])])
            if self.gain(i, j, +1) <= 0:
                break
            self.link(i, j, +1)
            changes += 1
        return changes


def _sweep(state: SimState, rng: np.random.Generator) -> tuple[SimState, int]:
    new = copy.deepcopy(state)
    dyn = _Dynamics(new)
    changes = 0
    for i in rng.permutation(new.n):
        changes += dyn.visit(int(i))
    new.sweep_count += 1
    return new, changes


def sweep(state: SimState, rng: np.random.Generator) -> SimState:
    """One pass over all agents in a random order; returns a new state."""
    return _sweep(state, rng)[0]


@dataclass
class RunResult:
    final_state: SimState
    converged: bool
    sweeps_used: int
    changes_per_sweep: list[int]


def run_until_stable(state: SimState, max_sweeps: int = 200, rng: np.random.Generator | None = None) -> RunResult:
    if max_sweeps < 1:
        raise DomainError("max_sweeps must be at least 1")
    if rng is None:
        rng = np.random.default_rng(state.rng_seed)
    history = []
    for k in range(1, max_sweeps + 1):
        state, changes = _sweep(state, rng)
        history.append(changes)
        if changes == 0:
            return RunResult(state, True, k, history)
    return RunResult(state, False, max_sweeps, history)


def seed_from_equilibrium(state: SimState, eq: HomogeneousEquilibrium) -> SimState:
    """Copy of ``state`` with partners assigned exactly by analytic club membership."""
    new = copy.deepcopy(state)
    members: dict[int, list[int]] = {}
    for agent in new.agents:
        agent.barter_partners = set()
        k = eq.club_index(agent.ability)
        if k is not None:
            members.setdefault(k, []).append(agent.id)
    for ids in members.values():
        group = set(ids)
        for i in ids:
            new.agents[i].barter_partners = group - {i}
    return new


@dataclass
class Comparison:
    in_band_fraction: float
    high_ability_barter_count: int
    barter_edge_count: int
    per_club_occupancy: list[dict]

    def to_mapping(self) -> dict:
        return {
            "in_band_fraction": self.in_band_fraction,
            "high_ability_barter_count": self.high_ability_barter_count,
            "barter_edge_count": self.barter_edge_count,
            "per_club_occupancy": self.per_club_occupancy,
        }


def compare_to_analytic(state: SimState, eq: HomogeneousEquilibrium, band_tol: float = 0.05) -> Comparison:
    """How closely the simulated partnerships match the analytic clubs.

    ``in_band_fraction`` is the share of barter edges whose two endpoints both
    fall inside one club widened by ``band_tol`` on each side; with no barter
    edges it is 1.
    """
    q0 = state.params.q0
    a = state.abilities
    edges = state.barter_edges()
    in_band = 0
    high = 0
    for i, j in edges:
        if a[i] > q0 or a[j] > q0:
            high += 1
        for club in eq.clubs:
            lo, hi = club.lower - band_tol, club.upper + band_tol
            if lo < a[i] <= hi and lo < a[j] <= hi:
                in_band += 1
                break
    occupancy = []
    n = state.n
    for k, club in enumerate(eq.clubs):
        ids = [ag.id for ag in state.agents if club.contains(ag.ability)]
        partners = [len(state.agents[i].barter_partners) for i in ids]
        occupancy.append(
            {
                "club": k,
                "lower": club.lower,
                "upper": club.upper,
                "agents": len(ids),
                "expected_agents": club.size * n,
                "mean_partners": float(np.mean(partners)) if partners else 0.0,
            }
        )
    frac = in_band / len(edges) if edges else 1.0
    return Comparison(frac, high, len(edges), occupancy)


AGENT_COLUMNS = ("id", "ability", "followers", "followees", "bartered")
EDGE_COLUMNS = ("src", "dst", "kind")


def agent_rows(state: SimState) -> list[tuple]:
    m = state.follower_counts()
    rows = []
    for agent, mi in zip(state.agents, m):
        followees = len(agent.organic_out | agent.barter_partners)
        rows.append((agent.id, agent.ability, int(mi), followees, len(agent.barter_partners)))
    return rows


def edge_rows(state: SimState) -> list[tuple]:
    """Directed follow edges; a pair that is both organic and bartered is organic."""
    rows = []
    for agent in state.agents:
        for j in sorted(agent.organic_out):
            rows.append((agent.id, j, "organic"))
        for j in sorted(agent.barter_partners - agent.organic_out):
            rows.append((agent.id, j, "barter"))
    return rows
