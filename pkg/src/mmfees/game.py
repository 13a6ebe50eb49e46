"""Exact one-period reward matrices and equilibrium classification.

Each side's market order is Binomial(M, p) and the fills for a given order
size are deterministic, so expectations are exact sums over m = 0..M.
Ask and bid flows are independent, which gives the inventory penalty as
E[(b - a)^2] = E[b^2] + E[a^2] - 2 E[a] E[b].
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import binom

from .agents import decode_joint
from .market import (
    FeeSchedule,
    MarketParams,
    _arrival_probability,
    _match_side,
    level_weights,
    make_quote_curve,
)

__all__ = [
    "SideMoments",
    "RewardMatrix",
    "EquilibriumReport",
    "side_moments",
    "expected_side_fills",
    "expected_reward",
    "build_reward_matrix",
    "find_pure_nash",
    "find_cooperative",
    "analyze",
    "format_matrix",
    "MAX_PROFILES",
]

MAX_PROFILES = 10**7


@dataclass(frozen=True)
class SideMoments:
    """Per-agent fill statistics on one side for a fixed set of quotes."""

    p: float
    fills: np.ndarray  # (N, K) expected fills
    mean: np.ndarray  # (N,) E[total fills]
    second: np.ndarray  # (N,) E[total fills ** 2]
    income: np.ndarray  # (N,) E[sum_k fills_k * delta_k]


def side_moments(levels, params: MarketParams, fees: FeeSchedule) -> SideMoments:
    """Exact fill moments for one side when agent i quotes around ``levels[i]``."""
    quotes = np.array([make_quote_curve(int(lv), params) for lv in levels])
    weights = level_weights(params.grid, fees, params.c0, params.c1)
    p = float(_arrival_probability(quotes.sum(axis=0), weights, params.sigma))
    M = params.M
    deltas = params.grid.as_array()
    n = quotes.shape[0]
    fills = np.zeros_like(quotes)
    mean = np.zeros(n)
    second = np.zeros(n)
    income = np.zeros(n)
    pmf = binom.pmf(np.arange(M + 1), M, p)
    buf = np.empty_like(quotes)
    for m in range(M + 1):
        if pmf[m] == 0.0:
            continue
        g = _match_side(quotes, float(m), buf)
        tot = g.sum(axis=1)
        fills += pmf[m] * g
        mean += pmf[m] * tot
        second += pmf[m] * tot * tot
        income += pmf[m] * (g @ deltas)
    return SideMoments(p, fills, mean, second, income)


def _split_profile(profile, K):
    pairs = [decode_joint(int(c), K) for c in profile]
    return tuple(a for a, _ in pairs), tuple(b for _, b in pairs)


def expected_side_fills(profile, side: str, params: MarketParams, fees: FeeSchedule) -> np.ndarray:
    """(N, K) matrix of expected fills on ``side`` ('ask' or 'bid') for a joint-action profile."""
    asks, bids = _split_profile(profile, params.K)
    if side == "ask":
        return side_moments(asks, params, fees).fills
    if side == "bid":
        return side_moments(bids, params, fees).fills
    raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")


def _combine(ask: SideMoments, bid: SideMoments, fees: FeeSchedule, xi: float) -> np.ndarray:
    penalty = ask.second + bid.second - 2.0 * ask.mean * bid.mean
    return ask.income + bid.income + fees.beta * (ask.mean + bid.mean) - xi * penalty


def expected_reward(profile, params: MarketParams, fees: FeeSchedule) -> np.ndarray:
    """Expected one-period reward of every agent under a profile of joint action ids."""
    if len(profile) != params.n_agents:
        raise ValueError(f"profile needs {params.n_agents} actions, got {len(profile)}")
    asks, bids = _split_profile(profile, params.K)
    return _combine(side_moments(asks, params, fees), side_moments(bids, params, fees), fees, params.xi)


@dataclass(frozen=True)
class RewardMatrix:
    """``entries[i][c_1 - 1, ..., c_N - 1]`` is agent i's expected reward."""

    n_agents: int
    K: int
    entries: np.ndarray  # shape (N, A, ..., A) with A = K**2

    @property
    def n_actions(self) -> int:
        return self.K * self.K

    def reward(self, agent: int, profile) -> float:
        return float(self.entries[(agent,) + tuple(int(c) - 1 for c in profile)])

    def joint_profit(self) -> np.ndarray:
        return self.entries.sum(axis=0)


def build_reward_matrix(params: MarketParams, fees: FeeSchedule) -> RewardMatrix:
    """Enumerate every joint profile; agents are symmetric so each multiset is solved once."""
    K, N = params.K, params.n_agents
    A = K * K
    if A**N > MAX_PROFILES:
        raise ValueError(f"{A**N} profiles exceed the enumeration cap of {MAX_PROFILES}; simulate instead")

    @lru_cache(maxsize=None)
    def side(levels):
        return side_moments(levels, params, fees)

    entries = np.empty((N,) + (A,) * N)
    solved: dict[tuple[int, ...], dict[int, float]] = {}
    for profile in itertools.product(range(1, A + 1), repeat=N):
        key = tuple(sorted(profile))
        if key not in solved:
            asks, bids = _split_profile(key, K)
            # side moments are permutation-equivariant; sort levels to share cache entries
            a_order = np.argsort(asks, kind="stable")
            b_order = np.argsort(bids, kind="stable")
            sa = side(tuple(asks[j] for j in a_order))
            sb = side(tuple(bids[j] for j in b_order))
            a = _unsort(sa, a_order)
            b = _unsort(sb, b_order)
            solved[key] = _by_action(key, _combine(a, b, fees, params.xi))
        idx = tuple(c - 1 for c in profile)
        for i, c in enumerate(profile):
            entries[(i,) + idx] = solved[key][c]
    return RewardMatrix(N, K, entries)


def _unsort(sm: SideMoments, order: np.ndarray) -> SideMoments:
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return SideMoments(sm.p, sm.fills[inv], sm.mean[inv], sm.second[inv], sm.income[inv])


def _by_action(key, rewards) -> dict[int, float]:
    # agents holding the same action in a symmetric game earn the same reward
    return {c: float(rewards[i]) for i, c in enumerate(key)}


@dataclass(frozen=True)
class EquilibriumReport:
    pure_nash: list[tuple[int, ...]]
    cooperative: list[tuple[int, ...]]
    joint_profit: np.ndarray

    def is_nash(self, profile) -> bool:
        return tuple(profile) in set(self.pure_nash)

    def is_cooperative(self, profile) -> bool:
        return tuple(profile) in set(self.cooperative)


def find_pure_nash(matrix: RewardMatrix, tol: float = 1e-9) -> list[tuple[int, ...]]:
    """Profiles where no agent gains by deviating alone (weak inequality)."""
    E = matrix.entries
    N = matrix.n_agents
    stable = np.ones(E.shape[1:], dtype=bool)
    for i in range(N):
        best = E[i].max(axis=i, keepdims=True)
        stable &= E[i] >= best - tol
    return [tuple(int(x) + 1 for x in idx) for idx in np.argwhere(stable)]


def find_cooperative(matrix: RewardMatrix, tol: float = 1e-9) -> list[tuple[int, ...]]:
    """All profiles maximising the agents' summed expected reward."""
    J = matrix.joint_profit()
    return [tuple(int(x) + 1 for x in idx) for idx in np.argwhere(J >= J.max() - tol)]


def analyze(matrix: RewardMatrix) -> EquilibriumReport:
    return EquilibriumReport(find_pure_nash(matrix), find_cooperative(matrix), matrix.joint_profit())


def format_matrix(matrix: RewardMatrix, agent: int = 0) -> str:
    """Two-agent table for ``agent``: rows are its own action, columns the competitor's."""
    if matrix.n_agents != 2:
        raise ValueError("tables are only printed for two-agent games")
    A = matrix.n_actions
    table = matrix.entries[agent] if agent == 0 else matrix.entries[agent].T
    width = max(7, max(len(f"{v:.1f}") for v in table.ravel()) + 1)
    head = "own\\opp".rjust(7) + "".join(f"{c:>{width}d}" for c in range(1, A + 1))
    lines = [f"agent {agent + 1}", head]
    for r in range(A):
        lines.append(f"{r + 1:>7d}" + "".join(f"{table[r, c]:>{width}.1f}" for c in range(A)))
    return "\n".join(lines)
