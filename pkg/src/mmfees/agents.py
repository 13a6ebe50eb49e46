"""Independent tabular Q-learners that quote both sides of the book.

Joint actions use ``id = (ask - 1) * K + bid`` with ``ask, bid`` in ``1..K``.
States use the same row-major layout over B buckets per side, where B = K at
the default one-level resolution. Q-tables are indexed with zero-based ids.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = [
    "encode_joint",
    "decode_joint",
    "AgentConfig",
    "AgentState",
    "epsilon",
    "n_side_buckets",
    "side_bucket",
    "encode_state",
    "select_action",
    "q_update",
    "apply_skew",
    "format_q_table",
    "parse_q_table",
]


def encode_joint(ask: int, bid: int, K: int) -> int:
    if not (1 <= ask <= K and 1 <= bid <= K):
        raise ValueError(f"levels must be in 1..{K}, got ask={ask} bid={bid}")
    return (ask - 1) * K + bid


def decode_joint(joint: int, K: int) -> tuple[int, int]:
    """Inverse of :func:`encode_joint`; returns ``(ask, bid)``."""
    if not 1 <= joint <= K * K:
        raise ValueError(f"joint id must be in 1..{K * K}, got {joint}")
    return (joint - 1) // K + 1, (joint - 1) % K + 1


@dataclass(frozen=True)
class AgentConfig:
    alpha: float = 0.05
    gamma: float = 0.95
    mu: float = 1e-5
    skew_upper: float = 500.0
    skew_lower: float = -500.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.skew_lower > self.skew_upper:
            raise ValueError("skew_lower must not exceed skew_upper")


@dataclass
class AgentState:
    """Q-table, running inventory and a private random stream."""

    K: int
    rng: np.random.Generator
    q: np.ndarray = field(default=None)
    inventory: float = 0.0
    n_states: int | None = None

    def __post_init__(self):
        n = self.K * self.K
        S = n if self.n_states is None else self.n_states
        if self.q is None:
            self.q = np.zeros((S, n))
        elif self.q.shape != (S, n):
            raise ValueError(f"Q-table must be {S}x{n}")

    def greedy_policy(self) -> np.ndarray:
        """Joint action id chosen in each state (lowest id among ties)."""
        return np.argmax(self.q, axis=1) + 1


def epsilon(t: float, mu: float) -> float:
    """Exploration rate exp(-mu * t)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if mu <= 0:
        raise ValueError("mu must be positive")
    return float(np.exp(-mu * t))


@numba.njit(cache=True)
def _side_bucket(side, n_buckets, resolution):
    # zero-based bucket of the volume-weighted mean level; 1.0 resolution = nearest level
    total = 0.0
    acc = 0.0
    for k in range(side.shape[0]):
        total += side[k]
        acc += (k + 1) * side[k]
    if total <= 0.0:
        return n_buckets - 1
    # round half up; the slack absorbs float noise at exact .5 ties
    b = int(np.floor((acc / total - 1.0) / resolution + 0.5 + 1e-9))
    if b < 0:
        return 0
    if b > n_buckets - 1:
        return n_buckets - 1
    return b


@numba.njit(cache=True)
def _encode_state(ask_side, bid_side, n_buckets, resolution):
    # zero-based state id
    return _side_bucket(ask_side, n_buckets, resolution) * n_buckets + _side_bucket(bid_side, n_buckets, resolution)


def n_side_buckets(K: int, resolution: float = 1.0) -> int:
    """Buckets per side when the mean level in [1, K] is cut at ``resolution`` ticks."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    return int(np.floor((K - 1) / resolution + 0.5 + 1e-9)) + 1


def side_bucket(side: np.ndarray, resolution: float = 1.0) -> int:
    """1-based bucket of the volume-weighted mean level of one book side.

    With the default resolution the mean is rounded half up to the nearest
    level. An empty side maps to the widest bucket.
    """
    side = np.asarray(side, dtype=float)
    nb = n_side_buckets(side.shape[0], resolution)
    return int(_side_bucket(side, nb, float(resolution))) + 1


def encode_state(ask_side: np.ndarray, bid_side: np.ndarray, resolution: float = 1.0) -> int:
    """1-based state id ``(ask_bucket - 1) * B + bid_bucket`` with B buckets per side."""
    ask_side = np.asarray(ask_side, dtype=float)
    bid_side = np.asarray(bid_side, dtype=float)
    if ask_side.shape != bid_side.shape:
        raise ValueError("both sides need the same number of levels")
    nb = n_side_buckets(ask_side.shape[0], resolution)
    return int(_encode_state(ask_side, bid_side, nb, float(resolution))) + 1


@numba.njit(cache=True)
def _greedy(q_row, rng):
    best = q_row[0]
    n_best = 1
    for j in range(1, q_row.shape[0]):
        v = q_row[j]
        if v > best:
            best = v
            n_best = 1
        elif v == best:
            n_best += 1
    if n_best == 1:
        for j in range(q_row.shape[0]):
            if q_row[j] == best:
                return j
    pick = rng.integers(0, n_best)
    for j in range(q_row.shape[0]):
        if q_row[j] == best:
            if pick == 0:
                return j
            pick -= 1
    return 0


@numba.njit(cache=True)
def _select_action(q_row, eps, rng):
    if eps > 0.0 and rng.random() < eps:
        return rng.integers(0, q_row.shape[0])
    return _greedy(q_row, rng)


def select_action(q_row: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; returns a 1-based joint action id.

    Ties among maximisers are broken uniformly at random.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    return int(_select_action(np.asarray(q_row, dtype=float), float(eps), rng)) + 1


def q_update(
    q: np.ndarray,
    s: int,
    c: int,
    r: float,
    s_next: int,
    alpha: float,
    gamma: float,
) -> np.ndarray:
    """One Q-learning step on a copy of ``q``; ``s``, ``c``, ``s_next`` are 1-based ids."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = np.array(q, dtype=float, copy=True)
    target = r + gamma * out[s_next - 1].max()
    out[s - 1, c - 1] = (1.0 - alpha) * out[s - 1, c - 1] + alpha * target
    return out


@numba.njit(cache=True)
def _apply_skew(action, inventory, upper, lower, K):
    # zero-based joint action in, zero-based out
    if inventory > upper:
        return K - 1  # ask 1, bid K
    if inventory < lower:
        return (K - 1) * K  # ask K, bid 1
    return action


def apply_skew(action: int, inventory: float, cfg: AgentConfig, K: int = 4) -> int:
    """Override the executed quotes once inventory leaves the allowed band.

    Long inventory quotes the tightest ask and widest bid, short inventory the
    reverse. Ids are 1-based.
    """
    return int(_apply_skew(action - 1, inventory, cfg.skew_upper, cfg.skew_lower, K)) + 1


def format_q_table(q: np.ndarray) -> str:
    """Plain-text dump: one row per state, space-separated reals."""
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(q, dtype=float), fmt="%.10g", delimiter=" ")
    return buf.getvalue()


def parse_q_table(text: str) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(io.StringIO(text), ndmin=2))
