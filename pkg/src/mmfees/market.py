"""Price grid, quote curves, order arrival and pro-rata matching.

Everything on one side of the book is described by a length-K vector of
volumes indexed by spread level (level 1 is closest to the mid-price).
Volumes, fills and inventories are real-valued: pro-rata splitting at the
marginal level produces fractional fills.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = [
    "PriceGrid",
    "FeeSchedule",
    "MarketParams",
    "level_weights",
    "make_quote_curve",
    "aggregate_side",
    "arrival_probability",
    "sample_order_size",
    "match_side",
    "period_reward",
    "inventory_update",
]


@dataclass(frozen=True)
class PriceGrid:
    """Spread levels on one side, in ticks, ascending."""

    deltas: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("a price grid needs at least one level")
        if np.any(np.diff(d) <= 0):
            raise ValueError(f"deltas must be strictly increasing, got {self.deltas}")
        object.__setattr__(self, "deltas", tuple(float(x) for x in d))

    @classmethod
    def uniform(cls, K: int) -> "PriceGrid":
        """Grid with delta_k = k ticks."""
        return cls(tuple(float(k) for k in range(1, K + 1)))

    @property
    def K(self) -> int:
        return len(self.deltas)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.deltas, dtype=float)


@dataclass(frozen=True)
class FeeSchedule:
    """Maker rebate ``beta`` and taker fee ``eta`` per share, in ticks.

    Negative values give the taker-maker model (makers pay, takers are paid).
    """

    beta: float = 0.0
    eta: float = 0.0

    @classmethod
    def with_margin(cls, beta: float, margin: float = 0.05) -> "FeeSchedule":
        """Exchange keeps ``margin`` per share; ``beta == 0`` means no fees at all."""
        if beta == 0:
            return cls(0.0, 0.0)
        return cls(beta, beta + margin)


@dataclass(frozen=True)
class MarketParams:
    grid: PriceGrid = field(default_factory=PriceGrid)
    sigma: float = 0.4
    c0: float = 1.0
    c1: float = 0.2
    volume_per_agent: float = 20.0
    n_agents: int = 2
    xi: float = 0.05
    concentration: float = 0.7

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if self.c1 < 0:
            raise ValueError("c1 must be non-negative")
        if self.volume_per_agent < 0:
            raise ValueError("volume_per_agent must be non-negative")
        if not 0 <= self.concentration <= 1:
            raise ValueError("concentration must lie in [0, 1]")

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def M(self) -> int:
        """Largest market order per side per period: the whole book."""
        return int(round(self.volume_per_agent * self.n_agents))


def level_weights(grid: PriceGrid, fees: FeeSchedule, c0: float = 1.0, c1: float = 0.2) -> np.ndarray:
    """w_k = c1 * max(delta_k + eta - c0, 0)**2."""
    if c1 < 0:
        raise ValueError("c1 must be non-negative")
    return c1 * np.maximum(grid.as_array() + fees.eta - c0, 0.0) ** 2


def make_quote_curve(level: int, params: MarketParams, concentration: float | None = None) -> np.ndarray:
    """Put ``concentration`` of the agent's volume on ``level`` (1-based), the rest evenly elsewhere."""
    K = params.K
    if not 1 <= level <= K:
        raise ValueError(f"level must be in 1..{K}, got {level}")
    c = params.concentration if concentration is None else concentration
    V = params.volume_per_agent
    if K == 1:
        return np.array([V])
    curve = np.full(K, (1.0 - c) / (K - 1) * V)
    curve[level - 1] = c * V
    return curve


def aggregate_side(curves: np.ndarray) -> np.ndarray:
    """Sum an (N, K) stack of per-agent curves into the book side A(k)."""
    return np.asarray(curves, dtype=float).sum(axis=0)


@numba.njit(cache=True)
def _arrival_probability(side, weights, sigma):
    total = 0.0
    for k in range(side.shape[0]):
        total += side[k]
    if total <= 0.0:
        return 0.0
    f = 0.0
    for k in range(side.shape[0]):
        f += weights[k] * side[k] / total
    return np.exp(-f / sigma)


def arrival_probability(side: np.ndarray, weights: np.ndarray, sigma: float) -> float:
    """Per-order arrival probability exp(-f) for one book side.

    f is the volume-share-weighted level weight divided by ``sigma``.
    An empty side attracts no orders (p = 0).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    side = np.asarray(side, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if side.shape != weights.shape:
        raise ValueError("side and weights must have the same length")
    return float(_arrival_probability(side, weights, float(sigma)))


def sample_order_size(p: float, M: int, rng: np.random.Generator) -> int:
    """Draw the market-order size for one side: Binomial(M, p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be a probability, got {p}")
    return int(rng.binomial(M, p))


@numba.njit(cache=True)
def _match_side(quotes, m, out):
    n_agents, K = quotes.shape
    for i in range(n_agents):
        for k in range(K):
            out[i, k] = 0.0
    remaining = float(m)
    for k in range(K):
        if remaining <= 0.0:
            break
        depth = 0.0
        for i in range(n_agents):
            depth += quotes[i, k]
        if depth <= 0.0:
            continue
        if depth <= remaining:
            for i in range(n_agents):
                out[i, k] = quotes[i, k]
            remaining -= depth
        else:
            share = remaining / depth
            for i in range(n_agents):
                out[i, k] = quotes[i, k] * share
            remaining = 0.0
    return out


def match_side(quotes: np.ndarray, m: float) -> np.ndarray:
    """Fill a market order of size ``m`` against an (N, K) stack of quotes.

    Levels are consumed in price priority; the marginal level is split
    pro-rata to the agents' quotes there. Excess market volume is dropped.
    Returns an (N, K) array of fills.
    """
    quotes = np.atleast_2d(np.asarray(quotes, dtype=float))
    if m < 0:
        raise ValueError("order size must be non-negative")
    if np.any(quotes < 0):
        raise ValueError("quotes must be non-negative")
    return _match_side(quotes, float(m), np.empty_like(quotes))


def period_reward(
    ask_fills: np.ndarray,
    bid_fills: np.ndarray,
    grid: PriceGrid,
    beta: float,
    xi: float,
    dy: float,
) -> float:
    """Spread income plus rebate on both sides, minus xi * dy**2."""
    earn = grid.as_array() + beta
    return float(np.dot(ask_fills, earn) + np.dot(bid_fills, earn) - xi * dy * dy)


def inventory_update(y_prev: float, bid_total: float, ask_total: float) -> float:
    return y_prev + bid_total - ask_total
