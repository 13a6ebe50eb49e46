"""Learning runs, frozen-policy evaluation, instance aggregation and sweeps."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernel import run_periods
from .config import ExperimentConfig
from .agents import n_side_buckets
from .market import FeeSchedule, level_weights, make_quote_curve

log = logging.getLogger(__name__)

__all__ = [
    "Simulation",
    "InstanceResult",
    "AggregateResult",
    "run_instance",
    "evaluate_greedy",
    "run_experiment",
    "SWEEPS",
    "sweep_configs",
    "run_sweep",
    "CSV_COLUMNS",
    "write_csv",
]

Profile = tuple[int, ...]


def instance_streams(base_seed: int, instance: int, n_agents: int):
    """Market stream keyed (base_seed, instance); agent i keyed (base_seed, instance, i)."""
    market = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(instance,)))
    agents = tuple(
        np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(instance, i))) for i in range(n_agents)
    )
    return market, agents


class Simulation:
    """Mutable state of one market instance: Q-tables, inventories, current state, clocks.

    ``learns`` marks which agents update their tables; the others play their
    greedy policy from a fixed table.
    """

    def __init__(self, cfg: ExperimentConfig, instance: int = 0, q=None, learns=None):
        m = cfg.market
        self.cfg = cfg
        self.N = m.n_agents
        self.K = m.K
        A = self.K * self.K
        self.n_buckets = n_side_buckets(self.K, cfg.state_resolution)
        S = self.n_buckets * self.n_buckets
        self.q = np.zeros((self.N, S, A)) if q is None else np.array(q, dtype=float)
        if self.q.shape != (self.N, S, A):
            raise ValueError(f"Q-tables must have shape {(self.N, S, A)}")
        self.learns = np.ones(self.N, dtype=np.bool_) if learns is None else np.asarray(learns, dtype=np.bool_)
        self.inventory = np.zeros(self.N)
        self.inv_range = np.zeros((self.N, 2))
        self.visits = np.zeros((self.N, S, A), dtype=np.int64)
        self.state = S - 1  # widest bucket on both sides
        self.t = 0
        self.market_rng, self.agent_rngs = instance_streams(cfg.base_seed, instance, self.N)
        self._curves = np.array([make_quote_curve(k, m) for k in range(1, self.K + 1)])
        self._weights = level_weights(m.grid, cfg.fees, m.c0, m.c1)
        self._deltas = m.grid.as_array()

    def step(self, n_periods, *, learn=True, window=0, profiles=None, trace=0):
        """Advance ``n_periods`` (or until convergence when ``window`` > 0).

        Returns ``(converged, periods_run, totals, traces)`` where totals holds
        per-agent ask fills, bid fills and their fee-weighted sums.
        """
        cfg, m, a = self.cfg, self.cfg.market, self.cfg.agent
        totals = np.zeros((self.N, 4))
        if profiles is None:
            profiles = np.zeros(0, dtype=np.int64)
        learns = self.learns if learn else np.zeros(self.N, dtype=np.bool_)
        trace_s = np.zeros((trace, self.N), dtype=np.int64)
        trace_c = np.zeros((trace, self.N), dtype=np.int64)
        trace_r = np.zeros((trace, self.N))
        converged, ran, self.state = run_periods(
            self.q, self.inventory, self.state, self.t, n_periods, learns, learn, window,
            self._curves, self.n_buckets, cfg.state_resolution, self._deltas, self._weights, m.sigma, m.M, cfg.fees.beta, m.xi,
            a.alpha, a.gamma, a.mu, a.skew_upper, a.skew_lower,
            self.market_rng, self.agent_rngs, self.visits, self.inv_range, totals, profiles,
            trace_s, trace_c, trace_r,
        )
        if learn:
            self.t += ran
        return bool(converged), int(ran), totals, (trace_s, trace_c, trace_r)

    def greedy_policies(self) -> np.ndarray:
        """(N, S) 1-based joint action chosen in every state."""
        return np.argmax(self.q, axis=2) + 1


@dataclass
class InstanceResult:
    instance: int
    converged: bool
    periods_run: int
    final_greedy: np.ndarray  # (N, S), 1-based joint ids
    net_fee: float | None
    orders_per_agent: float
    modal_profile: Profile
    modal_share: float
    inventory_min: np.ndarray
    inventory_max: np.ndarray
    inventory_final: np.ndarray


def _decode_profile(code: int, N: int, A: int) -> Profile:
    out = []
    for _ in range(N):
        code, c = divmod(int(code), A)
        out.append(c + 1)
    return tuple(reversed(out))


def evaluate_greedy(sim: Simulation, eval_periods: int):
    """Play the frozen greedy policies and measure execution quality.

    Returns ``(net_fee, orders_per_agent, profile_counts)``. The net fee is the
    fill-weighted mean of ``delta + beta`` over both sides and all agents, or
    ``None`` when nothing trades.
    """
    profiles = np.zeros(eval_periods, dtype=np.int64)
    _, _, totals, _ = sim.step(eval_periods, learn=False, profiles=profiles)
    volume = totals[:, 0].sum() + totals[:, 1].sum()
    net_fee = float((totals[:, 2].sum() + totals[:, 3].sum()) / volume) if volume > 0 else None
    orders = float(volume / (eval_periods * sim.N * 2))
    A = sim.K * sim.K
    counts = Counter(_decode_profile(c, sim.N, A) for c in profiles)
    return net_fee, orders, counts


def run_instance(cfg: ExperimentConfig, instance: int = 0) -> InstanceResult:
    """Learn until every greedy policy is stable for the convergence window, then evaluate."""
    sim = Simulation(cfg, instance)
    converged, ran, _, _ = sim.step(cfg.max_periods, learn=True, window=cfg.convergence_window)
    if not converged:
        log.warning("instance %d did not converge in %d periods", instance, ran)
    greedy = sim.greedy_policies()
    net_fee, orders, counts = evaluate_greedy(sim, cfg.eval_periods)
    (modal, hits), = counts.most_common(1)
    return InstanceResult(
        instance=instance,
        converged=converged,
        periods_run=ran,
        final_greedy=greedy,
        net_fee=net_fee,
        orders_per_agent=orders,
        modal_profile=modal,
        modal_share=hits / cfg.eval_periods,
        inventory_min=sim.inv_range[:, 0].copy(),
        inventory_max=sim.inv_range[:, 1].copy(),
        inventory_final=sim.inventory.copy(),
    )


def _mean_std(values) -> tuple[float, float]:
    x = np.asarray([v for v in values if v is not None], dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1))


@dataclass
class AggregateResult:
    cfg: ExperimentConfig
    instances: list[InstanceResult]
    net_fee_mean: float
    net_fee_std: float
    orders_mean: float
    orders_std: float
    convergence_rate: float
    profile_shares: dict[Profile, float] = field(default_factory=dict)

    @property
    def modal_profile(self) -> Profile:
        return max(self.profile_shares, key=lambda p: (self.profile_shares[p], tuple(-c for c in p)))

    @property
    def modal_fraction(self) -> float:
        return self.profile_shares[self.modal_profile]

    def share(self, profile) -> float:
        """Fraction of instances whose evaluation window is dominated by ``profile``."""
        return self.profile_shares.get(tuple(profile), 0.0)

    @property
    def all_converged(self) -> bool:
        return self.convergence_rate == 1.0


def aggregate(cfg: ExperimentConfig, results: list[InstanceResult]) -> AggregateResult:
    """Statistics over converged instances (all instances if none converged)."""
    results = sorted(results, key=lambda r: r.instance)
    pool = [r for r in results if r.converged] or results
    fee_mean, fee_std = _mean_std(r.net_fee for r in pool)
    ord_mean, ord_std = _mean_std(r.orders_per_agent for r in pool)
    modal = Counter(r.modal_profile for r in pool)
    shares = {p: n / len(pool) for p, n in sorted(modal.items())}
    return AggregateResult(
        cfg=cfg,
        instances=results,
        net_fee_mean=fee_mean,
        net_fee_std=fee_std,
        orders_mean=ord_mean,
        orders_std=ord_std,
        convergence_rate=sum(r.converged for r in results) / len(results),
        profile_shares=shares,
    )


def _run_one(args):
    cfg, k = args
    return run_instance(cfg, k)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> AggregateResult:
    """Run ``cfg.n_instances`` independent instances and aggregate them in instance order."""
    jobs = [(cfg, k) for k in range(cfg.n_instances)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return aggregate(cfg, results)


def _fees(beta: float) -> dict:
    f = FeeSchedule.with_margin(beta)
    return {"beta": f.beta, "eta": f.eta}


SWEEPS: dict[int, tuple[str, list[dict]]] = {
    1: (
        "maker-taker",
        [{"gamma": g, **_fees(b)} for g, bs in ((0.0, (0.0, 0.1)), (0.5, (0.0, 0.1)),
                                             (0.95, (0.0, 0.1, 0.2, 0.3)), (0.99, (0.0, 0.1, 0.2, 0.5)))
         for b in bs],
    ),
    2: ("taker-maker", [{"gamma": 0.95, **_fees(b)} for b in (-0.15, -0.45, -0.75)]),
    3: ("volatility", [{"gamma": 0.95, "sigma": s, **_fees(0.2)} for s in (0.2, 0.6, 1.0)]),
    4: ("inventory", [{"gamma": 0.95, "xi": x, **_fees(0.2)} for x in (0.0, 0.1, 0.2, 0.3)]),
    5: ("agents", [{"gamma": 0.95, "n_agents": n, **_fees(0.0)} for n in (4, 6, 8)]),
}
SWEEP_NAMES = {name: tid for tid, (name, _) in SWEEPS.items()}


def sweep_configs(table: int | str, base: ExperimentConfig) -> list[ExperimentConfig]:
    tid = SWEEP_NAMES.get(table, table) if isinstance(table, str) else table
    if tid not in SWEEPS:
        raise ValueError(f"unknown sweep table {table!r}")
    return [base.replace(**cell) for cell in SWEEPS[tid][1]]


CSV_COLUMNS = [
    "table_id", "gamma", "beta", "eta", "sigma", "xi", "n_agents",
    "net_fee_mean", "net_fee_std", "orders_mean", "orders_std",
    "convergence_rate", "modal_profile", "modal_fraction",
]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.6f}"


def csv_row(table_id, res: AggregateResult) -> dict:
    m, f, a = res.cfg.market, res.cfg.fees, res.cfg.agent
    return {
        "table_id": table_id,
        "gamma": _fmt(a.gamma),
        "beta": _fmt(f.beta),
        "eta": _fmt(f.eta),
        "sigma": _fmt(m.sigma),
        "xi": _fmt(m.xi),
        "n_agents": m.n_agents,
        "net_fee_mean": _fmt(res.net_fee_mean),
        "net_fee_std": _fmt(res.net_fee_std),
        "orders_mean": _fmt(res.orders_mean),
        "orders_std": _fmt(res.orders_std),
        "convergence_rate": _fmt(res.convergence_rate),
        "modal_profile": "-".join(str(c) for c in res.modal_profile),
        "modal_fraction": _fmt(res.modal_fraction),
    }


def write_csv(rows: list[dict], out) -> None:
    """Write rows to a path or a text stream."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            write_csv(rows, fh)
        return
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def run_sweep(table: int | str, base: ExperimentConfig, workers: int = 1, on_row=None):
    """Run every cell of a sweep table; returns ``(rows, results)``.

    ``on_row`` is called with each CSV row as soon as its cell finishes.
    """
    tid = SWEEP_NAMES.get(table, table) if isinstance(table, str) else table
    rows, results = [], []
    for cfg in sweep_configs(tid, base):
        res = run_experiment(cfg, workers=workers)
        row = csv_row(tid, res)
        rows.append(row)
        results.append(res)
        if on_row is not None:
            on_row(row)
    return rows, results


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()
