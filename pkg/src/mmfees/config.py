"""Experiment configuration and the flat ``key=value`` file format."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .agents import AgentConfig
from .market import FeeSchedule, MarketParams, PriceGrid

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "dump_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketParams = field(default_factory=MarketParams)
    fees: FeeSchedule = field(default_factory=FeeSchedule)
    agent: AgentConfig = field(default_factory=AgentConfig)
    n_instances: int = 20
    convergence_window: int = 100_000
    max_periods: int = 20_000_000
    eval_periods: int = 1_000
    base_seed: int = 0
    state_resolution: float = 1.0

    def __post_init__(self):
        if self.state_resolution <= 0:
            raise ConfigError("state_resolution must be positive")
        if self.n_instances < 1:
            raise ConfigError("n_instances must be at least 1")
        if self.convergence_window < 1:
            raise ConfigError("convergence_window must be at least 1")
        if self.eval_periods < 1:
            raise ConfigError("eval_periods must be at least 1")
        if self.max_periods < 1:
            raise ConfigError("max_periods must be at least 1")

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with flat-key overrides, e.g. ``cfg.replace(beta=0.2, gamma=0.99)``."""
        flat = to_flat(self)
        unknown = set(changes) - set(flat)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        flat.update(changes)
        return from_flat(flat)


_INT_KEYS = {"n_agents", "K", "n_instances", "convergence_window", "max_periods", "eval_periods", "base_seed"}


def to_flat(cfg: ExperimentConfig) -> dict:
    m, f, a = cfg.market, cfg.fees, cfg.agent
    return {
        "n_agents": m.n_agents,
        "K": m.K,
        "volume_per_agent": m.volume_per_agent,
        "concentration": m.concentration,
        "sigma": m.sigma,
        "c0": m.c0,
        "c1": m.c1,
        "xi": m.xi,
        "beta": f.beta,
        "eta": f.eta,
        "gamma": a.gamma,
        "alpha": a.alpha,
        "mu": a.mu,
        "skew_upper": a.skew_upper,
        "skew_lower": a.skew_lower,
        "n_instances": cfg.n_instances,
        "convergence_window": cfg.convergence_window,
        "max_periods": cfg.max_periods,
        "eval_periods": cfg.eval_periods,
        "base_seed": cfg.base_seed,
        "state_resolution": cfg.state_resolution,
    }


def from_flat(flat: dict) -> ExperimentConfig:
    try:
        market = MarketParams(
            grid=PriceGrid.uniform(int(flat["K"])),
            sigma=float(flat["sigma"]),
            c0=float(flat["c0"]),
            c1=float(flat["c1"]),
            volume_per_agent=float(flat["volume_per_agent"]),
            n_agents=int(flat["n_agents"]),
            xi=float(flat["xi"]),
            concentration=float(flat["concentration"]),
        )
        fees = FeeSchedule(float(flat["beta"]), float(flat["eta"]))
        agent = AgentConfig(
            alpha=float(flat["alpha"]),
            gamma=float(flat["gamma"]),
            mu=float(flat["mu"]),
            skew_upper=float(flat["skew_upper"]),
            skew_lower=float(flat["skew_lower"]),
        )
        return ExperimentConfig(
            market=market,
            fees=fees,
            agent=agent,
            n_instances=int(flat["n_instances"]),
            convergence_window=int(flat["convergence_window"]),
            max_periods=int(flat["max_periods"]),
            eval_periods=int(flat["eval_periods"]),
            base_seed=int(flat["base_seed"]),
            state_resolution=float(flat["state_resolution"]),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read ``key = value`` lines on top of ``base`` (defaults if omitted).

    Blank lines and ``#`` comments are ignored. Setting ``beta`` without
    ``eta`` keeps the exchange margin of 0.05 per share.
    """
    flat = to_flat(base or ExperimentConfig())
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in flat:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        seen[key] = _coerce(key, raw)
    if "beta" in seen and "eta" not in seen:
        seen["eta"] = FeeSchedule.with_margin(seen["beta"]).eta
    flat.update(seen)
    return from_flat(flat)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_flat(cfg).items())
