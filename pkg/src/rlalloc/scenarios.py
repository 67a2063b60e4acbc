"""Synthetic markets used by the experiments and tests.

Each builder returns a ``SyntheticMarketConfig`` laid out on whole fiscal
years, with a 60-day lead-in so trailing features exist from day one.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from rlalloc.errors import ConfigError
from rlalloc.market import MarketData, Regime, SyntheticMarketConfig, generate_synthetic_market
from rlalloc.seeding import child_rng, child_seed

DAYS_PER_YEAR = 252
WARMUP = 60


def _config(regimes, seed, start_year) -> SyntheticMarketConfig:
    return SyntheticMarketConfig(
        regimes=tuple(regimes),
        seed=child_seed(seed, "returns"),
        days_per_year=DAYS_PER_YEAR,
        start_year=start_year,
        warmup_days=WARMUP,
    )


def stationary(
    n_years: int,
    seed: int,
    drift_risky: float = 0.0003,
    vol_risky: float = 0.012,
    drift_safe: float = 0.0001,
    vol_safe: float = 0.003,
    correlation: float = 0.0,
    start_year: int = 2000,
) -> SyntheticMarketConfig:
    """One regime throughout: no structure for a state variable to find."""
    reg = Regime(WARMUP + n_years * DAYS_PER_YEAR, drift_risky, vol_risky, drift_safe, vol_safe, correlation)
    return _config([reg], seed, start_year)


def correlation_regimes(
    n_years: int,
    seed: int,
    block: int = 126,
    rho: float = 0.7,
    edge: float = 0.002,
    common: float = 0.002,
    vol_risky: float = 0.010,
    vol_safe: float = 0.006,
    start_year: int = 2000,
) -> SyntheticMarketConfig:
    """Blocks whose cross-asset correlation tells which asset is ahead.

    Positively correlated blocks favour the risky asset by ``edge`` per day,
    negatively correlated blocks favour the safe asset. Both assets also
    share a drift of random sign and size ``common``, which dominates their
    momentum signs, so momentum alone says little about the relative winner.
    """
    rng = child_rng(seed, "regime-order")
    n = WARMUP + n_years * DAYS_PER_YEAR
    regimes, total = [], 0
    while total < n:
        d = min(block, n - total)
        side = 1.0 if rng.random() < 0.5 else -1.0
        c = common if rng.random() < 0.5 else -common
        regimes.append(
            Regime(d, c + side * edge / 2, vol_risky, c - side * edge / 2, vol_safe, side * rho)
        )
        total += d
    return _config(regimes, seed, start_year)


def make_market(cfg: SyntheticMarketConfig) -> MarketData:
    risky, safe = generate_synthetic_market(cfg)
    return MarketData(risky, safe)


def regime_labels(cfg: SyntheticMarketConfig) -> np.ndarray:
    """Index of the generating regime for every return day."""
    return np.repeat(np.arange(len(cfg.regimes)), [r.duration for r in cfg.regimes])


SCENARIOS = {"stationary": stationary, "correlation_regimes": correlation_regimes}
_EXPLICIT_KEYS = ("days_per_year", "start_year", "warmup_days", "initial_price")


def from_dict(d: Mapping[str, Any], default_seed: int = 0) -> SyntheticMarketConfig:
    """Synthetic market from a TOML table.

    Either a named builder::

        scenario = "correlation_regimes"
        n_years = 6
        [params]
        edge = 0.002

    or explicit regimes::

        days_per_year = 252
        warmup_days = 60
        [[regimes]]
        duration = 312
        drift_risky = 0.0003
        vol_risky = 0.012
        drift_safe = 0.0001
        vol_safe = 0.003
        correlation = 0.0

    ``seed`` defaults to the experiment's master seed.
    """
    seed = d.get("seed", default_seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("expected an integer", "seed")
    if "scenario" in d:
        name = d["scenario"]
        if name not in SCENARIOS:
            raise ConfigError(f"must be one of {', '.join(SCENARIOS)}", "scenario")
        n_years = d.get("n_years")
        if not isinstance(n_years, int) or isinstance(n_years, bool) or n_years < 1:
            raise ConfigError("expected a positive integer", "n_years")
        params = dict(d.get("params", {}))
        try:
            return SCENARIOS[name](n_years, seed, **params)
        except TypeError as exc:
            raise ConfigError(str(exc), "params") from None
    if "regimes" not in d:
        raise ConfigError("need either 'scenario' or 'regimes'", "regimes")
    try:
        regimes = tuple(Regime(**r) for r in d["regimes"])
        extra = {k: d[k] for k in _EXPLICIT_KEYS if k in d}
        return SyntheticMarketConfig(regimes=regimes, seed=seed, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "regimes") from None
