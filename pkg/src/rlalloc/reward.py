"""Sharpe ratios, the hindsight fixed-weight benchmark, the basic reward and
target / drawdown shaping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rlalloc import _kernels as K
from rlalloc.env import PortfolioState
from rlalloc.errors import ConfigError

SHORT_WINDOW = 10
GRID_WEIGHTS = tuple(range(K.GRID + 1))  # tenths


def sharpe(returns) -> float:
    """Mean over population stdev of daily returns, risk-free 0, unannualised.

    Zero-volatility windows give 0 for a zero mean and +/-100 otherwise.
    """
    x = np.ascontiguousarray(returns, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("sharpe needs a non-empty 1-d window")
    return float(K.sharpe_range(x, 0, len(x)))


def running_sharpes(x: np.ndarray, window: int | None = None) -> np.ndarray:
    """Sharpe of ``x[0..t]`` (or of its trailing ``window`` days) for every t."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(len(x))
    for t in range(len(x)):
        lo = 0 if window is None else max(0, t - window + 1)
        out[t] = K.sharpe_range(x, lo, t + 1)
    return out


def fixed_weight_returns(r_risky, r_safe, w_tenths: int) -> np.ndarray:
    """Daily-rebalanced constant-mix returns (same arithmetic as the environment)."""
    ra = np.asarray(r_risky, dtype=np.float64)
    rb = np.asarray(r_safe, dtype=np.float64)
    return np.array([K.mix_return(w_tenths, a, b) for a, b in zip(ra, rb)])


@dataclass(frozen=True)
class BenchmarkSpec:
    w_star: int  # tenths
    sr_by_day: np.ndarray
    sr10_by_day: np.ndarray
    full_year_sharpes: np.ndarray = field(repr=False)

    @property
    def w_risky(self) -> float:
        return self.w_star / K.GRID


def benchmark_best_fixed_weight(r_risky, r_safe) -> BenchmarkSpec:
    """Constant weight with the best full-year Sharpe; ties go to the lowest weight."""
    if len(r_risky) == 0 or len(r_risky) != len(r_safe):
        raise ValueError("benchmark needs two aligned, non-empty return arrays")
    series = [fixed_weight_returns(r_risky, r_safe, w) for w in GRID_WEIGHTS]
    full = np.array([sharpe(s) for s in series])
    w_star = int(np.argmax(full))  # first maximum = lowest weight
    best = series[w_star]
    return BenchmarkSpec(w_star, running_sharpes(best), running_sharpes(best, SHORT_WINDOW), full)


def basic_reward(t: int, port_returns, bm: BenchmarkSpec) -> float:
    """Year-to-date plus trailing-10-day Sharpe excess over the benchmark at day ``t``."""
    x = np.ascontiguousarray(port_returns, dtype=np.float64)
    if not 0 <= t < len(x):
        raise IndexError(f"day {t} has no portfolio return")
    lo10 = max(0, t - SHORT_WINDOW + 1)
    return (K.sharpe_range(x, 0, t + 1) - bm.sr_by_day[t]) + (
        K.sharpe_range(x, lo10, t + 1) - bm.sr10_by_day[t]
    )


# ---------------------------------------------------------------------- shaping

DD_MODES = {"peak": K.DD_FROM_PEAK, "start": K.DD_FROM_START}


@dataclass(frozen=True)
class RewardConfig:
    """Step bonuses for cumulative-return targets and penalties for drawdowns.

    ``dd_mode="peak"`` measures drawdown from the running wealth peak;
    ``"start"`` measures the loss from the start of the year.
    """

    target_levels: tuple[float, ...] = ()
    target_bonuses: tuple[float, ...] = ()
    dd_levels: tuple[float, ...] = ()
    dd_penalties: tuple[float, ...] = ()
    dd_mode: str = "peak"

    def __post_init__(self):
        for name in ("target_levels", "target_bonuses", "dd_levels", "dd_penalties"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for levels, values, lname, vname in (
            (self.target_levels, self.target_bonuses, "target_levels", "target_bonuses"),
            (self.dd_levels, self.dd_penalties, "dd_levels", "dd_penalties"),
        ):
            if len(levels) != len(values):
                raise ConfigError(f"length {len(values)} does not match {lname} ({len(levels)})", vname)
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ConfigError("levels must be strictly increasing", lname)
        if any(not 0 < v < 1 for v in self.dd_levels):
            raise ConfigError("drawdown levels must lie in (0, 1)", "dd_levels")
        if self.dd_mode not in DD_MODES:
            raise ConfigError(f"must be one of {sorted(DD_MODES)}", "dd_mode")

    @property
    def is_empty(self) -> bool:
        return not self.target_levels and not self.dd_levels


@dataclass(frozen=True)
class EpisodeStatus:
    cum_return: float = 0.0
    drawdown: float = 0.0
    target_level: int = 0
    dd_level: int = 0


def measure_drawdown(wealth: float, peak: float, mode: str = "peak") -> float:
    return float(K.status_drawdown(wealth, peak, DD_MODES[mode]))


def update_episode_status(st: EpisodeStatus, s: PortfolioState, cfg: RewardConfig) -> EpisodeStatus:
    """Target level tracks the current cumulative return; drawdown level never falls."""
    cum = s.wealth - 1.0
    dd = measure_drawdown(s.wealth, s.peak_wealth, cfg.dd_mode)
    target = int(K.level_count(np.array(cfg.target_levels), cum)) if cfg.target_levels else 0
    dd_now = int(K.level_count(np.array(cfg.dd_levels), dd)) if cfg.dd_levels else 0
    return EpisodeStatus(cum, dd, target, max(st.dd_level, dd_now))


def shaped_reward(base: float, st: EpisodeStatus, cfg: RewardConfig) -> float:
    r = base
    if st.target_level > 0:
        r += cfg.target_bonuses[st.target_level - 1]
    if st.dd_level > 0:
        r += cfg.dd_penalties[st.dd_level - 1]
    return r


def level_counts(values: Sequence[float], levels: Sequence[float]) -> np.ndarray:
    """Number of ``levels`` at or below each value."""
    return np.searchsorted(np.asarray(levels, dtype=np.float64), np.asarray(values), side="right")
