"""Experiment orchestration.

Out-of-sample runs train one Q-table per fiscal year and evaluate each year
with the equal-weight average of all earlier years' tables.
In-sample runs train and evaluate on the same year, year by year, and log the
final greedy policy's choices for behaviour analysis.

All randomness comes from named child streams of one master seed keyed by
purpose and fiscal-year label, so results do not depend on execution order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from rlalloc import features as F
from rlalloc.agent import (
    EpisodeInputs,
    EpisodeTrace,
    QTable,
    average_q_tables,
    random_q_table,
    run_episodes,
)
from rlalloc.config import ExperimentConfig, FeatureParams
from rlalloc.env import Action, RebalanceFreq, StateSpaceConfig
from rlalloc.errors import ConfigError, InsufficientDataError
from rlalloc.market import MarketData
from rlalloc.report import BehaviorLog, annualized_sharpe
from rlalloc.reward import BenchmarkSpec, benchmark_best_fixed_weight
from rlalloc.seeding import child_rng

logger = logging.getLogger(__name__)


@dataclass
class YearData:
    """One complete fiscal year with every feature precomputed."""

    label: int
    dates: np.ndarray
    r_risky: np.ndarray
    r_safe: np.ndarray
    momentum_risky: np.ndarray
    momentum_safe: np.ndarray
    correlation: np.ndarray
    true_signal: np.ndarray
    quarter: np.ndarray
    phase: np.ndarray
    benchmark: BenchmarkSpec

    @property
    def n_days(self) -> int:
        return len(self.r_risky)


def prepare_years(data: MarketData, params: FeatureParams = FeatureParams()) -> list[YearData]:
    """Slice the data into complete fiscal years and compute their features.

    Trailing features read only data before each day; the oracle signal looks
    ahead but never past the end of its own year.
    """
    ra, rb = data.r_risky.returns, data.r_safe.returns
    mom_r = F.momentum_signs(data.risky.prices, params.momentum_lookback)
    mom_s = F.momentum_signs(data.safe.prices, params.momentum_lookback)
    corr = F.correlation_bins(ra, rb, params.corr_window, params.corr_threshold)
    years = []
    for fy in data.fiscal_years():
        sl = slice(fy.start, fy.stop)
        a, b = ra[sl].copy(), rb[sl].copy()
        years.append(
            YearData(
                label=fy.label,
                dates=data.dates[sl],
                r_risky=a,
                r_safe=b,
                momentum_risky=mom_r[sl],
                momentum_safe=mom_s[sl],
                correlation=corr[sl],
                true_signal=F.oracle_signals(a, b, params.signal_horizon),
                quarter=F.quarter_indices(len(fy)),
                phase=mom_s[sl].copy(),  # phase A iff safe-asset momentum is non-negative
                benchmark=benchmark_best_fixed_weight(a, b),
            )
        )
    return years


# --------------------------------------------------------------- building blocks


def flip_rates(year: YearData, cfg: ExperimentConfig) -> np.ndarray:
    if cfg.phase_accuracy is not None:
        acc = np.where(year.phase == F.PhaseId.A, cfg.phase_accuracy[0], cfg.phase_accuracy[1])
    else:
        acc = np.full(year.n_days, cfg.signal_accuracy)
    return 1.0 - acc


def observed_signals(year: YearData, cfg: ExperimentConfig, master_seed: int) -> np.ndarray:
    """Corrupted signals, shape ``(rows, T)``: one row per year, or one per episode."""
    rows = cfg.agent.episodes if cfg.resample_signal_per_episode else 1
    u = child_rng(master_seed, "signal", year.label).random((rows, year.n_days))
    return F.corrupt_signals(year.true_signal[None, :], flip_rates(year, cfg)[None, :], u)


def exo_index(year: YearData, space: StateSpaceConfig, signals: np.ndarray | None = None) -> np.ndarray:
    """Flat-state contribution of the exogenous components, shape ``(rows, T)``."""
    st = space.strides
    idx = np.zeros((1, year.n_days), dtype=np.int64)
    if space.use_momentum_pair:
        idx = idx + year.momentum_risky * st["momentum_risky"] + year.momentum_safe * st["momentum_safe"]
    if space.use_correlation:
        idx = idx + year.correlation * st["correlation"]
    if space.use_signal:
        if signals is None:
            raise ConfigError("signal enabled but no signals supplied", "use_signal")
        idx = idx + np.atleast_2d(signals) * st["signal"]
    if space.use_quarter:
        idx = idx + year.quarter * st["quarter"]
    if space.use_phase:
        idx = idx + year.phase * st["phase"]
    return idx


def episode_inputs(
    year: YearData,
    cfg: ExperimentConfig,
    space: StateSpaceConfig | None = None,
    signals: np.ndarray | None = None,
) -> EpisodeInputs:
    space = space or cfg.state_space
    return EpisodeInputs(
        space=space,
        exo_index=exo_index(year, space, signals),
        r_risky=year.r_risky,
        r_safe=year.r_safe,
        bm_sr=year.benchmark.sr_by_day,
        bm_sr10=year.benchmark.sr10_by_day,
        reward=cfg.reward,
        freq=cfg.rebalance_freq,
    )


@dataclass
class YearResult:
    label: int
    sharpe_annual: float
    trace: EpisodeTrace = field(repr=False)
    signals: np.ndarray | None = field(default=None, repr=False)


def greedy_rollout(
    year: YearData,
    q: QTable,
    cfg: ExperimentConfig,
    master_seed: int,
    signals: np.ndarray | None = None,
    stream: tuple = ("greedy",),
    with_reward: bool = True,
) -> YearResult:
    """One epsilon=0, non-learning pass; ties are broken from a named stream."""
    inputs = episode_inputs(year, cfg, q.space, None if signals is None else signals[:1])
    rng = child_rng(master_seed, *stream, year.label)
    trace = run_episodes(
        inputs, q, cfg.agent, cfg.algo, learn=False, rng=rng, episodes=1, epsilon=0.0,
        with_reward=with_reward,
    )
    sig = None if signals is None else signals[0]
    return YearResult(year.label, annualized_sharpe(trace.port_returns), trace, sig)


def train_in_sample(
    year: YearData,
    cfg: ExperimentConfig,
    master_seed: int,
    space: StateSpaceConfig | None = None,
) -> tuple[QTable, YearResult]:
    """Learn for ``cfg.agent.episodes`` episodes on one year, then roll out greedily."""
    space = space or cfg.state_space
    signals = observed_signals(year, cfg, master_seed) if space.use_signal else None
    q = QTable(space)
    inputs = episode_inputs(year, cfg, space, signals)
    run_episodes(inputs, q, cfg.agent, cfg.algo, learn=True, rng=child_rng(master_seed, "explore", year.label))
    return q, greedy_rollout(year, q, cfg, master_seed, signals)


def backtest_out_of_sample(
    year: YearData,
    past_tables: Sequence[QTable],
    cfg: ExperimentConfig,
    master_seed: int,
) -> YearResult:
    """Greedy rollout of the equal-weight average of tables learned on earlier years."""
    if not past_tables:
        raise InsufficientDataError(f"no past Q-tables for out-of-sample year {year.label}")
    q = average_q_tables(past_tables)
    signals = observed_signals(year, cfg, master_seed) if q.space.use_signal else None
    return greedy_rollout(year, q, cfg, master_seed, signals, stream=("oos",))


def _map(fn: Callable, items: Iterable, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------- out of sample


@dataclass
class Chapter4Result:
    rows: list[tuple[int, str, float]]
    random_samples: dict[int, np.ndarray]
    counts: dict[str, int]
    tables: dict[str, dict[int, QTable]] = field(repr=False, default_factory=dict)

    def sharpe(self, model: str) -> dict[int, float]:
        return {fy: s for fy, m, s in self.rows if m == model}

    def mean_sharpe(self, model: str) -> float:
        return float(np.mean(list(self.sharpe(model).values())))


def model_spaces(cfg: ExperimentConfig) -> dict[str, StateSpaceConfig]:
    base = cfg.state_space.with_(use_correlation=False)
    return {"base": base, "nonstationary": base.with_(use_correlation=True)}


def run_chapter4(
    years: Sequence[YearData],
    cfg: ExperimentConfig,
    master_seed: int | None = None,
    jobs: int = 1,
    n_random: int | None = None,
) -> Chapter4Result:
    """Base vs non-stationary models out of sample, plus the random-table model.

    Validation starts at the second year; the random model reports the median
    of ``n_random`` greedy rollouts from uniform random tables per year.
    """
    if len(years) < 2:
        raise InsufficientDataError("out-of-sample runs need at least two complete fiscal years")
    seed = cfg.agent.seed if master_seed is None else master_seed
    n_random = cfg.n_random if n_random is None else n_random
    spaces = model_spaces(cfg)
    counts = {"train": 0, "oos_rollouts": 0, "random_rollouts": 0}

    tables: dict[str, dict[int, QTable]] = {}
    for model, space in spaces.items():
        trained = _map(lambda y: train_in_sample(y, cfg, seed, space)[0], years, jobs)
        tables[model] = {y.label: q for y, q in zip(years, trained)}
        counts["train"] += len(years)

    rows: list[tuple[int, str, float]] = []
    random_samples: dict[int, np.ndarray] = {}
    random_space = spaces[cfg.random_model_space]

    def validate(i: int):
        year = years[i]
        out = []
        for model in spaces:
            past = [tables[model][y.label] for y in years[:i]]
            out.append((model, backtest_out_of_sample(year, past, cfg, seed).sharpe_annual))
        rng = child_rng(seed, "random-tables", year.label)
        samples = np.empty(n_random)
        for k in range(n_random):
            q = random_q_table(random_space, rng)
            samples[k] = greedy_rollout(
                year, q, cfg, seed, None, stream=("random-greedy", k), with_reward=False
            ).sharpe_annual
        return out, samples

    results = _map(validate, range(1, len(years)), jobs)
    for i, (out, samples) in zip(range(1, len(years)), results):
        label = years[i].label
        for model, s in out:
            rows.append((label, model, s))
            counts["oos_rollouts"] += 1
        rows.append((label, "random_median", float(np.median(samples))))
        random_samples[label] = samples
        counts["random_rollouts"] += len(samples)
    return Chapter4Result(rows, random_samples, counts, tables)


# --------------------------------------------------------------------- in sample


@dataclass
class CaseResult:
    cfg: ExperimentConfig
    years: list[YearResult]
    log: BehaviorLog
    tables: dict[int, QTable] = field(repr=False, default_factory=dict)

    @property
    def sharpes(self) -> np.ndarray:
        return np.array([y.sharpe_annual for y in self.years])


def behavior_rows(year: YearData, res: YearResult) -> BehaviorLog:
    tr = res.trace
    return BehaviorLog(
        fy=np.full(year.n_days, year.label, dtype=np.int64),
        quarter=year.quarter.copy(),
        signal=(
            np.full(year.n_days, -1, dtype=np.int64)
            if res.signals is None
            else np.asarray(res.signals, dtype=np.int64)
        ),
        true_signal=year.true_signal.copy(),
        phase=year.phase.copy(),
        w_tenths=tr.w_tenths.copy(),
        action=tr.actions.copy(),
        wealth=tr.wealth.copy(),
        peak=tr.peak.copy(),
    )


def run_in_sample(
    years: Sequence[YearData],
    cfg: ExperimentConfig,
    master_seed: int | None = None,
    jobs: int = 1,
) -> CaseResult:
    """Train and greedily evaluate every year in sample; pool the behaviour logs."""
    seed = cfg.agent.seed if master_seed is None else master_seed
    pairs = _map(lambda y: train_in_sample(y, cfg, seed), years, jobs)
    results = [r for _, r in pairs]
    log = BehaviorLog.concat([behavior_rows(y, r) for y, r in zip(years, results)])
    return CaseResult(cfg, results, log, {y.label: q for y, (q, _) in zip(years, pairs)})


def run_constraint_case(
    years: Sequence[YearData],
    cfg: ExperimentConfig,
    master_seed: int | None = None,
    jobs: int = 1,
) -> CaseResult:
    if cfg.mode != "in_sample":
        raise ConfigError("constraint cases are in-sample studies", "mode")
    return run_in_sample(years, cfg, master_seed, jobs)


def run_accuracy_sweep(
    years: Sequence[YearData],
    cfg: ExperimentConfig,
    levels: Sequence[float] | None = None,
    master_seed: int | None = None,
    jobs: int = 1,
) -> dict[float, CaseResult]:
    """In-sample results per signal accuracy; flip rate is ``1 - accuracy``.

    The corruption uniforms are shared across levels, so lower accuracies flip
    a superset of the days flipped at higher accuracies.
    """
    levels = cfg.accuracy_levels if levels is None else levels
    out = {}
    for level in levels:
        if not 0.5 <= level <= 1.0:
            raise ConfigError("accuracy levels must lie in [0.5, 1]", "accuracy_levels")
        out[float(level)] = run_in_sample(years, cfg.replace(signal_accuracy=float(level)), master_seed, jobs)
    return out


def run_rebalance_sweep(
    years: Sequence[YearData],
    cfg: ExperimentConfig,
    freqs: Sequence[RebalanceFreq] | None = None,
    master_seed: int | None = None,
    jobs: int = 1,
) -> dict[RebalanceFreq, CaseResult]:
    freqs = cfg.rebalance_freqs if freqs is None else freqs
    return {
        f: run_in_sample(years, cfg.replace(rebalance_freq=f.name.lower()), master_seed, jobs)
        for f in freqs
    }


@dataclass
class PhaseAccuracyResult:
    acc_a: float
    cases: dict[float, CaseResult]  # keyed by acc_b

    def rate_differences(self) -> dict[float, float]:
        """Phase-B minus phase-A signal-following rate, keyed by ``acc_b - acc_a``."""
        from rlalloc.report import phase_following_difference

        return {
            round(acc_b - self.acc_a, 10): phase_following_difference(case.log)
            for acc_b, case in self.cases.items()
        }


def run_phase_accuracy(
    years: Sequence[YearData],
    cfg: ExperimentConfig,
    acc_a: float | None = None,
    acc_b_levels: Sequence[float] | None = None,
    master_seed: int | None = None,
    jobs: int = 1,
) -> PhaseAccuracyResult:
    """Signals of accuracy ``acc_a`` in phase A and ``acc_b`` in phase B."""
    if not cfg.state_space.use_phase:
        raise ConfigError("phase-varying accuracy requires use_phase", "use_phase")
    if acc_a is None:
        acc_a = cfg.phase_accuracy[0] if cfg.phase_accuracy else cfg.signal_accuracy
    levels = cfg.phase_acc_b_levels if acc_b_levels is None else acc_b_levels
    cases = {
        float(b): run_in_sample(years, cfg.replace(phase_accuracy=[acc_a, float(b)]), master_seed, jobs)
        for b in levels
    }
    return PhaseAccuracyResult(float(acc_a), cases)


def non_hold_actions(trace: EpisodeTrace) -> int:
    """Number of days with an action other than Hold."""
    return int(np.sum(trace.actions != int(Action.HOLD)))
