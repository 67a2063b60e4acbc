import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlalloc.env import PortfolioState
from rlalloc.errors import ConfigError
from rlalloc.reward import (
    BenchmarkSpec,
    EpisodeStatus,
    RewardConfig,
    basic_reward,
    benchmark_best_fixed_weight,
    fixed_weight_returns,
    level_counts,
    measure_drawdown,
    running_sharpes,
    sharpe,
    shaped_reward,
    update_episode_status,
)


def _plain_sharpe(x):
    """Independent reference: statistics module, population stdev."""
    import statistics

    return statistics.fmean(x) / statistics.pstdev(x)


def _window(mean, sd, n=100):
    z = np.tile([1.0, -1.0], n // 2)
    return mean + sd * z


def test_sharpe_examples():
    assert sharpe([0.01, -0.01]) == 0.0
    assert sharpe(_window(0.001, 0.01)) == pytest.approx(0.1, rel=1e-9)
    assert sharpe([0.01, 0.01]) == 100.0
    assert sharpe([-0.01, -0.01]) == -100.0
    assert sharpe([0.0, 0.0, 0.0]) == 0.0


def test_sharpe_empty():
    with pytest.raises(ValueError):
        sharpe([])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-0.1, 0.1), min_size=2, max_size=50))
def test_sharpe_matches_reference(x):
    import statistics

    if statistics.pstdev(x) < 1e-6:
        return
    assert sharpe(x) == pytest.approx(_plain_sharpe(x), rel=1e-9, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.1, 0.1).map(lambda v: round(v, 6)), min_size=2, max_size=30), st.floats(0.01, 100))
def test_sharpe_scale_invariant(x, c):
    a, b = sharpe(x), sharpe(np.array(x) * c)
    assert a == pytest.approx(b, rel=1e-7, abs=1e-9)


def test_running_sharpes():
    x = np.random.default_rng(0).normal(0.001, 0.01, 30)
    ytd = running_sharpes(x)
    tr = running_sharpes(x, 10)
    assert ytd[20] == pytest.approx(_plain_sharpe(x[:21]), rel=1e-12)
    assert tr[20] == pytest.approx(_plain_sharpe(x[11:21]), rel=1e-12)
    assert tr[3] == ytd[3]


def test_benchmark_constant_returns():
    bm = benchmark_best_fixed_weight(np.full(20, 0.01), np.zeros(20))
    assert bm.full_year_sharpes[0] == 0.0
    assert np.all(bm.full_year_sharpes[1:] == 100.0)
    assert bm.w_star == 1


def test_benchmark_identical_assets():
    r = np.random.default_rng(1).normal(0.001, 0.01, 50)
    assert benchmark_best_fixed_weight(r, r.copy()).w_star == 0


def _brute_force_w_star(ra, rb):
    """Separate implementation: plain floats, statistics module, strict comparison."""
    import statistics

    best_w, best_sr = None, -math.inf
    for w in range(11):
        port = [w / 10 * a + (1 - w / 10) * b for a, b in zip(ra, rb)]
        sr = statistics.fmean(port) / statistics.pstdev(port)
        if sr > best_sr + 1e-12:
            best_w, best_sr = w, sr
    return best_w


@pytest.mark.parametrize("seed", range(10))
def test_benchmark_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ra, rb = rng.normal(0.0004, 0.012, 252), rng.normal(0.0001, 0.003, 252)
    bm = benchmark_best_fixed_weight(ra, rb)
    assert bm.w_star == _brute_force_w_star(ra.tolist(), rb.tolist())
    best = fixed_weight_returns(ra, rb, bm.w_star)
    assert bm.sr_by_day[-1] == pytest.approx(_plain_sharpe(best), rel=1e-12)


def test_reward_zero_for_benchmark_portfolio():
    rng = np.random.default_rng(2)
    ra, rb = rng.normal(0.0004, 0.012, 252), rng.normal(0.0001, 0.003, 252)
    bm = benchmark_best_fixed_weight(ra, rb)
    port = fixed_weight_returns(ra, rb, bm.w_star)
    assert max(abs(basic_reward(t, port, bm)) for t in range(252)) < 1e-12


def test_reward_formula_arithmetic():
    # YTD windows with Sharpe 0.5 and trailing windows with Sharpe 0.2
    port = np.concatenate([_window(0.005, 0.01, 20)])
    bm = BenchmarkSpec(5, np.full(20, 0.3), np.full(20, 0.1), np.zeros(11))
    # Both windows of an alternating series share its Sharpe, so use the
    # additive structure directly: (0.5 - 0.3) + (0.2 - 0.1) = 0.3.
    sr = sharpe(port)
    r = basic_reward(19, port, bm)
    assert r == pytest.approx((sr - 0.3) + (sr - 0.1), abs=1e-12)
    bm2 = BenchmarkSpec(5, np.full(20, sr - 0.2), np.full(20, sr - 0.1), np.zeros(11))
    # 0.5 - 0.3 = 0.2 and 0.2 - 0.1 = 0.1 expressed as offsets from sr
    assert basic_reward(19, port, bm2) == pytest.approx(0.3, abs=1e-12)


def test_reward_twenty_day_recomputation():
    """Step-by-step recomputation with plain Python lists."""
    rng = np.random.default_rng(3)
    ra, rb = rng.normal(0.001, 0.02, 20), rng.normal(0.0, 0.005, 20)
    bm = benchmark_best_fixed_weight(ra, rb)
    bench = [bm.w_star / 10 * a + (1 - bm.w_star / 10) * b for a, b in zip(ra, rb)]
    port = [0.7 * a + 0.3 * b for a, b in zip(ra, rb)]
    for t in range(1, 20):
        lo = max(0, t - 9)
        expect = (_plain_sharpe(port[: t + 1]) - _plain_sharpe(bench[: t + 1])) + (
            _plain_sharpe(port[lo : t + 1]) - _plain_sharpe(bench[lo : t + 1])
        )
        assert basic_reward(t, np.array(port), bm) == pytest.approx(expect, rel=1e-9, abs=1e-12)


def test_reward_day_out_of_range():
    bm = benchmark_best_fixed_weight(np.zeros(3) + 0.01, np.zeros(3))
    with pytest.raises(IndexError):
        basic_reward(3, np.zeros(3), bm)


def test_status_examples():
    c1 = RewardConfig(target_levels=(0.05,), target_bonuses=(1,))
    assert update_episode_status(EpisodeStatus(), PortfolioState(wealth=1.06, peak_wealth=1.06), c1).target_level == 1
    c3 = RewardConfig(target_levels=(0.05, 0.10), target_bonuses=(1, 2))
    assert update_episode_status(EpisodeStatus(), PortfolioState(wealth=1.12, peak_wealth=1.12), c3).target_level == 2
    cd = RewardConfig(dd_levels=(0.05,), dd_penalties=(-1,))
    st_ = update_episode_status(EpisodeStatus(), PortfolioState(wealth=1.10, peak_wealth=1.10), cd)
    st_ = update_episode_status(st_, PortfolioState(wealth=1.04, peak_wealth=1.10), cd)
    assert st_.drawdown == pytest.approx(1 - 1.04 / 1.10)
    assert st_.dd_level == 1


def test_target_level_falls_dd_level_sticks():
    c = RewardConfig(target_levels=(0.05,), target_bonuses=(1,), dd_levels=(0.05,), dd_penalties=(-1,))
    st_ = update_episode_status(EpisodeStatus(), PortfolioState(wealth=1.06, peak_wealth=1.06), c)
    assert st_.target_level == 1
    st_ = update_episode_status(st_, PortfolioState(wealth=0.99, peak_wealth=1.06), c)
    assert (st_.target_level, st_.dd_level) == (0, 1)
    st_ = update_episode_status(st_, PortfolioState(wealth=1.07, peak_wealth=1.07), c)
    assert (st_.target_level, st_.dd_level) == (1, 1)


def test_drawdown_modes():
    assert measure_drawdown(1.04, 1.10, "peak") == pytest.approx(1 - 1.04 / 1.10)
    assert measure_drawdown(1.04, 1.10, "start") == 0.0
    assert measure_drawdown(0.93, 1.10, "start") == pytest.approx(0.07)


def test_shaped_reward_examples():
    c2 = RewardConfig(target_levels=(0.05,), target_bonuses=(1,))
    assert shaped_reward(0.2, EpisodeStatus(target_level=1), c2) == pytest.approx(1.2)
    c3 = RewardConfig(target_levels=(0.05, 0.10), target_bonuses=(1, 2))
    assert shaped_reward(0.2, EpisodeStatus(target_level=2), c3) == pytest.approx(2.2)
    c5 = RewardConfig(dd_levels=(0.05, 0.10), dd_penalties=(-1, -2))
    assert shaped_reward(0.2, EpisodeStatus(dd_level=2), c5) == pytest.approx(-1.8)
    assert shaped_reward(0.2, EpisodeStatus(), RewardConfig()) == 0.2


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(target_levels=(0.05,), target_bonuses=()),
        dict(target_levels=(0.10, 0.05), target_bonuses=(1, 2)),
        dict(dd_levels=(1.5,), dd_penalties=(-1,)),
        dict(dd_mode="trough"),
    ],
)
def test_reward_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RewardConfig(**kwargs)


def test_level_counts():
    assert level_counts([0.0, 0.05, 0.07, 0.12], [0.05, 0.10]).tolist() == [0, 1, 1, 2]
