import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlalloc import _kernels as K
from rlalloc.report import (
    ABSENT,
    BehaviorLog,
    DeltaCell,
    annualized_sharpe,
    case_delta_table,
    following_rate,
    format_delta_table,
    mean_delta,
    phase_following_difference,
    preference_rate,
    read_csv_rows,
    sharpe_histogram,
    signal_behavior_diff,
    status_labels,
    summary_stats,
    write_delta_csv,
    write_histogram_csv,
    write_manifest,
    write_results_csv,
    write_sweep_csv,
)
from rlalloc.reward import RewardConfig

INC, HOLD, DEC = K.INC_RISKY, K.HOLD, K.DEC_RISKY


def test_annualized_examples():
    assert annualized_sharpe(np.zeros(252)) == 0.0
    assert annualized_sharpe(np.full(252, 0.001)) == 100.0
    x = 0.0004 + 0.01 * np.tile([1.0, -1.0], 126)
    assert annualized_sharpe(x) == pytest.approx(0.0004 * 252 / (0.01 * np.sqrt(252)), rel=1e-9)
    assert annualized_sharpe(x) == pytest.approx(0.635, abs=5e-4)


def test_annualized_uses_actual_days():
    x = 0.0004 + 0.01 * np.tile([1.0, -1.0], 120)
    assert annualized_sharpe(x) == pytest.approx(0.04 * np.sqrt(240), rel=1e-9)


def test_annualized_needs_two_days():
    with pytest.raises(ValueError):
        annualized_sharpe([0.01])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.05, 0.05).map(lambda v: round(v, 6)), min_size=2, max_size=40), st.floats(0.1, 10))
def test_annualized_scale_invariant(x, c):
    assert annualized_sharpe(np.array(x) * c) == pytest.approx(annualized_sharpe(x), rel=1e-7, abs=1e-9)


def test_preference_examples():
    assert preference_rate(BehaviorLog.from_actions([INC] * 5)) == 1.0
    assert preference_rate(BehaviorLog.from_actions([HOLD] * 5, w_tenths=[5] * 5)) is None
    assert preference_rate(BehaviorLog.from_actions([INC, INC, INC, DEC])) == 0.75


def test_hold_counts_for_overweight_asset():
    log = BehaviorLog.from_actions([HOLD, HOLD, HOLD], w_tenths=[7, 3, 5])
    assert preference_rate(log) == 0.5


def _signal_log(rng, n, follow):
    sig = rng.integers(0, 2, n)
    if follow == "always":
        act = np.where(sig == 0, INC, DEC)
    elif follow == "risky":
        act = np.full(n, INC)
    else:
        act = rng.choice([INC, DEC], n)
    return BehaviorLog.from_actions(act, signal=sig, quarter=rng.integers(0, 4, n))


def test_signal_behavior_examples():
    rng = np.random.default_rng(0)
    assert signal_behavior_diff(_signal_log(rng, 400, "always")) == 100.0
    assert signal_behavior_diff(_signal_log(rng, 400, "risky")) == 0.0
    assert abs(signal_behavior_diff(_signal_log(rng, 20_000, "random"))) < 2.0
    assert signal_behavior_diff(_signal_log(rng, 400, "always"), quarter=2) == 100.0


def test_signal_behavior_absent_cell():
    log = BehaviorLog.from_actions([INC, DEC], signal=[0, 0])
    assert signal_behavior_diff(log) is None


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([INC, HOLD, DEC]), st.integers(0, 10), st.integers(0, 1)), min_size=1, max_size=60))
def test_rates_bounded(rows):
    a, w, s = map(list, zip(*rows))
    log = BehaviorLog.from_actions(a, w_tenths=w, signal=s)
    r = preference_rate(log)
    assert r is None or 0.0 <= r <= 1.0
    d = signal_behavior_diff(log)
    assert d is None or -100.0 <= d <= 100.0


def _wealth_log(wealth, peak, actions, fy=None):
    n = len(wealth)
    log = BehaviorLog.from_actions(actions)
    log.wealth = np.asarray(wealth, dtype=float)
    log.peak = np.asarray(peak, dtype=float)
    if fy is not None:
        log.fy = np.asarray(fy)
    return log


def test_status_labels_precedence():
    cfg = RewardConfig((0.05, 0.10), (1, 2), (0.05,), (-1,))
    log = _wealth_log([1.0, 1.06, 1.12, 1.06, 1.2], [1.0, 1.06, 1.12, 1.12, 1.3], [INC] * 5)
    # the fourth row has a 5.4% drawdown; the drawdown label then sticks
    assert status_labels(log, cfg).tolist() == ["otherwise", "target(5%)", "target(10%)", "dd(5%)", "dd(5%)"]


def test_status_labels_reset_per_year():
    cfg = RewardConfig(dd_levels=(0.05,), dd_penalties=(-1,))
    log = _wealth_log([1.0, 0.9, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], [INC] * 4, fy=[1, 1, 2, 2])
    assert status_labels(log, cfg).tolist() == ["otherwise", "dd(5%)", "otherwise", "otherwise"]


def test_delta_table_self_difference():
    rng = np.random.default_rng(1)
    log = _signal_log(rng, 500, "random")
    cfg = RewardConfig((0.05,), (1,))
    cells = case_delta_table(log, log, cfg)
    assert len(cells) == 4 * 2 * 2
    assert all(c.delta_pp in (None, 0.0) for c in cells)
    assert any(c.delta_pp == 0.0 for c in cells)


def test_delta_table_direction():
    rng = np.random.default_rng(2)
    base = _signal_log(rng, 400, "risky")
    case = _signal_log(rng, 400, "always")
    cells = case_delta_table(case, base, RewardConfig())
    assert mean_delta(cells, range(4), 1, "otherwise") == -100.0
    assert mean_delta(cells, range(4), 0, "otherwise") == 0.0
    assert mean_delta(cells, range(4), 0, "target") is None
    text = format_delta_table(cells, "case")
    assert text.splitlines()[0] == "case"
    assert "-100%" in text


def test_following_rate_and_phase_difference():
    sig = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    act = np.array([INC, DEC, INC, DEC, INC, INC, INC, INC])
    phase = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    log = BehaviorLog.from_actions(act, signal=sig, phase=phase)
    assert following_rate(log) == 0.75
    assert phase_following_difference(log) == pytest.approx(-50.0)


def test_histogram_examples():
    h = sharpe_histogram(np.full(1000, 0.7))
    assert np.count_nonzero(h.counts) == 1 and h.counts.sum() == 1000
    assert np.all(np.diff(h.edges) > 0)
    rng = np.random.default_rng(3)
    mix = np.concatenate([rng.normal(-2, 0.3, 2000), rng.normal(2, 0.3, 2000)])
    h = sharpe_histogram(mix, bins=20)
    c = h.counts
    peaks = [i for i in range(1, 19) if c[i] > c[i - 1] and c[i] >= c[i + 1] and c[i] > 100]
    assert len(peaks) == 2
    with pytest.raises(ValueError):
        sharpe_histogram([])


def test_summary_stats():
    s = summary_stats([1.0, 2.0, 3.0, 4.0, 5.0])
    assert s["median"] == 3.0 and s["min"] == 1.0 and s["max"] == 5.0 and s["n"] == 5.0


def test_writers(tmp_path):
    write_results_csv(tmp_path / "r.csv", [(2001, "base", 0.5), (2001, "random_median", None)])
    rows = read_csv_rows(tmp_path / "r.csv")
    assert rows[0] == {"fy": "2001", "model": "base", "sharpe": "0.5"}
    assert rows[1]["sharpe"] == ABSENT
    write_delta_csv(tmp_path / "d.csv", "#002", [DeltaCell(0, 1, "otherwise", None, 0)])
    assert read_csv_rows(tmp_path / "d.csv")[0] == {
        "case": "#002", "quarter": "Q1", "signal": "safe", "status": "otherwise", "delta_pp": ABSENT, "count": "0"
    }
    write_histogram_csv(tmp_path / "h.csv", sharpe_histogram([0.0, 1.0], bins=2))
    assert [r["count"] for r in read_csv_rows(tmp_path / "h.csv")] == ["1", "1"]
    write_sweep_csv(tmp_path / "s.csv", {1.0: {"median": 0.3}})
    assert read_csv_rows(tmp_path / "s.csv") == [{"level": "1.0", "stat": "median", "value": "0.3"}]
    write_manifest(tmp_path / "m" / "m.json", {"b": 1, "a": [1, 2]})
    assert json.loads((tmp_path / "m" / "m.json").read_text()) == {"a": [1, 2], "b": 1}
