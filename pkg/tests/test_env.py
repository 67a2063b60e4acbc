import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlalloc.env import (
    ALL_ACTIONS,
    BASE_MODEL,
    NONSTATIONARY_MODEL,
    Action,
    PortfolioState,
    PositionBucket,
    RebalanceFreq,
    StateSpaceConfig,
    all_state_keys,
    allowed_actions,
    apply_action,
    encode_state,
    feasible_mask,
    reset,
    state_index,
    state_key,
    step,
)
from rlalloc.errors import ConfigError, WealthWipeoutError
from rlalloc.market import FiscalYearSlice

CASE_007 = StateSpaceConfig(use_signal=True, use_position=True, use_quarter=True, target_levels=3, dd_levels=3)


def test_reset():
    fy = FiscalYearSlice(2001, 0, 252)
    s = reset(fy)
    assert s.w_risky == 0.5
    assert s.wealth == 1.0 and s.peak_wealth == 1.0
    assert reset(fy) == s


@pytest.mark.parametrize(
    "w, a, expected",
    [(10, Action.INC_RISKY, 10), (5, Action.INC_RISKY, 6), (0, Action.DEC_RISKY, 0), (5, Action.HOLD, 5), (3, Action.DEC_RISKY, 2)],
)
def test_apply_action(w, a, expected):
    assert apply_action(w, a) == expected


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(list(Action)), max_size=50))
def test_weight_stays_on_grid(actions):
    w = 5
    for a in actions:
        w = apply_action(w, a)
        assert 0 <= w <= 10


def test_step_examples():
    s, ret = step(PortfolioState(), Action.HOLD, 0.02, 0.0)
    assert ret == pytest.approx(0.01, abs=1e-15)
    s2, ret2 = step(PortfolioState(), Action.INC_RISKY, 0.02, 0.0)
    assert ret2 == pytest.approx(0.012, abs=1e-15)
    assert s2.w_tenths == 6
    assert s.wealth == pytest.approx(1.01) and s.peak_wealth == pytest.approx(1.01)
    assert s.day_index == 1


def test_peak_tracks_running_max():
    s = PortfolioState()
    s, _ = step(s, Action.HOLD, 0.2, 0.0)
    s, _ = step(s, Action.HOLD, -0.2, 0.0)
    assert s.peak_wealth == pytest.approx(1.1)
    assert s.wealth == pytest.approx(1.1 * 0.9)


def test_wipeout():
    with pytest.raises(WealthWipeoutError):
        step(PortfolioState(w_tenths=10), Action.HOLD, -1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(Action)), st.floats(-0.05, 0.05), st.floats(-0.01, 0.01)), min_size=1, max_size=40))
def test_wealth_is_product_of_day_returns(path):
    s = PortfolioState()
    rets = []
    for a, ra, rb in path:
        s, r = step(s, a, ra, rb)
        rets.append(r)
    assert s.wealth == pytest.approx(np.prod(1 + np.array(rets)), rel=1e-12)
    assert s.peak_wealth >= s.wealth


def test_position_bucket():
    assert PortfolioState(w_tenths=6).position is PositionBucket.RISKY_HEAVY
    assert PortfolioState(w_tenths=5).position is PositionBucket.EQUAL
    assert PortfolioState(w_tenths=4).position is PositionBucket.SAFE_HEAVY


def test_allowed_actions_examples():
    assert all(allowed_actions(d, RebalanceFreq.DAILY) == ALL_ACTIONS for d in range(30))
    assert allowed_actions(3, RebalanceFreq.WEEKLY) == {Action.HOLD}
    assert allowed_actions(42, RebalanceFreq.MONTHLY) == ALL_ACTIONS
    assert allowed_actions(10, RebalanceFreq.BIWEEKLY) == ALL_ACTIONS
    assert feasible_mask(3, RebalanceFreq.WEEKLY).tolist() == [False, True, False]


def test_parse_freq():
    assert RebalanceFreq.parse(" weekly ") is RebalanceFreq.WEEKLY
    with pytest.raises(ValueError):
        RebalanceFreq.parse("hourly")


def test_base_model_keys():
    keys = {encode_state({"momentum_risky": a, "momentum_safe": b}, None, BASE_MODEL) for a in (0, 1) for b in (0, 1)}
    assert len(keys) == 4
    assert encode_state({"momentum_risky": 0, "momentum_safe": 1}, None, BASE_MODEL) in keys


def test_nonstationary_keys():
    keys = {
        encode_state({"momentum_risky": a, "momentum_safe": b, "correlation": c}, None, NONSTATIONARY_MODEL)
        for a, b, c in itertools.product((0, 1), (0, 1), (0, 1, 2))
    }
    assert len(keys) == 12 == NONSTATIONARY_MODEL.n_states


def test_case_007_keys():
    keys = set()
    for sig, w, q, tl, dl in itertools.product((0, 1), (7, 5, 2), range(4), range(3), range(3)):
        obs = {"signal": sig, "quarter": q, "target_level": tl, "dd_level": dl}
        keys.add(encode_state(obs, PortfolioState(w_tenths=w), CASE_007))
    assert len(keys) == 216 == CASE_007.n_states


def test_encode_missing_feature():
    with pytest.raises(ConfigError):
        encode_state({"momentum_risky": 0}, None, BASE_MODEL)
    with pytest.raises(ConfigError):
        encode_state({"signal": 0, "quarter": 0, "target_level": 0, "dd_level": 0}, None, CASE_007)


def test_encode_out_of_range():
    with pytest.raises(ValueError):
        encode_state({"momentum_risky": 2, "momentum_safe": 0}, None, BASE_MODEL)


def test_state_index_is_row_major_bijection():
    idx = [state_index(k, CASE_007) for k in all_state_keys(CASE_007)]
    assert idx == list(range(216))
    assert all(state_key(i, CASE_007) == k for i, k in zip(idx, all_state_keys(CASE_007)))
    st_ = CASE_007.strides
    assert st_ == {"dd_level": 1, "target_level": 3, "quarter": 9, "position": 36, "signal": 108}


def test_state_space_validation():
    with pytest.raises(ConfigError):
        StateSpaceConfig()
    with pytest.raises(ConfigError):
        StateSpaceConfig(use_signal=True, target_levels=4)


def test_state_space_dict_round_trip():
    assert StateSpaceConfig.from_dict(CASE_007.to_dict()) == CASE_007
