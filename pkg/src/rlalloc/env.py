"""Two-asset portfolio environment: the three-action weight grid, rebalancing
schedules, daily portfolio returns and state-key assembly."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, fields, replace
from enum import IntEnum
from typing import Mapping

import numpy as np

from rlalloc import _kernels as K
from rlalloc.errors import ConfigError, WealthWipeoutError
from rlalloc.market import FiscalYearSlice


class Action(IntEnum):
    INC_RISKY = K.INC_RISKY
    HOLD = K.HOLD
    DEC_RISKY = K.DEC_RISKY


ALL_ACTIONS = frozenset(Action)


class PositionBucket(IntEnum):
    RISKY_HEAVY = 0
    EQUAL = 1
    SAFE_HEAVY = 2


class RebalanceFreq(IntEnum):
    """Rebalancing schedule; the value is the period in trading days."""

    DAILY = 1
    WEEKLY = 5
    BIWEEKLY = 10
    MONTHLY = 21

    @classmethod
    def parse(cls, text: str) -> "RebalanceFreq":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown rebalance frequency {text!r}") from None


@dataclass(frozen=True)
class PortfolioState:
    """``w_tenths`` is the risky weight in integer tenths (0..10)."""

    w_tenths: int = 5
    day_index: int = 0
    wealth: float = 1.0
    peak_wealth: float = 1.0

    @property
    def w_risky(self) -> float:
        return self.w_tenths / K.GRID

    @property
    def position(self) -> PositionBucket:
        return PositionBucket(K.position_bucket(self.w_tenths))


def reset(fy: FiscalYearSlice | None = None) -> PortfolioState:
    """Fresh 50/50 state at the start of a fiscal year."""
    if fy is not None and len(fy) == 0:
        raise ValueError("empty fiscal year")
    return PortfolioState()


def apply_action(w_tenths: int, a: Action) -> int:
    if not 0 <= w_tenths <= K.GRID:
        raise ValueError(f"weight {w_tenths} tenths is off the grid")
    return int(K.apply_action(int(w_tenths), int(a)))


def step(s: PortfolioState, a: Action, r_risky: float, r_safe: float) -> tuple[PortfolioState, float]:
    """Trade at the open, then earn the day's returns on the new weights."""
    w = apply_action(s.w_tenths, a)
    ret = float(K.mix_return(w, r_risky, r_safe))
    if not 1.0 + ret > 0.0:
        raise WealthWipeoutError(f"day {s.day_index}: portfolio return {ret!r}")
    wealth = s.wealth * (1.0 + ret)
    return PortfolioState(w, s.day_index + 1, wealth, max(s.peak_wealth, wealth)), ret


def allowed_actions(day_index: int, freq: RebalanceFreq = RebalanceFreq.DAILY) -> frozenset[Action]:
    if K.is_rebalance_day(day_index, int(freq)):
        return ALL_ACTIONS
    return frozenset({Action.HOLD})


def feasible_mask(day_index: int, freq: RebalanceFreq) -> np.ndarray:
    allowed = allowed_actions(day_index, freq)
    return np.array([a in allowed for a in Action], dtype=np.bool_)


# ------------------------------------------------------------------ state space

# Declaration order of state components; also the StateKey tuple order.
COMPONENTS = (
    "momentum_risky",
    "momentum_safe",
    "correlation",
    "signal",
    "position",
    "quarter",
    "target_level",
    "dd_level",
    "phase",
)
ENDOGENOUS = ("position", "target_level", "dd_level")


@dataclass(frozen=True)
class StateSpaceConfig:
    """Which observation variables enter the state, in fixed declaration order.

    ``target_levels`` / ``dd_levels`` are cardinalities: 0 (absent), 2 (one
    threshold) or 3 (two thresholds).
    """

    use_momentum_pair: bool = False
    use_correlation: bool = False
    use_signal: bool = False
    use_position: bool = False
    use_quarter: bool = False
    target_levels: int = 0
    dd_levels: int = 0
    use_phase: bool = False

    def __post_init__(self):
        for name in ("target_levels", "dd_levels"):
            if getattr(self, name) not in (0, 2, 3):
                raise ConfigError("cardinality must be 0, 2 or 3", name)
        if not self.components:
            raise ConfigError("at least one state component must be enabled", "state_space")

    @property
    def components(self) -> tuple[tuple[str, int], ...]:
        card = {
            "momentum_risky": 2 if self.use_momentum_pair else 0,
            "momentum_safe": 2 if self.use_momentum_pair else 0,
            "correlation": 3 if self.use_correlation else 0,
            "signal": 2 if self.use_signal else 0,
            "position": 3 if self.use_position else 0,
            "quarter": 4 if self.use_quarter else 0,
            "target_level": self.target_levels,
            "dd_level": self.dd_levels,
            "phase": 2 if self.use_phase else 0,
        }
        return tuple((name, card[name]) for name in COMPONENTS if card[name])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.components)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.dims))

    @property
    def strides(self) -> dict[str, int]:
        """Row-major stride of each enabled component in the flat state index."""
        out, acc = {}, 1
        for name, card in reversed(self.components):
            out[name] = acc
            acc *= card
        return out

    def to_dict(self) -> dict:
        return {
            "use_momentum_pair": self.use_momentum_pair,
            "use_correlation": self.use_correlation,
            "use_signal": self.use_signal,
            "use_position": self.use_position,
            "use_quarter": self.use_quarter,
            "target_levels": self.target_levels,
            "dd_levels": self.dd_levels,
            "use_phase": self.use_phase,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StateSpaceConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def with_(self, **changes) -> "StateSpaceConfig":
        return replace(self, **changes)


BASE_MODEL = StateSpaceConfig(use_momentum_pair=True)
NONSTATIONARY_MODEL = StateSpaceConfig(use_momentum_pair=True, use_correlation=True)


def encode_state(obs: Mapping[str, int], s: PortfolioState | None, cfg: StateSpaceConfig) -> tuple[int, ...]:
    """Pack the enabled components into a ``StateKey`` tuple.

    ``obs`` maps component names to small integers; ``position`` is taken from
    ``s`` when not supplied.
    """
    key = []
    for name, card in cfg.components:
        if name == "position" and name not in obs:
            if s is None:
                raise ConfigError("position requires a portfolio state", name)
            value = int(s.position)
        elif name not in obs:
            raise ConfigError("feature missing from observation", name)
        else:
            value = int(obs[name])
        if not 0 <= value < card:
            raise ValueError(f"{name}={value} outside [0, {card})")
        key.append(value)
    return tuple(key)


def state_index(key: tuple[int, ...], cfg: StateSpaceConfig) -> int:
    return int(np.ravel_multi_index(key, cfg.dims))


def state_key(index: int, cfg: StateSpaceConfig) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(index, cfg.dims))


def all_state_keys(cfg: StateSpaceConfig):
    return itertools.product(*(range(c) for c in cfg.dims))
