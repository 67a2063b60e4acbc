"""Tabular agents: Q-table storage and (de)serialisation, SARSA and Q-learning
updates, epsilon-greedy selection, random tables, averaging and the episode
runner."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from rlalloc import _kernels as K
from rlalloc.env import Action, RebalanceFreq, StateSpaceConfig, all_state_keys, state_index
from rlalloc.errors import ParseError, ShapeError, WealthWipeoutError
from rlalloc.reward import DD_MODES, RewardConfig


class Algo(str, Enum):
    SARSA = "sarsa"
    QLEARNING = "qlearning"

    @property
    def code(self) -> int:
        return K.SARSA if self is Algo.SARSA else K.QLEARNING


@dataclass(frozen=True)
class AgentParams:
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon: float = 0.1
    episodes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


class QTable:
    """Dense ``(n_states, 3)`` action-value table for one state space.

    Cells are addressed by ``StateKey`` tuples or flat state indices.
    """

    def __init__(self, space: StateSpaceConfig, values: np.ndarray | None = None):
        self.space = space
        shape = (space.n_states, K.N_ACTIONS)
        if values is None:
            values = np.zeros(shape)
        values = np.array(values, dtype=np.float64)
        if values.shape != shape:
            raise ShapeError(f"values have shape {values.shape}, expected {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Q-table values must be finite")
        self.values = values

    def _row(self, s) -> int:
        return s if isinstance(s, (int, np.integer)) else state_index(tuple(s), self.space)

    def __getitem__(self, sa) -> float:
        s, a = sa
        return float(self.values[self._row(s), int(a)])

    def __setitem__(self, sa, value: float) -> None:
        s, a = sa
        self.values[self._row(s), int(a)] = value

    def row(self, s) -> np.ndarray:
        return self.values[self._row(s)]

    @property
    def n_cells(self) -> int:
        return self.values.size

    def copy(self) -> "QTable":
        return QTable(self.space, self.values.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, QTable)
            and self.space == other.space
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"QTable(states={self.space.n_states}, dims={self.space.dims})"


def sarsa_update(q: QTable, s, a: Action, r: float, s_next, a_next: Action, p: AgentParams) -> float:
    """On-policy TD update of cell ``(s, a)``; pass ``s_next=None`` at the terminal step."""
    boot = 0.0 if s_next is None else q[s_next, a_next]
    old = q[s, a]
    q[s, a] = old + p.alpha * (r + p.gamma * boot - old)
    return q[s, a]


def q_learning_update(q: QTable, s, a: Action, r: float, s_next, p: AgentParams) -> float:
    """Off-policy TD update bootstrapping from ``max_a Q(s_next, a)`` (0 when terminal)."""
    boot = 0.0 if s_next is None else float(np.max(q.row(s_next)))
    old = q[s, a]
    q[s, a] = old + p.alpha * (r + p.gamma * boot - old)
    return q[s, a]


def epsilon_greedy(q: QTable, s, feasible: Iterable[Action], eps: float, rng: np.random.Generator) -> Action:
    """Uniform feasible action with probability ``eps``, else a greedy one with random tie-breaks.

    Always consumes exactly two uniforms from ``rng``.
    """
    mask = np.zeros(K.N_ACTIONS, dtype=np.bool_)
    for a in feasible:
        mask[int(a)] = True
    if not mask.any():
        raise ValueError("no feasible action")
    u = rng.random(2)
    return Action(K.select_action(q.row(s), mask, eps, u[0], u[1]))


def random_q_table(space: StateSpaceConfig, rng: np.random.Generator) -> QTable:
    return QTable(space, rng.random((space.n_states, K.N_ACTIONS)))


def average_q_tables(tables: Sequence[QTable]) -> QTable:
    """Cellwise equal-weight mean."""
    if not tables:
        raise ValueError("cannot average an empty list of Q-tables")
    space = tables[0].space
    for t in tables[1:]:
        if t.space != space:
            raise ShapeError("Q-tables were built for different state spaces")
    return QTable(space, np.mean(np.stack([t.values for t in tables]), axis=0))


# ------------------------------------------------------------------ episodes


@dataclass
class EpisodeInputs:
    """Everything one fiscal year contributes to an episode.

    ``exo_index`` has shape ``(1, T)`` (one observation sequence for every
    episode) or ``(episodes, T)`` (a sequence per episode).
    """

    space: StateSpaceConfig
    exo_index: np.ndarray
    r_risky: np.ndarray
    r_safe: np.ndarray
    bm_sr: np.ndarray
    bm_sr10: np.ndarray
    reward: RewardConfig = field(default_factory=RewardConfig)
    freq: RebalanceFreq = RebalanceFreq.DAILY

    def __post_init__(self):
        self.exo_index = np.ascontiguousarray(np.atleast_2d(self.exo_index), dtype=np.int64)
        for name in ("r_risky", "r_safe", "bm_sr", "bm_sr10"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        T = len(self.r_risky)
        if T == 0 or any(len(getattr(self, n)) != T for n in ("r_safe", "bm_sr", "bm_sr10")):
            raise ValueError("episode arrays must be non-empty and aligned")
        if self.exo_index.shape[1] != T:
            raise ValueError("exo_index does not match the number of days")

    @property
    def n_days(self) -> int:
        return len(self.r_risky)


@dataclass
class EpisodeTrace:
    """The last episode of a run, one entry per day, recorded at decision time."""

    w_tenths: np.ndarray
    actions: np.ndarray
    states: np.ndarray
    port_returns: np.ndarray
    rewards: np.ndarray
    wealth: np.ndarray  # before the day's return
    peak: np.ndarray
    dd_level: np.ndarray


def _strides(space: StateSpaceConfig) -> tuple[int, int, int]:
    st = space.strides
    return st.get("position", 0), st.get("target_level", 0), st.get("dd_level", 0)


def run_episodes(
    inputs: EpisodeInputs,
    q: QTable,
    p: AgentParams,
    algo: Algo,
    learn: bool,
    rng: np.random.Generator,
    episodes: int | None = None,
    epsilon: float | None = None,
    with_reward: bool = True,
) -> EpisodeTrace:
    """Run ``episodes`` (default ``p.episodes``) passes over one year.

    Each day: build the state, choose among the allowed actions, step the
    portfolio, compute the shaped reward and (if ``learn``) update ``q`` in
    place. SARSA picks the next action before updating; the last day
    bootstraps from 0. Returns the trace of the final episode.
    """
    if q.space != inputs.space:
        raise ShapeError("Q-table and episode inputs use different state spaces")
    n_ep = p.episodes if episodes is None else episodes
    eps = p.epsilon if epsilon is None else epsilon
    T = inputs.n_days
    uniforms = rng.random((n_ep, T, 2))
    pos, tgt, dd = _strides(inputs.space)
    rc = inputs.reward
    tr = EpisodeTrace(
        w_tenths=np.empty(T, np.int64),
        actions=np.empty(T, np.int64),
        states=np.empty(T, np.int64),
        port_returns=np.empty(T),
        rewards=np.empty(T),
        wealth=np.empty(T),
        peak=np.empty(T),
        dd_level=np.empty(T, np.int64),
    )
    code = K.run_episodes(
        q.values,
        inputs.exo_index,
        pos,
        tgt,
        dd,
        np.array(rc.target_levels, dtype=np.float64),
        np.array(rc.target_bonuses, dtype=np.float64),
        np.array(rc.dd_levels, dtype=np.float64),
        np.array(rc.dd_penalties, dtype=np.float64),
        DD_MODES[rc.dd_mode],
        inputs.r_risky,
        inputs.r_safe,
        inputs.bm_sr,
        inputs.bm_sr10,
        int(inputs.freq),
        algo.code,
        float(p.alpha),
        float(p.gamma),
        float(eps),
        bool(learn),
        bool(with_reward),
        uniforms,
        tr.w_tenths,
        tr.actions,
        tr.states,
        tr.port_returns,
        tr.rewards,
        tr.wealth,
        tr.peak,
        tr.dd_level,
    )
    if code < 0:
        raise WealthWipeoutError(f"portfolio wiped out on day {-code - 1}")
    return tr


def run_episode(
    inputs: EpisodeInputs,
    q: QTable,
    p: AgentParams,
    algo: Algo,
    learn: bool,
    rng: np.random.Generator,
    epsilon: float | None = None,
) -> EpisodeTrace:
    """A single episode; see ``run_episodes``."""
    return run_episodes(inputs, q, p, algo, learn, rng, episodes=1, epsilon=epsilon)


# -------------------------------------------------------------- serialisation

HEADER_PREFIX = "# "


def save_q_table(q: QTable, path: str | Path) -> None:
    """CSV with one row per cell, preceded by a ``# {json}`` header line.

    Values are written with ``repr`` so they round-trip exactly.
    """
    comps = [name for name, _ in q.space.components]
    header = {"state_space": q.space.to_dict(), "components": comps, "actions": [a.name for a in Action]}
    buf = io.StringIO()
    buf.write(HEADER_PREFIX + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"state_component_{i}" for i in range(len(comps))] + ["action", "value"])
    for key in all_state_keys(q.space):
        s = state_index(key, q.space)
        for a in Action:
            w.writerow([*key, a.name, repr(float(q.values[s, a]))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_q_table(path: str | Path) -> QTable:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise ParseError("missing JSON header line", 1)
    try:
        header = json.loads(lines[0][len(HEADER_PREFIX):])
        space = StateSpaceConfig.from_dict(header["state_space"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad header: {exc}", 1) from None
    k = len(space.dims)
    values = np.full((space.n_states, K.N_ACTIONS), np.nan)
    reader = csv.reader(lines[1:])
    cols = next(reader, None)
    if cols is None or len(cols) != k + 2:
        raise ParseError("bad column header", 2)
    for lineno, row in enumerate(reader, start=3):
        if len(row) != k + 2:
            raise ParseError(f"expected {k + 2} fields", lineno)
        try:
            key = tuple(int(c) for c in row[:k])
            a = Action[row[k]]
            values[state_index(key, space), a] = float(row[k + 1])
        except (ValueError, KeyError) as exc:
            raise ParseError(str(exc), lineno) from None
    if np.isnan(values).any():
        raise ParseError("table is missing cells")
    return QTable(space, values)
