"""Experiment configuration: a flat key-value document (TOML) per experiment.

Field reference (all keys optional except ``id`` and ``runner``):

=========================== ===========================================================
key                         meaning
=========================== ===========================================================
id                          label such as ``"#002"``; tags every output file
runner                      ``chapter4`` | ``constraint_case`` | ``accuracy_sweep`` |
                            ``rebalance_sweep`` | ``phase_accuracy``
algo                        ``sarsa`` | ``qlearning``
mode                        ``in_sample`` | ``out_of_sample``
use_momentum_pair, use_correlation, use_signal, use_position, use_quarter, use_phase
                            booleans enabling state components
state_target_levels         0, 2 or 3 (cardinality of the target-status component)
state_dd_levels             0, 2 or 3 (cardinality of the drawdown-status component)
target_levels               cumulative-return thresholds, e.g. ``[0.05, 0.10]``
target_bonuses              per-step bonuses matching ``target_levels``
dd_levels                   drawdown thresholds, e.g. ``[0.05]``
dd_penalties                per-step penalties matching ``dd_levels`` (negative)
dd_mode                     ``peak`` (running-peak drawdown) | ``start`` (loss from start)
signal_accuracy             probability the observed signal is correct
phase_accuracy              ``[acc_phase_a, acc_phase_b]``; requires ``use_phase``
resample_signal_per_episode re-corrupt signals every episode instead of once per year
rebalance_freq              ``daily`` | ``weekly`` | ``biweekly`` | ``monthly``
alpha, gamma, epsilon, episodes, seed
                            agent parameters; ``seed`` is the master seed
momentum_lookback, corr_window, corr_threshold, signal_horizon
                            feature parameters (defaults 60, 60, 0.2, 5)
accuracy_levels             accuracy_sweep levels (default 1.0 .. 0.5)
rebalance_freqs             rebalance_sweep schedules (default all four)
phase_acc_b_levels          phase_accuracy levels for phase B (default 1.0 .. 0.5)
n_random                    chapter4 random-model draws per year (default 1000)
random_model_space          ``base`` | ``nonstationary`` state space for random tables
histogram_bins              bins for the random-model histogram (default 20)
=========================== ===========================================================

A suite file holds ``suite = "name"`` and ``members = ["a.toml", ...]`` with
paths relative to the suite file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from rlalloc.agent import AgentParams, Algo
from rlalloc.env import RebalanceFreq, StateSpaceConfig
from rlalloc.errors import ConfigError
from rlalloc.reward import RewardConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

RUNNERS = ("chapter4", "constraint_case", "accuracy_sweep", "rebalance_sweep", "phase_accuracy")
MODES = ("in_sample", "out_of_sample")
DEFAULT_LEVELS = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)
PRESET_DIR = Path(__file__).parent / "presets"


@dataclass(frozen=True)
class FeatureParams:
    momentum_lookback: int = 60
    corr_window: int = 60
    corr_threshold: float = 0.2
    signal_horizon: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    runner: str
    algo: Algo = Algo.QLEARNING
    mode: str = "in_sample"
    state_space: StateSpaceConfig = field(
        default_factory=lambda: StateSpaceConfig(use_signal=True, use_position=True, use_quarter=True)
    )
    reward: RewardConfig = field(default_factory=RewardConfig)
    signal_accuracy: float = 0.6
    phase_accuracy: tuple[float, float] | None = None
    resample_signal_per_episode: bool = False
    rebalance_freq: RebalanceFreq = RebalanceFreq.DAILY
    agent: AgentParams = field(default_factory=AgentParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    accuracy_levels: tuple[float, ...] = DEFAULT_LEVELS
    rebalance_freqs: tuple[RebalanceFreq, ...] = tuple(RebalanceFreq)
    phase_acc_b_levels: tuple[float, ...] = DEFAULT_LEVELS
    n_random: int = 1000
    random_model_space: str = "nonstationary"
    histogram_bins: int = 20

    @property
    def tag(self) -> str:
        """Filesystem-friendly form of ``id``."""
        return "".join(c if c.isalnum() or c in "-_#" else "_" for c in self.id)

    def to_dict(self) -> dict[str, Any]:
        """Flat key-value form; ``from_dict(to_dict())`` round-trips."""
        ss = self.state_space
        d: dict[str, Any] = {
            "id": self.id,
            "runner": self.runner,
            "algo": self.algo.value,
            "mode": self.mode,
            "use_momentum_pair": ss.use_momentum_pair,
            "use_correlation": ss.use_correlation,
            "use_signal": ss.use_signal,
            "use_position": ss.use_position,
            "use_quarter": ss.use_quarter,
            "use_phase": ss.use_phase,
            "state_target_levels": ss.target_levels,
            "state_dd_levels": ss.dd_levels,
            "target_levels": list(self.reward.target_levels),
            "target_bonuses": list(self.reward.target_bonuses),
            "dd_levels": list(self.reward.dd_levels),
            "dd_penalties": list(self.reward.dd_penalties),
            "dd_mode": self.reward.dd_mode,
            "signal_accuracy": self.signal_accuracy,
            "resample_signal_per_episode": self.resample_signal_per_episode,
            "rebalance_freq": self.rebalance_freq.name.lower(),
            "alpha": self.agent.alpha,
            "gamma": self.agent.gamma,
            "epsilon": self.agent.epsilon,
            "episodes": self.agent.episodes,
            "seed": self.agent.seed,
            "momentum_lookback": self.features.momentum_lookback,
            "corr_window": self.features.corr_window,
            "corr_threshold": self.features.corr_threshold,
            "signal_horizon": self.features.signal_horizon,
            "accuracy_levels": list(self.accuracy_levels),
            "rebalance_freqs": [f.name.lower() for f in self.rebalance_freqs],
            "phase_acc_b_levels": list(self.phase_acc_b_levels),
            "n_random": self.n_random,
            "random_model_space": self.random_model_space,
            "histogram_bins": self.histogram_bins,
        }
        if self.phase_accuracy is not None:
            d["phase_accuracy"] = list(self.phase_accuracy)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return from_dict(d)


_BOOL_KEYS = (
    "use_momentum_pair",
    "use_correlation",
    "use_signal",
    "use_position",
    "use_quarter",
    "use_phase",
    "resample_signal_per_episode",
)
_FLOAT_LIST_KEYS = (
    "target_levels",
    "target_bonuses",
    "dd_levels",
    "dd_penalties",
    "accuracy_levels",
    "phase_acc_b_levels",
)
_KNOWN = set(ExperimentConfig("x", "chapter4").to_dict()) | {"phase_accuracy"}
REQUIRED = ("id", "runner")


def _get(d: Mapping, key: str, kind, default=None):
    if key not in d:
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError("expected an integer", key)
    if not isinstance(value, kind):
        raise ConfigError(f"expected {kind.__name__}, got {type(value).__name__}", key)
    return value


def _float_list(d: Mapping, key: str, default=()):
    if key not in d:
        return tuple(default)
    value = d[key]
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError("expected a list of numbers", key)
    return tuple(float(v) for v in value)


def _probability(value: float, key: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError("must lie in [0, 1]", key)
    return value


def from_dict(d: Mapping[str, Any]) -> ExperimentConfig:
    """Build and cross-check a config; raises ``ConfigError`` naming the field."""
    for key in REQUIRED:
        if key not in d:
            raise ConfigError("required field is missing", key)
    unknown = sorted(set(d) - _KNOWN)
    if unknown:
        raise ConfigError("unknown field", unknown[0])
    defaults = ExperimentConfig("x", "chapter4")

    runner = _get(d, "runner", str)
    if runner not in RUNNERS:
        raise ConfigError(f"must be one of {', '.join(RUNNERS)}", "runner")
    exp_id = _get(d, "id", str)
    if not exp_id:
        raise ConfigError("must be non-empty", "id")
    mode = _get(d, "mode", str, "out_of_sample" if runner == "chapter4" else "in_sample")
    if mode not in MODES:
        raise ConfigError(f"must be one of {', '.join(MODES)}", "mode")
    try:
        algo = Algo(_get(d, "algo", str, "sarsa" if runner == "chapter4" else "qlearning"))
    except ValueError:
        raise ConfigError("must be 'sarsa' or 'qlearning'", "algo") from None

    bools = {k: _get(d, k, bool, False) for k in _BOOL_KEYS}
    if not any(k in d for k in _BOOL_KEYS[:6]):
        if runner == "chapter4":
            bools["use_momentum_pair"] = True
        else:
            bools.update(use_signal=True, use_position=True, use_quarter=True)

    reward = RewardConfig(
        target_levels=_float_list(d, "target_levels"),
        target_bonuses=_float_list(d, "target_bonuses"),
        dd_levels=_float_list(d, "dd_levels"),
        dd_penalties=_float_list(d, "dd_penalties"),
        dd_mode=_get(d, "dd_mode", str, "peak"),
    )
    st_tgt = _get(d, "state_target_levels", int, len(reward.target_levels) + 1 if reward.target_levels else 0)
    st_dd = _get(d, "state_dd_levels", int, len(reward.dd_levels) + 1 if reward.dd_levels else 0)
    space = StateSpaceConfig(
        use_momentum_pair=bools["use_momentum_pair"],
        use_correlation=bools["use_correlation"],
        use_signal=bools["use_signal"],
        use_position=bools["use_position"],
        use_quarter=bools["use_quarter"],
        target_levels=st_tgt,
        dd_levels=st_dd,
        use_phase=bools["use_phase"],
    )
    if st_tgt and st_tgt != len(reward.target_levels) + 1:
        raise ConfigError(
            f"cardinality {st_tgt} needs {st_tgt - 1} target_levels, got {len(reward.target_levels)}",
            "state_target_levels",
        )
    if st_dd and st_dd != len(reward.dd_levels) + 1:
        raise ConfigError(
            f"cardinality {st_dd} needs {st_dd - 1} dd_levels, got {len(reward.dd_levels)}",
            "state_dd_levels",
        )

    acc = _probability(_get(d, "signal_accuracy", float, defaults.signal_accuracy), "signal_accuracy")
    phase_acc = None
    if "phase_accuracy" in d:
        pair = _float_list(d, "phase_accuracy")
        if len(pair) != 2:
            raise ConfigError("expected [acc_phase_a, acc_phase_b]", "phase_accuracy")
        phase_acc = tuple(_probability(v, "phase_accuracy") for v in pair)
        if not space.use_phase:
            raise ConfigError("per-phase accuracy requires use_phase = true", "phase_accuracy")
    if runner == "phase_accuracy" and not space.use_phase:
        raise ConfigError("the phase_accuracy runner requires use_phase = true", "use_phase")
    if runner == "chapter4" and not space.use_momentum_pair:
        raise ConfigError("chapter4 compares momentum-based models", "use_momentum_pair")
    if runner in ("constraint_case", "accuracy_sweep", "phase_accuracy") and not space.use_signal:
        raise ConfigError(f"runner {runner} needs the signal in the state", "use_signal")

    try:
        freq = RebalanceFreq.parse(_get(d, "rebalance_freq", str, "daily"))
    except ValueError as exc:
        raise ConfigError(str(exc), "rebalance_freq") from None
    freqs = d.get("rebalance_freqs", [f.name.lower() for f in RebalanceFreq])
    if not isinstance(freqs, list) or not freqs:
        raise ConfigError("expected a non-empty list", "rebalance_freqs")
    try:
        freqs = tuple(RebalanceFreq.parse(str(f)) for f in freqs)
    except ValueError as exc:
        raise ConfigError(str(exc), "rebalance_freqs") from None

    try:
        agent = AgentParams(
            alpha=_get(d, "alpha", float, defaults.agent.alpha),
            gamma=_get(d, "gamma", float, defaults.agent.gamma),
            epsilon=_get(d, "epsilon", float, defaults.agent.epsilon),
            episodes=_get(d, "episodes", int, defaults.agent.episodes),
            seed=_get(d, "seed", int, defaults.agent.seed),
        )
    except ValueError as exc:
        field_name = str(exc).split()[0]
        raise ConfigError(str(exc), field_name) from None

    features = FeatureParams(
        momentum_lookback=_get(d, "momentum_lookback", int, 60),
        corr_window=_get(d, "corr_window", int, 60),
        corr_threshold=_get(d, "corr_threshold", float, 0.2),
        signal_horizon=_get(d, "signal_horizon", int, 5),
    )
    for key in ("momentum_lookback", "corr_window", "signal_horizon"):
        if getattr(features, key) < 1:
            raise ConfigError("must be >= 1", key)
    if not 0 <= features.corr_threshold < 1:
        raise ConfigError("must lie in [0, 1)", "corr_threshold")

    acc_levels = _float_list(d, "accuracy_levels", DEFAULT_LEVELS)
    phase_levels = _float_list(d, "phase_acc_b_levels", DEFAULT_LEVELS)
    for key, levels in (("accuracy_levels", acc_levels), ("phase_acc_b_levels", phase_levels)):
        if not levels:
            raise ConfigError("expected a non-empty list", key)
        for v in levels:
            _probability(v, key)
    if runner == "accuracy_sweep" and any(v < 0.5 for v in acc_levels):
        raise ConfigError("accuracy levels must lie in [0.5, 1]", "accuracy_levels")

    n_random = _get(d, "n_random", int, defaults.n_random)
    if n_random < 1:
        raise ConfigError("must be >= 1", "n_random")
    random_space = _get(d, "random_model_space", str, defaults.random_model_space)
    if random_space not in ("base", "nonstationary"):
        raise ConfigError("must be 'base' or 'nonstationary'", "random_model_space")
    bins = _get(d, "histogram_bins", int, defaults.histogram_bins)
    if bins < 1:
        raise ConfigError("must be >= 1", "histogram_bins")

    return ExperimentConfig(
        id=exp_id,
        runner=runner,
        algo=algo,
        mode=mode,
        state_space=space,
        reward=reward,
        signal_accuracy=acc,
        phase_accuracy=phase_acc,
        resample_signal_per_episode=bools["resample_signal_per_episode"],
        rebalance_freq=freq,
        agent=agent,
        features=features,
        accuracy_levels=acc_levels,
        rebalance_freqs=freqs,
        phase_acc_b_levels=phase_levels,
        n_random=n_random,
        random_model_space=random_space,
        histogram_bins=bins,
    )


def read_toml(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    return from_dict(read_toml(path))


def load_suite(path: str | Path) -> list[ExperimentConfig]:
    """A suite file, or a single experiment file treated as a one-member suite."""
    path = Path(path)
    d = read_toml(path)
    if "members" not in d:
        return [from_dict(d)]
    members = d["members"]
    if not isinstance(members, list) or not members:
        raise ConfigError("expected a non-empty list of config paths", "members")
    return [load_config(path.parent / str(m)) for m in members]


def preset(name: str) -> ExperimentConfig:
    """Bundled preset by id, e.g. ``preset("#002")`` or ``preset("002")``."""
    stem = name.lstrip("#")
    path = PRESET_DIR / f"{stem}.toml"
    if not path.exists():
        raise ConfigError(f"no bundled preset {name!r}", "id")
    return load_config(path)
