"""Performance and behaviour statistics, and the CSV/JSON emitters.

Behaviour rates follow one convention throughout: IncRisky counts as choosing
the risky asset and DecRisky as choosing the safe one; Hold counts for
whichever asset is currently overweight, and Hold at an exact 50/50 split is
left out of the calculation. Cells with no observations are reported as
absent (``None`` in Python, ``NA`` in CSV), never as zero.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from rlalloc import _kernels as K
from rlalloc.reward import RewardConfig, level_counts

ABSENT = "NA"
SIGNAL_NAMES = {0: "risky", 1: "safe"}


def annualized_sharpe(daily_returns) -> float:
    """Annual return over annual stdev with ``N`` = number of days supplied.

    Zero-volatility years use the daily policy (0 or +/-100) unscaled.
    """
    x = np.ascontiguousarray(daily_returns, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("annualized Sharpe needs at least two days")
    sr = float(K.sharpe_range(x, 0, len(x)))
    if abs(sr) == K.SHARPE_CAP:
        return sr
    return sr * math.sqrt(len(x))


# ------------------------------------------------------------------ behaviour


@dataclass
class BehaviorLog:
    """Per-decision records of greedy rollouts, pooled across years.

    ``wealth`` / ``peak`` are the values before the day's return, i.e. what
    the agent saw when it chose ``action``.
    """

    fy: np.ndarray
    quarter: np.ndarray
    signal: np.ndarray
    true_signal: np.ndarray
    phase: np.ndarray
    w_tenths: np.ndarray
    action: np.ndarray
    wealth: np.ndarray
    peak: np.ndarray

    def __len__(self) -> int:
        return len(self.action)

    @classmethod
    def concat(cls, logs: Sequence["BehaviorLog"]) -> "BehaviorLog":
        return cls(**{f.name: np.concatenate([getattr(l, f.name) for l in logs]) for f in fields(cls)})

    @classmethod
    def from_actions(cls, actions, w_tenths=None, signal=None, quarter=None, phase=None) -> "BehaviorLog":
        """Convenience constructor for hand-built logs."""
        a = np.asarray(actions, dtype=np.int64)
        n = len(a)

        def col(v, default):
            return np.full(n, default, dtype=np.int64) if v is None else np.asarray(v, dtype=np.int64)

        return cls(
            fy=np.zeros(n, dtype=np.int64),
            quarter=col(quarter, 0),
            signal=col(signal, 0),
            true_signal=col(signal, 0),
            phase=col(phase, 0),
            w_tenths=col(w_tenths, 5),
            action=a,
            wealth=np.ones(n),
            peak=np.ones(n),
        )

    def select(self, mask: np.ndarray) -> "BehaviorLog":
        return BehaviorLog(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    @property
    def cum_return(self) -> np.ndarray:
        return self.wealth - 1.0

    def max_drawdown_so_far(self, mode: str = "peak") -> np.ndarray:
        """Running maximum of the drawdown within each fiscal year."""
        dd = 1.0 - self.wealth / self.peak if mode == "peak" else np.maximum(0.0, 1.0 - self.wealth)
        out = np.empty_like(dd)
        for label in np.unique(self.fy):
            m = self.fy == label
            out[m] = np.maximum.accumulate(dd[m])
        return out

    def prefers_risky(self) -> np.ndarray:
        return (self.action == K.INC_RISKY) | ((self.action == K.HOLD) & (self.w_tenths > K.GRID // 2))

    def prefers_safe(self) -> np.ndarray:
        return (self.action == K.DEC_RISKY) | ((self.action == K.HOLD) & (self.w_tenths < K.GRID // 2))

    def counted(self) -> np.ndarray:
        """Rows that enter rate calculations (everything but Hold at 50/50)."""
        return ~((self.action == K.HOLD) & (self.w_tenths == K.GRID // 2))


def _pct(levels: Sequence[float], i: int) -> str:
    return f"{100 * levels[i - 1]:g}%"


def status_labels(log: BehaviorLog, cfg: RewardConfig) -> np.ndarray:
    """Status cell of each decision under ``cfg``'s thresholds.

    Drawdown cells take precedence over target cells when both apply.
    """
    labels = np.full(len(log), "otherwise", dtype=object)
    if cfg.target_levels:
        tl = level_counts(log.cum_return, cfg.target_levels)
        for i in range(1, len(cfg.target_levels) + 1):
            labels[tl == i] = f"target({_pct(cfg.target_levels, i)})"
    if cfg.dd_levels:
        dl = level_counts(log.max_drawdown_so_far(cfg.dd_mode), cfg.dd_levels)
        for i in range(1, len(cfg.dd_levels) + 1):
            labels[dl == i] = f"dd({_pct(cfg.dd_levels, i)})"
    return labels


def status_order(cfg: RewardConfig) -> list[str]:
    out = [f"target({_pct(cfg.target_levels, i)})" for i in range(len(cfg.target_levels), 0, -1)]
    out.append("otherwise")
    out += [f"dd({_pct(cfg.dd_levels, i)})" for i in range(1, len(cfg.dd_levels) + 1)]
    return out


def preference_rate(log: BehaviorLog, mask: np.ndarray | None = None) -> float | None:
    """Share of counted decisions in the cell that favour the risky asset."""
    m = log.counted() if mask is None else (mask & log.counted())
    n = int(m.sum())
    if n == 0:
        return None
    return float((log.prefers_risky() & m).sum()) / n


def signal_behavior_diff(log: BehaviorLog, quarter: int | None = None) -> float | None:
    """Risky-preference rate under a risky signal minus that under a safe signal, in pp."""
    base = np.ones(len(log), dtype=bool) if quarter is None else log.quarter == quarter
    r_risky = preference_rate(log, base & (log.signal == 0))
    r_safe = preference_rate(log, base & (log.signal == 1))
    if r_risky is None or r_safe is None:
        return None
    return 100.0 * (r_risky - r_safe)


@dataclass(frozen=True)
class DeltaCell:
    quarter: int
    signal: int
    status: str
    delta_pp: float | None
    count: int


def case_delta_table(case_log: BehaviorLog, base_log: BehaviorLog, cfg: RewardConfig) -> list[DeltaCell]:
    """Risky-preference change (case minus base, pp) per (quarter, signal, status).

    Both logs are classified with the case's thresholds.
    """
    case_status = status_labels(case_log, cfg)
    base_status = status_labels(base_log, cfg)
    out = []
    for q in range(4):
        for sig in (0, 1):
            for status in status_order(cfg):
                mc = (case_log.quarter == q) & (case_log.signal == sig) & (case_status == status)
                mb = (base_log.quarter == q) & (base_log.signal == sig) & (base_status == status)
                rc, rb = preference_rate(case_log, mc), preference_rate(base_log, mb)
                delta = None if rc is None or rb is None else 100.0 * (rc - rb)
                out.append(DeltaCell(q, sig, status, delta, int((mc & case_log.counted()).sum())))
    return out


def format_delta_table(cells: Sequence[DeltaCell], title: str = "") -> str:
    """Quarters as rows; signal x status as column groups."""
    statuses = list(dict.fromkeys(c.status for c in cells))
    lookup = {(c.quarter, c.signal, c.status): c.delta_pp for c in cells}
    head = ["  "]
    for sig in (0, 1):
        head += [f"{SIGNAL_NAMES[sig]}:{s}" for s in statuses]
    lines = [title] if title else []
    lines.append("\t".join(head))
    for q in range(4):
        row = [f"Q{q + 1}"]
        for sig in (0, 1):
            for s in statuses:
                v = lookup.get((q, sig, s))
                row.append(ABSENT if v is None else f"{v:.0f}%")
        lines.append("\t".join(row))
    return "\n".join(lines)


def mean_delta(cells: Iterable[DeltaCell], quarters: Iterable[int], signal: int | None, status_prefix: str) -> float | None:
    """Mean of the present deltas over the selected cells."""
    qs = set(quarters)
    vals = [
        c.delta_pp
        for c in cells
        if c.quarter in qs
        and (signal is None or c.signal == signal)
        and c.status.startswith(status_prefix)
        and c.delta_pp is not None
    ]
    return float(np.mean(vals)) if vals else None


def following_rate(log: BehaviorLog, mask: np.ndarray | None = None) -> float | None:
    """Share of counted decisions that favour the asset the observed signal points to."""
    m = log.counted() if mask is None else (mask & log.counted())
    n = int(m.sum())
    if n == 0:
        return None
    follows = ((log.signal == 0) & log.prefers_risky()) | ((log.signal == 1) & log.prefers_safe())
    return float((follows & m).sum()) / n


def phase_following_difference(log: BehaviorLog) -> float | None:
    """Phase-B minus phase-A signal-following rate, in pp."""
    ra = following_rate(log, log.phase == 0)
    rb = following_rate(log, log.phase == 1)
    if ra is None or rb is None:
        return None
    return 100.0 * (rb - ra)


# ------------------------------------------------------------------ histograms


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def sharpe_histogram(samples, bins: int = 20) -> Histogram:
    """Equal-width bins spanning the sample range."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("histogram needs at least one sample")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return Histogram(edges, counts)


def summary_stats(values) -> dict[str, float]:
    """min / quartiles / max / mean of a sample (box-plot data)."""
    x = np.asarray(values, dtype=np.float64)
    q = np.percentile(x, [0, 25, 50, 75, 100])
    return {
        "min": float(q[0]),
        "p25": float(q[1]),
        "median": float(q[2]),
        "p75": float(q[3]),
        "max": float(q[4]),
        "mean": float(x.mean()),
        "n": float(len(x)),
    }


# --------------------------------------------------------------------- writers


def _fmt(v) -> str:
    if v is None:
        return ABSENT
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_results_csv(path, rows: Iterable[tuple[int, str, float]]) -> Path:
    return _write_rows(Path(path), ["fy", "model", "sharpe"], rows)


def write_delta_csv(path, case: str, cells: Iterable[DeltaCell]) -> Path:
    return _write_rows(
        Path(path),
        ["case", "quarter", "signal", "status", "delta_pp", "count"],
        ((case, f"Q{c.quarter + 1}", SIGNAL_NAMES[c.signal], c.status, c.delta_pp, c.count) for c in cells),
    )


def write_histogram_csv(path, hist: Histogram) -> Path:
    return _write_rows(
        Path(path),
        ["bin_left", "bin_right", "count"],
        ((float(a), float(b), int(c)) for a, b, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)),
    )


def write_sweep_csv(path, stats: Mapping[object, Mapping[str, float | None]]) -> Path:
    rows = []
    for level, st in stats.items():
        for name, value in st.items():
            rows.append((level, name, value))
    return _write_rows(Path(path), ["level", "stat", "value"], rows)


def write_manifest(path, manifest: Mapping) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_csv_rows(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
