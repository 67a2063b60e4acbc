"""Discrete observation variables: momentum sign, correlation bin, oracle
signal and its corruption, quarter of the fiscal year, and the dummy phase."""

from __future__ import annotations

import math
from enum import IntEnum

import numpy as np

from rlalloc import _kernels as K
from rlalloc.errors import InsufficientHistoryError, LookaheadExhaustedError
from rlalloc.market import FiscalYearSlice, PriceSeries, ReturnSeries

DEFAULT_LOOKBACK = 60
DEFAULT_CORR_WINDOW = 60
DEFAULT_CORR_THRESHOLD = 0.2
DEFAULT_SIGNAL_HORIZON = 5


class MomentumSign(IntEnum):
    POSITIVE = 0
    NEGATIVE = 1


class CorrBin(IntEnum):
    POSITIVE = 0
    NONE = 1
    NEGATIVE = 2


class Signal(IntEnum):
    RISKY_BETTER = 0
    SAFE_BETTER = 1

    def opposite(self) -> "Signal":
        return Signal(1 - self)


class PhaseId(IntEnum):
    A = 0
    B = 1


def _prices(p) -> np.ndarray:
    return p.prices if isinstance(p, PriceSeries) else np.asarray(p, dtype=np.float64)


def _returns(r) -> np.ndarray:
    return r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=np.float64)


def momentum_sign(p, t: int, lookback: int = DEFAULT_LOOKBACK) -> MomentumSign:
    """Sign of ``p[t] - p[t - lookback]``; a zero difference counts as positive."""
    prices = _prices(p)
    if t < lookback:
        raise InsufficientHistoryError(f"momentum at index {t} needs {lookback} prior prices")
    return MomentumSign.POSITIVE if prices[t] - prices[t - lookback] >= 0 else MomentumSign.NEGATIVE


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Sample correlation, or ``None`` when either side has no variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    n = len(x)
    tol_x = K.DEGENERATE_REL * float(np.max(np.abs(x)))
    tol_y = K.DEGENERATE_REL * float(np.max(np.abs(y)))
    if math.sqrt(sxx / n) <= tol_x or math.sqrt(syy / n) <= tol_y:
        return None
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


def bin_correlation(rho: float | None, threshold: float = DEFAULT_CORR_THRESHOLD) -> CorrBin:
    if rho is None:
        return CorrBin.NONE
    if rho > threshold:
        return CorrBin.POSITIVE
    if rho < -threshold:
        return CorrBin.NEGATIVE
    return CorrBin.NONE


def correlation_bin(
    ra,
    rb,
    t: int,
    window: int = DEFAULT_CORR_WINDOW,
    threshold: float = DEFAULT_CORR_THRESHOLD,
) -> CorrBin:
    """Bin the correlation of the ``window`` returns strictly before day ``t``."""
    a, b = _returns(ra), _returns(rb)
    if len(a) != len(b):
        raise ValueError("return series are not aligned")
    if t < window:
        raise InsufficientHistoryError(f"correlation at index {t} needs {window} prior returns")
    return bin_correlation(pearson(a[t - window : t], b[t - window : t]), threshold)


def oracle_signal(ra, rb, t: int, horizon: int = DEFAULT_SIGNAL_HORIZON) -> Signal:
    """Which asset has the higher Sharpe over the ``horizon`` returns starting at day ``t``.

    Day ``t``'s return is the first one a position taken at that decision
    earns. Ties go to the safe asset.
    """
    a, b = _returns(ra), _returns(rb)
    if horizon < 1 or t < 0 or t + horizon > len(a):
        raise LookaheadExhaustedError(f"no {horizon}-day window after index {t}")
    sa = K.sharpe_range(a, t, t + horizon)
    sb = K.sharpe_range(b, t, t + horizon)
    return Signal.RISKY_BETTER if sa > sb else Signal.SAFE_BETTER


def corrupt_signal(s: Signal, flip_rate: float, rng: np.random.Generator) -> Signal:
    if not 0.0 <= flip_rate <= 1.0:
        raise ValueError("flip_rate must lie in [0, 1]")
    return Signal(s).opposite() if rng.random() < flip_rate else Signal(s)


def quarter_sizes(n_days: int) -> list[int]:
    """Four contiguous blocks; remainder days go to the earliest quarters."""
    base, rem = divmod(n_days, 4)
    return [base + 1 if q < rem else base for q in range(4)]


def quarter_of_day(day: int, n_days: int) -> int:
    if not 0 <= day < n_days:
        raise IndexError(f"day {day} outside a {n_days}-day year")
    edge = 0
    for q, size in enumerate(quarter_sizes(n_days)):
        edge += size
        if day < edge:
            return q
    raise AssertionError("unreachable")


def quarter_index(t: int, fy: FiscalYearSlice) -> int:
    """Quarter (0-3) of series index ``t`` within fiscal year ``fy``."""
    if t not in fy.index_range:
        raise IndexError(f"index {t} is outside fiscal year {fy.label}")
    return quarter_of_day(t - fy.start, len(fy))


def phase_id(p_safe, t: int, lookback: int = DEFAULT_LOOKBACK) -> PhaseId:
    """Phase A while the non-risky asset's momentum is non-negative."""
    return PhaseId.A if momentum_sign(p_safe, t, lookback) is MomentumSign.POSITIVE else PhaseId.B


# ----------------------------------------------------------- whole-series builders
#
# Day ``j`` of a return series is decided with prices through index ``j`` of
# the underlying price series (``prices[j]`` closes the day before return ``j``
# is earned). Near the start of the data the trailing windows are shortened to
# the history that exists.


def momentum_signs(prices: np.ndarray, lookback: int = DEFAULT_LOOKBACK) -> np.ndarray:
    """Momentum sign for every return day ``j = 0 .. len(prices) - 2``."""
    prices = _prices(prices)
    n = len(prices) - 1
    out = np.empty(n, dtype=np.int64)
    for j in range(n):
        out[j] = momentum_sign(prices, j, min(lookback, j))
    return out


def correlation_bins(
    ra,
    rb,
    window: int = DEFAULT_CORR_WINDOW,
    threshold: float = DEFAULT_CORR_THRESHOLD,
) -> np.ndarray:
    a, b = _returns(ra), _returns(rb)
    out = np.empty(len(a), dtype=np.int64)
    for j in range(len(a)):
        w = min(window, j)
        out[j] = CorrBin.NONE if w < 2 else correlation_bin(a, b, j, w, threshold)
    return out


def oracle_signals(ra, rb, horizon: int = DEFAULT_SIGNAL_HORIZON) -> np.ndarray:
    """Oracle signal per day with the window truncated at the end of the input."""
    a, b = _returns(ra), _returns(rb)
    n = len(a)
    return np.array(
        [oracle_signal(a, b, j, min(horizon, n - j)) for j in range(n)], dtype=np.int64
    )


def corrupt_signals(signals: np.ndarray, flip_rates, uniforms: np.ndarray) -> np.ndarray:
    """Vectorised ``corrupt_signal``: flip day ``j`` when ``uniforms[j] < flip_rates[j]``.

    Sharing the uniforms across accuracy levels nests the flipped sets.
    """
    flips = np.asarray(uniforms) < np.asarray(flip_rates)
    return np.where(flips, 1 - signals, signals).astype(np.int64)


def quarter_indices(n_days: int) -> np.ndarray:
    return np.repeat(np.arange(4, dtype=np.int64), quarter_sizes(n_days))
