"""Price ingestion, daily returns, fiscal-year partitioning and a synthetic
regime-blocked market generator."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rlalloc.errors import (
    EmptyPartitionError,
    InsufficientDataError,
    MissingDataWarning,
    OrderingError,
    ParseError,
)

logger = logging.getLogger(__name__)

# Calendar slack when deciding whether a fiscal year is fully covered: the
# first trading day after April 1 can fall a few days later (weekends, Easter).
FY_EDGE_SLACK_DAYS = 7


def _as_dates(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]")


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray
    prices: np.ndarray
    name: str = ""

    def __post_init__(self):
        dates = _as_dates(self.dates)
        prices = np.asarray(self.prices, dtype=np.float64)
        if dates.shape != prices.shape or dates.ndim != 1:
            raise ValueError("dates and prices must be 1-d arrays of equal length")
        if len(dates) < 2:
            raise InsufficientDataError("a price series needs at least 2 observations")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise OrderingError("dates must be strictly increasing")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise ValueError("prices must be finite and positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True)
class ReturnSeries:
    """Simple daily returns; ``returns[i]`` is earned on ``dates[i]``."""

    dates: np.ndarray
    returns: np.ndarray
    name: str = ""

    def __post_init__(self):
        dates = _as_dates(self.dates)
        returns = np.asarray(self.returns, dtype=np.float64)
        if dates.shape != returns.shape or dates.ndim != 1:
            raise ValueError("dates and returns must be 1-d arrays of equal length")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", returns)

    def __len__(self) -> int:
        return len(self.returns)


@dataclass(frozen=True)
class FiscalYearSlice:
    """Half-open index range ``[start, stop)`` of one April-March year."""

    label: int
    start: int
    stop: int
    complete: bool = True

    @property
    def index_range(self) -> range:
        return range(self.start, self.stop)

    def __len__(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Regime:
    duration: int
    drift_risky: float
    vol_risky: float
    drift_safe: float
    vol_safe: float
    correlation: float = 0.0

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("regime duration must be >= 1")
        if self.vol_risky < 0 or self.vol_safe < 0:
            raise ValueError("volatilities must be non-negative")
        if abs(self.correlation) > 1:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.drift_risky <= -1 or self.drift_safe <= -1:
            raise ValueError("daily drift must exceed -100%")


@dataclass(frozen=True)
class SyntheticMarketConfig:
    """Regimes are laid end to end on a synthetic trading calendar.

    Each fiscal year of the calendar carries exactly ``days_per_year`` trading
    days. The first ``warmup_days`` returns fall before April 1 of
    ``start_year`` so trailing features are available from the first day of
    the first complete year.
    """

    regimes: tuple[Regime, ...]
    seed: int = 0
    days_per_year: int = 252
    start_year: int = 2000
    warmup_days: int = 0
    initial_price: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if not self.regimes:
            raise ValueError("at least one regime is required")
        if self.days_per_year < 1:
            raise ValueError("days_per_year must be >= 1")
        if not 0 <= self.warmup_days < self.days_per_year:
            raise ValueError("warmup_days must lie in [0, days_per_year)")
        if self.initial_price <= 0:
            raise ValueError("initial_price must be positive")

    @property
    def n_days(self) -> int:
        return sum(r.duration for r in self.regimes)


# --------------------------------------------------------------------- loading


def _parse_date(text: str, line: int) -> np.datetime64:
    try:
        return np.datetime64(dt.date.fromisoformat(text.strip()), "D")
    except ValueError:
        raise ParseError(f"unparseable date {text!r}", line) from None


def _parse_price(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    if not math.isfinite(value) or value <= 0:
        return None
    return value


def _read_columns(path: Path, n_values: int) -> tuple[list, list[list[float | None]], list[int]]:
    """Read ``date,v1[,v2]`` rows; returns dates, per-column values, line numbers."""
    dates, lines = [], []
    columns: list[list[float | None]] = [[] for _ in range(n_values)]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InsufficientDataError(f"{path}: empty file")
        if len(header) != n_values + 1 or header[0].strip().lower() != "date":
            raise ParseError(f"unexpected header {header!r}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n_values + 1:
                raise ParseError(f"expected {n_values + 1} fields, got {len(row)}", line)
            dates.append(_parse_date(row[0], line))
            lines.append(line)
            for col, text in zip(columns, row[1:]):
                col.append(_parse_price(text))
    for i in range(1, len(dates)):
        if dates[i] <= dates[i - 1]:
            raise OrderingError(f"{path}: line {lines[i]}: dates are not strictly increasing")
    return dates, columns, lines


def _drop_missing(dates, columns, lines, source) -> tuple[np.ndarray, list[np.ndarray]]:
    keep = []
    for i, line in enumerate(lines):
        if any(col[i] is None for col in columns):
            warnings.warn(
                f"{source}: line {line}: missing or invalid price on {dates[i]}; row dropped",
                MissingDataWarning,
                stacklevel=3,
            )
            continue
        keep.append(i)
    return (
        np.array([dates[i] for i in keep], dtype="datetime64[D]"),
        [np.array([col[i] for i in keep], dtype=np.float64) for col in columns],
    )


def load_price_csv(path: str | Path) -> tuple[PriceSeries, PriceSeries]:
    """Load a ``date,risky,safe`` file into two aligned price series.

    Rows where either price is missing or unparseable are dropped with a
    ``MissingDataWarning``; structurally malformed rows raise ``ParseError``.
    """
    path = Path(path)
    dates, columns, lines = _read_columns(path, 2)
    d, (risky, safe) = _drop_missing(dates, columns, lines, path)
    if len(d) < 2:
        raise InsufficientDataError(f"{path}: fewer than 2 usable rows")
    return PriceSeries(d, risky, "risky"), PriceSeries(d, safe, "safe")


def load_asset_csv(path: str | Path, name: str = "") -> PriceSeries:
    """Load a single-asset ``date,<price>`` file."""
    path = Path(path)
    dates, columns, lines = _read_columns(path, 1)
    d, (values,) = _drop_missing(dates, columns, lines, path)
    if len(d) < 2:
        raise InsufficientDataError(f"{path}: fewer than 2 usable rows")
    return PriceSeries(d, values, name)


def align(risky: PriceSeries, safe: PriceSeries) -> tuple[PriceSeries, PriceSeries]:
    """Restrict two series to their common dates."""
    common, ia, ib = np.intersect1d(risky.dates, safe.dates, return_indices=True)
    n_dropped = len(risky) + len(safe) - 2 * len(common)
    if n_dropped:
        logger.info("alignment dropped %d unmatched rows", n_dropped)
    if len(common) < 2:
        raise InsufficientDataError("fewer than 2 dates shared by both assets")
    return (
        PriceSeries(common, risky.prices[ia], risky.name or "risky"),
        PriceSeries(common, safe.prices[ib], safe.name or "safe"),
    )


def write_price_csv(path: str | Path, risky: PriceSeries, safe: PriceSeries) -> None:
    if not np.array_equal(risky.dates, safe.dates):
        raise ValueError("series must be aligned")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "risky", "safe"])
        for d, a, b in zip(risky.dates, risky.prices, safe.prices):
            w.writerow([str(d), repr(float(a)), repr(float(b))])


# --------------------------------------------------------------------- returns


def compute_returns(p: PriceSeries) -> ReturnSeries:
    r = p.prices[1:] / p.prices[:-1] - 1.0
    return ReturnSeries(p.dates[1:], r, p.name)


def prices_from_returns(r: ReturnSeries, p0: float) -> np.ndarray:
    """Inverse of ``compute_returns`` given the first price."""
    return p0 * np.concatenate([[1.0], np.cumprod(1.0 + r.returns)])


def _fy_label(d: np.datetime64) -> int:
    date = d.astype(dt.date)
    return date.year if date.month >= 4 else date.year - 1


def partition_fiscal_years(r: ReturnSeries) -> list[FiscalYearSlice]:
    """Split a return series into April-March years.

    Every date lands in exactly one slice. Leading/trailing years that the data
    does not cover end to end are kept but flagged ``complete=False``.
    """
    if len(r) == 0:
        return []
    labels = np.array([_fy_label(d) for d in r.dates])
    slices = []
    start = 0
    slack = np.timedelta64(FY_EDGE_SLACK_DAYS, "D")
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            label = int(labels[start])
            fy_open = np.datetime64(f"{label}-04-01", "D")
            fy_close = np.datetime64(f"{label + 1}-03-31", "D")
            covers_open = start > 0 or r.dates[start] <= fy_open + slack
            covers_close = i < len(labels) or r.dates[i - 1] >= fy_close - slack
            slices.append(FiscalYearSlice(label, start, i, covers_open and covers_close))
            start = i
    return slices


def complete_fiscal_years(r: ReturnSeries) -> list[FiscalYearSlice]:
    """Complete fiscal years only; raises if there are none."""
    years = [s for s in partition_fiscal_years(r) if s.complete]
    if not years:
        raise EmptyPartitionError("series contains no complete April-March fiscal year")
    return years


# ------------------------------------------------------------------- synthetic


def trading_calendar(start_year: int, n_years: int, days_per_year: int = 252) -> np.ndarray:
    """Weekday calendar thinned so each fiscal year has ``days_per_year`` days."""
    out = []
    for label in range(start_year, start_year + n_years):
        days = np.arange(
            np.datetime64(f"{label}-04-01", "D"), np.datetime64(f"{label + 1}-04-01", "D")
        )
        days = days[np.is_busday(days)]
        if days_per_year > len(days):
            raise ValueError(f"fiscal {label} has only {len(days)} weekdays")
        keep = np.round(np.linspace(0, len(days) - 1, days_per_year)).astype(int)
        out.append(days[keep])
    return np.concatenate(out)


def _log_correlation(rho: float, s1: float, s2: float) -> float:
    # Gaussian correlation that gives simple returns the requested correlation.
    if s1 == 0 or s2 == 0 or rho == 0:
        return rho
    target = rho * math.sqrt(math.expm1(s1 * s1) * math.expm1(s2 * s2))
    return float(np.clip(math.log1p(target) / (s1 * s2), -1.0, 1.0))


def _log_scale(drift: float, vol: float) -> float:
    # Lognormal log-sd whose simple return has standard deviation ``vol``.
    return math.sqrt(math.log1p((vol / (1.0 + drift)) ** 2))


def generate_synthetic_returns(cfg: SyntheticMarketConfig) -> tuple[np.ndarray, np.ndarray]:
    """Simple daily returns ``(risky, safe)`` for the concatenated regimes."""
    rng = np.random.default_rng(cfg.seed)
    blocks_a, blocks_b = [], []
    for reg in cfg.regimes:
        z = rng.standard_normal((reg.duration, 2))
        s1 = _log_scale(reg.drift_risky, reg.vol_risky)
        s2 = _log_scale(reg.drift_safe, reg.vol_safe)
        rho = _log_correlation(reg.correlation, s1, s2)
        x1 = z[:, 0]
        x2 = rho * z[:, 0] + math.sqrt(max(0.0, 1.0 - rho * rho)) * z[:, 1]
        blocks_a.append(np.expm1(math.log1p(reg.drift_risky) - 0.5 * s1 * s1 + s1 * x1))
        blocks_b.append(np.expm1(math.log1p(reg.drift_safe) - 0.5 * s2 * s2 + s2 * x2))
    return np.concatenate(blocks_a), np.concatenate(blocks_b)


def generate_synthetic_market(cfg: SyntheticMarketConfig) -> tuple[PriceSeries, PriceSeries]:
    """Lognormal regime-blocked prices for a (risky, safe) pair; deterministic in ``cfg.seed``."""
    ra, rb = generate_synthetic_returns(cfg)
    n = len(ra)
    dpy = cfg.days_per_year
    lead = cfg.warmup_days + 1  # price observations before the first April
    n_years = 1 + math.ceil(max(0, n + 1 - lead) / dpy)
    cal = trading_calendar(cfg.start_year - 1, n_years, dpy)
    dates = cal[dpy - lead : dpy - lead + n + 1]
    pa = cfg.initial_price * np.concatenate([[1.0], np.cumprod(1.0 + ra)])
    pb = cfg.initial_price * np.concatenate([[1.0], np.cumprod(1.0 + rb)])
    return PriceSeries(dates, pa, "risky"), PriceSeries(dates, pb, "safe")


def regimes_from_dicts(items: Sequence[dict]) -> tuple[Regime, ...]:
    return tuple(Regime(**item) for item in items)


@dataclass(frozen=True)
class MarketData:
    """An aligned (risky, safe) pair plus its derived returns."""

    risky: PriceSeries
    safe: PriceSeries
    r_risky: ReturnSeries = field(init=False)
    r_safe: ReturnSeries = field(init=False)

    def __post_init__(self):
        if not np.array_equal(self.risky.dates, self.safe.dates):
            raise ValueError("risky and safe series must share dates; call align() first")
        object.__setattr__(self, "r_risky", compute_returns(self.risky))
        object.__setattr__(self, "r_safe", compute_returns(self.safe))

    @property
    def dates(self) -> np.ndarray:
        return self.r_risky.dates

    def fiscal_years(self) -> list[FiscalYearSlice]:
        return complete_fiscal_years(self.r_risky)
