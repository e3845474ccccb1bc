"""Calendar arithmetic and time-series handling at 15-minute resolution.

A month is a grid of ``days_in_month * 96`` periods. Working periods are
weekday periods between 9:00 and 17:00 local time, i.e. periods-of-day 36
through 67 inclusive. Timestamps are naive local time; there is no DST
handling.
"""

from __future__ import annotations

import calendar as _stdcal
import csv
import datetime as dt
from dataclasses import dataclass

import numpy as np

PERIODS_PER_DAY = 96
PERIOD_MINUTES = 15
WORK_START = 36   # 9:00
WORK_END = 68     # 17:00, exclusive
WEEKDAYS = 5      # Monday .. Friday


class SeriesFormatError(ValueError):
    """Malformed or misaligned series input."""


@dataclass(frozen=True)
class Calendar:
    """One scheduling month: day count, weekday of day 0, optional anchor date."""

    days_in_month: int
    first_weekday: int              # 0 = Monday .. 6 = Sunday
    start_date: dt.date | None = None

    def __post_init__(self):
        if self.days_in_month < 1:
            raise ValueError("days_in_month must be >= 1")
        if not 0 <= self.first_weekday <= 6:
            raise ValueError("first_weekday must be in 0..6")
        if self.start_date is not None and self.start_date.weekday() != self.first_weekday:
            raise ValueError("start_date weekday disagrees with first_weekday")

    @classmethod
    def for_month(cls, year: int, month: int) -> "Calendar":
        first_weekday, days = _stdcal.monthrange(year, month)
        return cls(days, first_weekday, dt.date(year, month, 1))

    @classmethod
    def from_start(cls, start: dt.date, days: int) -> "Calendar":
        return cls(days, start.weekday(), start)

    @property
    def horizon(self) -> int:
        return self.days_in_month * PERIODS_PER_DAY

    def day_of_week(self, day: int) -> int:
        return (self.first_weekday + day) % 7

    def present_weekdays(self) -> tuple[int, ...]:
        """Weekdays (0=Mon..4=Fri) that occur at least once in the month.

        A weekly activity placed on any other weekday would never run.
        """
        present = {self.day_of_week(d) for d in range(self.days_in_month)}
        return tuple(w for w in range(WEEKDAYS) if w in present)

    def period_of_timestamp(self, ts: dt.datetime) -> int:
        if self.start_date is None:
            raise ValueError("calendar has no anchor date")
        if ts.second or ts.microsecond or ts.minute % PERIOD_MINUTES:
            raise SeriesFormatError(f"timestamp {ts.isoformat()} not on a 15-minute boundary")
        day = (ts.date() - self.start_date).days
        period = day * PERIODS_PER_DAY + ts.hour * 4 + ts.minute // PERIOD_MINUTES
        if not 0 <= period < self.horizon:
            raise SeriesFormatError(f"timestamp {ts.isoformat()} outside the month")
        return period

    def timestamp_of_period(self, period: int) -> dt.datetime:
        if self.start_date is None:
            raise ValueError("calendar has no anchor date")
        if not 0 <= period < self.horizon:
            raise ValueError(f"period {period} outside horizon {self.horizon}")
        base = dt.datetime.combine(self.start_date, dt.time())
        return base + dt.timedelta(minutes=PERIOD_MINUTES * period)


def working_period_mask(cal: Calendar) -> np.ndarray:
    """Boolean mask over the horizon; True on weekday periods in 9:00-17:00."""
    mask = np.zeros(cal.horizon, dtype=bool)
    for day in range(cal.days_in_month):
        if cal.day_of_week(day) < WEEKDAYS:
            start = day * PERIODS_PER_DAY
            mask[start + WORK_START:start + WORK_END] = True
    return mask


def working_periods(cal: Calendar) -> np.ndarray:
    """Ordered period indexes of every working period in the month."""
    return np.flatnonzero(working_period_mask(cal))


@dataclass(frozen=True)
class RawSeries:
    """Sparse kW measurements: strictly increasing period indexes, NaN = missing."""

    periods: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        periods = np.asarray(self.periods, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if periods.shape != values.shape or periods.ndim != 1:
            raise ValueError("periods and values must be 1-D and equally long")
        if periods.size and (np.diff(periods) <= 0).any():
            raise SeriesFormatError("period indexes must be strictly increasing")
        if periods.size and periods[0] < 0:
            raise SeriesFormatError("negative period index")
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, pairs) -> "RawSeries":
        periods = [p for p, _ in pairs]
        values = [np.nan if v is None else float(v) for _, v in pairs]
        return cls(np.asarray(periods, dtype=np.int64), np.asarray(values, dtype=float))

    def present_values(self) -> np.ndarray:
        return self.values[~np.isnan(self.values)]

    def to_dense(self, horizon: int, fill: float = np.nan) -> np.ndarray:
        """Dense array over the horizon; absent periods and empty values
        both become ``fill``."""
        if self.periods.size and self.periods[-1] >= horizon:
            raise SeriesFormatError(
                f"period {int(self.periods[-1])} outside horizon {horizon}")
        dense = np.full(horizon, fill, dtype=float)
        dense[self.periods] = self.values
        if not np.isnan(fill):
            dense[np.isnan(dense)] = fill
        return dense


@dataclass(frozen=True)
class NetLoadSeries:
    """Dense per-period net load in kW over a month horizon."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("net load must be 1-D")
        if not np.isfinite(values).all():
            raise ValueError("net load must be finite everywhere")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PriceSeries:
    """Dense per-period electricity price in $/MWh over a month horizon."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("prices must be 1-D")
        if not np.isfinite(values).all():
            raise ValueError("prices must be finite everywhere")
        object.__setattr__(self, "values", values)


def net_load(buildings: list[RawSeries], solars: list[RawSeries], cal: Calendar) -> NetLoadSeries:
    """Sum of building loads minus sum of solar generation; missing counts as 0."""
    total = np.zeros(cal.horizon, dtype=float)
    for series in buildings:
        dense = series.to_dense(cal.horizon)
        total += np.nan_to_num(dense, nan=0.0)
    for series in solars:
        dense = series.to_dense(cal.horizon)
        total -= np.nan_to_num(dense, nan=0.0)
    return NetLoadSeries(total)


def expand_prices(halfhourly, cal: Calendar) -> PriceSeries:
    """Repeat each 30-minute price across its two 15-minute periods."""
    values = np.asarray(halfhourly, dtype=float)
    if values.ndim != 1 or values.size * 2 != cal.horizon:
        raise SeriesFormatError(
            f"need {cal.horizon // 2} half-hourly prices, got {values.size}")
    return PriceSeries(np.repeat(values, 2))


def descriptive_stats(series) -> dict:
    """Mean/std/IQR/min/max of the present values. Sample std, linear-interp quantiles."""
    if isinstance(series, RawSeries):
        values = series.present_values()
    else:
        values = np.asarray(series, dtype=float)
        values = values[~np.isnan(values)]
    if values.size == 0:
        raise ValueError("series has no present values")
    q75, q25 = np.percentile(values, [75, 25])
    return {
        "mean": float(np.mean(values)),
        "std": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        "iqr": float(q75 - q25),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
    }


def _read_rows(path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SeriesFormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise SeriesFormatError(
                f"{path}: header must be {','.join(expected_header)!r}")
        return [row for row in reader if row and any(cell.strip() for cell in row)]


def _parse_ts(token: str, path, line: int) -> dt.datetime:
    try:
        return dt.datetime.fromisoformat(token.strip())
    except ValueError:
        raise SeriesFormatError(f"{path}:{line}: bad timestamp {token!r}") from None


def load_series_csv(path, cal: Calendar) -> RawSeries:
    """Read a ``timestamp,value`` CSV aligned to the calendar. Empty value = missing."""
    rows = _read_rows(path, ["timestamp", "value"])
    periods, values = [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise SeriesFormatError(f"{path}:{i}: expected 2 columns")
        period = cal.period_of_timestamp(_parse_ts(row[0], path, i))
        if periods and period <= periods[-1]:
            raise SeriesFormatError(f"{path}:{i}: duplicate or out-of-order timestamp")
        token = row[1].strip()
        if token == "":
            value = np.nan
        else:
            try:
                value = float(token)
            except ValueError:
                raise SeriesFormatError(f"{path}:{i}: non-numeric value {token!r}") from None
        periods.append(period)
        values.append(value)
    return RawSeries(np.asarray(periods, dtype=np.int64), np.asarray(values, dtype=float))


def load_price_csv(path, cal: Calendar) -> PriceSeries:
    """Read a ``timestamp,price`` CSV at 30-minute resolution covering the month."""
    rows = _read_rows(path, ["timestamp", "price"])
    expected = cal.horizon // 2
    if len(rows) != expected:
        raise SeriesFormatError(f"{path}: need {expected} half-hour rows, got {len(rows)}")
    prices = np.empty(expected, dtype=float)
    for i, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise SeriesFormatError(f"{path}:{i}: expected 2 columns")
        ts = _parse_ts(row[0], path, i)
        if ts.minute % 30 or ts.second or ts.microsecond:
            raise SeriesFormatError(f"{path}:{i}: timestamp not on a 30-minute boundary")
        period = cal.period_of_timestamp(ts)
        slot = i - 2
        if period != slot * 2:
            raise SeriesFormatError(f"{path}:{i}: prices must cover the month contiguously")
        try:
            prices[slot] = float(row[1])
        except ValueError:
            raise SeriesFormatError(f"{path}:{i}: non-numeric price {row[1]!r}") from None
    return expand_prices(prices, cal)
