"""Daily exposure series: ingestion, IQR scaling and block-mean trend decomposition.

The decomposition is nested by calendar blocks::

    value = yearly + monthly + weekly + daily

where ``yearly`` is the fiscal-year mean (April 1 to March 31), ``monthly``
the calendar-month mean after removing ``yearly``, ``weekly`` the ISO-week
mean after removing both, and ``daily`` the remainder. Missing days are
excluded from every block mean.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateScaleError,
    DuplicateDateError,
    OutOfPeriodError,
    ParseError,
    UndefinedBlockError,
)

__all__ = [
    "StudyCalendar",
    "DailySeries",
    "TrendDecomposition",
    "load_series",
    "load_columns",
    "iqr_standardize",
    "decompose",
    "fiscal_year",
]


def fiscal_year(day: dt.date) -> int:
    """Starting calendar year of the April-to-March fiscal year containing ``day``."""
    return day.year if day.month >= 4 else day.year - 1


def _dense_ids(keys):
    labels, ids = np.unique(np.asarray(keys), return_inverse=True)
    return ids.astype(np.intp), [str(lab) for lab in labels]


@dataclass(frozen=True)
class StudyCalendar:
    """Inclusive study period with its year, month and week block structure."""

    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start > self.end:
            raise DataError(f"start {self.start} is after end {self.end}")

    @cached_property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    @cached_property
    def dates(self) -> tuple[dt.date, ...]:
        one = dt.timedelta(days=1)
        return tuple(self.start + i * one for i in range(self.n_days))

    def index_of(self, day: dt.date) -> int:
        i = (day - self.start).days
        if i < 0 or i >= self.n_days:
            raise OutOfPeriodError(day, self.start, self.end)
        return i

    def contains(self, day: dt.date) -> bool:
        return self.start <= day <= self.end

    @cached_property
    def _year_blocks(self):
        return _dense_ids([fiscal_year(d) for d in self.dates])

    @cached_property
    def _month_blocks(self):
        return _dense_ids([d.year * 100 + d.month for d in self.dates])

    @cached_property
    def _week_blocks(self):
        keys = []
        for d in self.dates:
            iso = d.isocalendar()
            keys.append(iso[0] * 100 + iso[1])
        return _dense_ids(keys)

    @property
    def year_ids(self) -> np.ndarray:
        return self._year_blocks[0]

    @property
    def month_ids(self) -> np.ndarray:
        return self._month_blocks[0]

    @property
    def week_ids(self) -> np.ndarray:
        return self._week_blocks[0]

    @property
    def year_labels(self) -> list[str]:
        # Stored keys are the fiscal start year, e.g. "2000" -> FY2000/01.
        return [f"FY{lab}" for lab in self._year_blocks[1]]

    @property
    def month_labels(self) -> list[str]:
        return [f"{lab[:4]}-{lab[4:]}" for lab in self._month_blocks[1]]

    @property
    def week_labels(self) -> list[str]:
        return [f"{lab[:4]}-W{lab[4:]}" for lab in self._week_blocks[1]]

    @cached_property
    def ordinals(self) -> np.ndarray:
        return np.arange(self.n_days) + self.start.toordinal()

    @cached_property
    def weekdays(self) -> np.ndarray:
        return (self.ordinals - 1) % 7  # Monday = 0, matching date.weekday()

    @cached_property
    def calendar_months(self) -> np.ndarray:
        return np.array([d.month for d in self.dates], dtype=np.intp)


@dataclass(frozen=True, eq=False)
class DailySeries:
    """One value slot per study day; ``NaN`` marks a missing day."""

    calendar: StudyCalendar
    values: np.ndarray
    name: str = "value"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.calendar.n_days,):
            raise DataError(
                f"series has {vals.size} slots, calendar has {self.calendar.n_days} days"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def scaled(self, factor: float) -> "DailySeries":
        return DailySeries(self.calendar, self.values * factor, self.name)


@dataclass(frozen=True, eq=False)
class TrendDecomposition:
    calendar: StudyCalendar
    yearly: np.ndarray
    monthly: np.ndarray
    weekly: np.ndarray
    daily: np.ndarray
    name: str = "value"

    def __post_init__(self):
        for attr in ("yearly", "monthly", "weekly", "daily"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    @property
    def trend(self) -> np.ndarray:
        """yearly + monthly + weekly, the part the referent design does not fix."""
        return self.yearly + self.monthly + self.weekly

    def reconstruct(self) -> np.ndarray:
        return self.yearly + self.monthly + self.weekly + self.daily


# ----------------------------------------------------------------------------
# ingestion


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source, False
    raise TypeError(f"cannot read tabular data from {type(source).__name__}")


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"line {line}: unparseable date {text!r}") from None


def _read_rows(source) -> tuple[list[str], list[tuple[int, dict]]]:
    fh, close = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty input: no header row")
        fields = [f.strip() for f in reader.fieldnames]
        reader.fieldnames = fields
        if "date" not in fields:
            raise ParseError("input has no 'date' column")
        rows = [(reader.line_num, row) for row in reader]
    finally:
        if close:
            fh.close()
    return fields, rows


def load_columns(
    source,
    columns: Sequence[str] | None = None,
    calendar: StudyCalendar | None = None,
) -> dict[str, DailySeries]:
    """Read several value columns of one daily CSV into aligned series.

    Dates absent from the file and empty cells become missing. If no
    ``calendar`` is given, the period spans the first to last date present.
    """
    fields, rows = _read_rows(source)
    value_fields = [f for f in fields if f != "date"]
    if columns is None:
        columns = value_fields
    for col in columns:
        if col not in value_fields:
            raise ParseError(f"column {col!r} not found; available: {value_fields}")
    if not columns:
        raise ParseError("input has no value column")

    seen: dict[dt.date, int] = {}
    parsed: list[tuple[dt.date, list[float]]] = []
    for line, row in rows:
        day = _parse_date(row["date"] or "", line)
        if day in seen:
            raise DuplicateDateError(day)
        seen[day] = line
        vals = []
        for col in columns:
            cell = (row.get(col) or "").strip()
            if cell == "" or cell.upper() == "NA":
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"line {line}: unparseable value {cell!r} in column {col!r}"
                ) from None
        parsed.append((day, vals))

    if calendar is None:
        if not parsed:
            raise ParseError("input has no data rows")
        calendar = StudyCalendar(min(seen), max(seen))
    out = np.full((len(columns), calendar.n_days), np.nan)
    for day, vals in parsed:
        out[:, calendar.index_of(day)] = vals
    return {col: DailySeries(calendar, out[k], col) for k, col in enumerate(columns)}


def load_series(
    source, calendar: StudyCalendar | None = None, column: str | None = None
) -> DailySeries:
    """Read a ``date`` + value CSV into a :class:`DailySeries`.

    ``column`` may be omitted when the file has exactly one value column.
    """
    loaded = load_columns(source, None if column is None else [column], calendar)
    if len(loaded) != 1:
        raise ParseError(
            f"expected one value column, found {list(loaded)}; pass column="
        )
    return next(iter(loaded.values()))


# ----------------------------------------------------------------------------
# scaling


def iqr_standardize(series: DailySeries) -> tuple[DailySeries, float]:
    """Divide a series by the interquartile range of its observed values.

    Quartiles use linear interpolation between order statistics (position
    ``(n - 1) * p`` in the sorted sample).
    """
    obs = series.values[series.observed]
    if np.unique(obs).size < 2:
        raise DegenerateScaleError(
            f"series {series.name!r} has fewer than 2 distinct observed values"
        )
    q25, q75 = np.percentile(obs, [25.0, 75.0])
    iqr = float(q75 - q25)
    if not iqr > 0.0:
        raise DegenerateScaleError(f"series {series.name!r} has zero interquartile range")
    return DailySeries(series.calendar, series.values / iqr, series.name), iqr


# ----------------------------------------------------------------------------
# decomposition


def _block_means(resid, observed, ids, labels, kind):
    n_blocks = len(labels)
    order = np.argsort(ids, kind="stable")
    bounds = np.searchsorted(ids[order], np.arange(n_blocks + 1))
    means = np.empty(n_blocks)
    for b in range(n_blocks):
        members = order[bounds[b]:bounds[b + 1]]
        members = members[observed[members]]
        if members.size == 0:
            raise UndefinedBlockError(kind, labels[b])
        means[b] = math.fsum(resid[members]) / members.size
    return means[ids]


def decompose(series: DailySeries) -> TrendDecomposition:
    """Split a series into nested yearly, monthly, weekly and daily parts.

    Missing days receive the block components of the blocks they fall in
    but a ``NaN`` daily residual.
    """
    cal = series.calendar
    x = series.values
    obs = series.observed
    yearly = _block_means(x, obs, cal.year_ids, cal.year_labels, "year")
    r1 = x - yearly
    monthly = _block_means(r1, obs, cal.month_ids, cal.month_labels, "month")
    r2 = r1 - monthly
    weekly = _block_means(r2, obs, cal.week_ids, cal.week_labels, "week")
    daily = r2 - weekly
    return TrendDecomposition(cal, yearly, monthly, weekly, daily, series.name)


def series_from_values(
    start: dt.date, values: Iterable[float], name: str = "value"
) -> DailySeries:
    """Convenience constructor: consecutive daily values beginning at ``start``."""
    vals = np.asarray(list(values), dtype=float)
    cal = StudyCalendar(start, start + dt.timedelta(days=vals.size - 1))
    return DailySeries(cal, vals, name)
