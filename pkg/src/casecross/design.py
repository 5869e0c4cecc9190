"""Time-stratified referent selection and case-crossover table assembly."""
from __future__ import annotations

import calendar as _calendar
import csv
import datetime as dt
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import AllMissingError, DataError, EmptyTableError, ParseError
from .series import DailySeries, StudyCalendar, TrendDecomposition

__all__ = [
    "Event",
    "EventList",
    "CaseCrossoverTable",
    "referent_days",
    "referent_index_matrix",
    "build_table",
    "build_table_from_hazards",
    "load_events",
]

COMPONENTS = ("yearly", "monthly", "weekly", "daily")
MAX_LAG = 4


def referent_days(hazard_day: dt.date) -> list[dt.date]:
    """Days in the hazard day's calendar month sharing its weekday, hazard excluded.

    >>> referent_days(dt.date(2005, 6, 15))
    [datetime.date(2005, 6, 1), datetime.date(2005, 6, 8), datetime.date(2005, 6, 22), datetime.date(2005, 6, 29)]
    """
    n_days = _calendar.monthrange(hazard_day.year, hazard_day.month)[1]
    first = (hazard_day.day - 1) % 7 + 1
    return [
        hazard_day.replace(day=d)
        for d in range(first, n_days + 1, 7)
        if d != hazard_day.day
    ]


@lru_cache(maxsize=8)
def referent_index_matrix(cal: StudyCalendar) -> np.ndarray:
    """Per study day, the calendar indices of its referents, padded with -1.

    Referents falling outside the study period are reported as -1 as well.
    """
    out = np.full((cal.n_days, 4), -1, dtype=np.intp)
    for i, day in enumerate(cal.dates):
        refs = [(r - cal.start).days for r in referent_days(day)]
        refs = [j if 0 <= j < cal.n_days else -1 for j in refs]
        out[i, : len(refs)] = refs
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Event:
    date: dt.date
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EventList:
    events: tuple[Event, ...]
    lag: int = 0

    def __post_init__(self):
        if not 0 <= self.lag <= MAX_LAG:
            raise DataError(f"lag must be in 0..{MAX_LAG}, got {self.lag}")
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self):
        return len(self.events)

    @classmethod
    def from_dates(cls, dates: Sequence[dt.date], lag: int = 0) -> "EventList":
        return cls(tuple(Event(d) for d in dates), lag)

    def with_lag(self, lag: int) -> "EventList":
        return EventList(self.events, lag)

    def hazard_days(self) -> list[dt.date]:
        shift = dt.timedelta(days=self.lag)
        return [e.date - shift for e in self.events]


def load_events(source, lag: int = 0) -> EventList:
    """Read an events CSV: a ``date`` column plus free-form attribute columns."""
    close = isinstance(source, (str, os.PathLike))
    fh = open(source, newline="", encoding="utf-8") if close else source
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "date" not in [f.strip() for f in reader.fieldnames]:
            raise ParseError("events file needs a header with a 'date' column")
        reader.fieldnames = [f.strip() for f in reader.fieldnames]
        events = []
        for row in reader:
            text = (row.pop("date") or "").strip()
            try:
                day = dt.date.fromisoformat(text)
            except ValueError:
                raise ParseError(
                    f"line {reader.line_num}: unparseable event date {text!r}"
                ) from None
            attrs = {k: (v or "").strip() for k, v in row.items() if k is not None}
            events.append(Event(day, attrs))
    finally:
        if close:
            fh.close()
    return EventList(tuple(events), lag)


@dataclass(frozen=True, eq=False)
class CaseCrossoverTable:
    """Stacked hazard/referent rows, ordered by (stratum, date).

    ``stratum`` is the position of the originating event in its event list,
    so events sharing a hazard day still get their own strata.
    """

    calendar: StudyCalendar
    stratum: np.ndarray
    day_index: np.ndarray
    y: np.ndarray
    exposure: np.ndarray
    yearly: np.ndarray
    monthly: np.ndarray
    weekly: np.ndarray
    daily: np.ndarray
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    n_events: int = 0
    out_of_window: int = 0
    dropped_strata: int = 0
    dropped_rows: int = 0

    def __len__(self):
        return int(self.y.size)

    @property
    def n_strata(self) -> int:
        return int(self.y.sum())

    @property
    def dates(self) -> list[dt.date]:
        start = self.calendar.start
        return [start + dt.timedelta(days=int(i)) for i in self.day_index]

    def column(self, name: str) -> np.ndarray:
        if name in ("exposure",) + COMPONENTS:
            return getattr(self, name)
        try:
            return self.covariates[name]
        except KeyError:
            raise KeyError(f"table has no column {name!r}") from None

    @property
    def column_names(self) -> list[str]:
        return ["exposure", *COMPONENTS, *self.covariates]

    def with_exposure(self, exposure: np.ndarray) -> "CaseCrossoverTable":
        """Same rows with the exposure column replaced (used by calibration nulls)."""
        return CaseCrossoverTable(
            self.calendar, self.stratum, self.day_index, self.y,
            np.asarray(exposure, dtype=float), self.yearly, self.monthly,
            self.weekly, self.daily, self.covariates, self.n_events,
            self.out_of_window, self.dropped_strata, self.dropped_rows,
        )


def build_table_from_hazards(
    hazard_index: np.ndarray,
    series: DailySeries,
    decomp: TrendDecomposition,
    covariates: Mapping[str, DailySeries] | None = None,
    strata: np.ndarray | None = None,
) -> CaseCrossoverTable:
    """Assemble the table from hazard-day calendar indices (-1 = out of window)."""
    cal = series.calendar
    if decomp.calendar != cal:
        raise DataError("series and decomposition use different calendars")
    covariates = dict(covariates or {})
    for name, cov in covariates.items():
        if cov.calendar != cal:
            raise DataError(f"covariate {name!r} uses a different calendar")

    hazard_index = np.asarray(hazard_index, dtype=np.intp)
    n_events = hazard_index.size
    if n_events == 0:
        raise EmptyTableError("no events")
    if strata is None:
        strata = np.arange(n_events)

    in_window = hazard_index >= 0
    refs = referent_index_matrix(cal)[np.where(in_window, hazard_index, 0)]
    days = np.column_stack([hazard_index, refs])
    days[~in_window] = -1
    is_case = np.zeros(days.shape, dtype=bool)
    is_case[:, 0] = True

    usable = np.zeros(cal.n_days, dtype=bool)
    usable[:] = series.observed
    for cov in covariates.values():
        usable &= cov.observed
    slot_ok = (days >= 0) & usable[np.where(days >= 0, days, 0)]

    keep_stratum = slot_ok[:, 0] & slot_ok[:, 1:].any(axis=1)
    slot_ok &= keep_stratum[:, None]

    # sort slots chronologically within each stratum; unusable slots last
    sort_key = np.where(slot_ok, days, np.iinfo(np.intp).max)
    order = np.argsort(sort_key, axis=1, kind="stable")
    days = np.take_along_axis(days, order, axis=1)
    is_case = np.take_along_axis(is_case, order, axis=1)
    slot_ok = np.take_along_axis(slot_ok, order, axis=1)

    row_day = days[slot_ok]
    row_y = is_case[slot_ok].astype(np.int8)
    row_stratum = np.broadcast_to(np.asarray(strata)[:, None], days.shape)[slot_ok]

    n_candidates = int(((days >= 0) & in_window[:, None]).sum())
    out_of_window = int((~in_window).sum())
    dropped_strata = int((~keep_stratum & in_window).sum())
    if not keep_stratum.any():
        raise AllMissingError(
            f"all {n_events} strata dropped ({out_of_window} out of window)"
        )

    return CaseCrossoverTable(
        calendar=cal,
        stratum=row_stratum.copy(),
        day_index=row_day,
        y=row_y,
        exposure=series.values[row_day],
        yearly=decomp.yearly[row_day],
        monthly=decomp.monthly[row_day],
        weekly=decomp.weekly[row_day],
        daily=decomp.daily[row_day],
        covariates={k: v.values[row_day] for k, v in covariates.items()},
        n_events=n_events,
        out_of_window=out_of_window,
        dropped_strata=dropped_strata,
        dropped_rows=n_candidates - row_day.size,
    )


def hazard_indices(events: EventList, cal: StudyCalendar) -> np.ndarray:
    out = np.full(len(events), -1, dtype=np.intp)
    for i, day in enumerate(events.hazard_days()):
        if cal.contains(day):
            out[i] = (day - cal.start).days
    return out


def build_table(
    events: EventList,
    series: DailySeries,
    decomp: TrendDecomposition,
    covariate_series: Mapping[str, DailySeries] | None = None,
) -> CaseCrossoverTable:
    """One stratum per retained event: its hazard row (y=1) plus referent rows (y=0).

    A referent with missing exposure (or covariate) drops only that row; a
    stratum goes when its hazard row is unusable or no referent survives.
    Events whose hazard day falls outside the study period are counted in
    ``out_of_window`` and dropped.
    """
    if len(events) == 0:
        raise EmptyTableError("event list is empty")
    return build_table_from_hazards(
        hazard_indices(events, series.calendar), series, decomp, covariate_series
    )
