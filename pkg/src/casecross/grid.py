"""Cohort x season x lag x exposure grid of case-crossover fits.

Every cell filters the events by a cohort predicate and by the season of the
event date, shifts to the requested lag, builds the time-stratified table
and fits each requested model. p-values are flagged at 0.05, 0.01 and the
Bonferroni level ``alpha0 / n_cells``.
"""
from __future__ import annotations

import datetime as dt
import math
import operator
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Mapping, Sequence

import numpy as np

from .design import EventList, build_table_from_hazards
from .errors import (
    AllMissingError,
    CaseCrossError,
    CollinearityError,
    DataError,
    EmptyTableError,
    ParseError,
    SeparationError,
)
from .glm import ModelSpec, fit_logistic, wald_inference
from .series import DailySeries, decompose, iqr_standardize

__all__ = [
    "SEASONS",
    "DEFAULT_SEASON_MONTHS",
    "GridSpec",
    "GridRow",
    "Cohort",
    "season_of",
    "parse_predicate",
    "run_grid",
    "summarize_grid",
    "GRID_COLUMNS",
]

SEASONS = ("All", "Spring", "Summer", "Autumn", "Winter")
DEFAULT_SEASON_MONTHS: dict[str, tuple[int, ...]] = {
    "Spring": (3, 4, 5),
    "Summer": (6, 7, 8),
    "Autumn": (9, 10, 11),
    "Winter": (12, 1, 2),
}
DEFAULT_MIN_EVENTS = 10

GRID_COLUMNS = (
    "cohort", "season", "n", "pollutant", "lag", "estimate", "se", "or",
    "ci_low", "ci_high", "p", "flag_05", "flag_01", "flag_bonferroni", "status",
)


def season_of(day: dt.date, months: Mapping[str, Sequence[int]] = DEFAULT_SEASON_MONTHS) -> str:
    """Meteorological season of a date (every date is also in ``"All"``)."""
    for name, ms in months.items():
        if day.month in ms:
            return name
    raise DataError(f"month {day.month} is not assigned to any season")


# ---------------------------------------------------------------------------
# cohort predicates

_OPS = {
    "==": operator.eq, "=": operator.eq, "!=": operator.ne,
    ">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt,
}
_CLAUSE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(==|!=|>=|<=|=|>|<)\s*(.*?)\s*$")


def _coerce(a: str, b: str):
    try:
        return float(a), float(b)
    except ValueError:
        return a, b


def parse_predicate(text: str) -> Callable[[Mapping[str, str]], bool]:
    """Compile ``attr OP value [& attr OP value ...]``; ``*`` matches everything.

    Comparisons are numeric when both sides parse as numbers, else string.
    A missing attribute makes the clause false.
    """
    text = text.strip()
    if text in ("", "*", "all", "All"):
        return lambda attrs: True
    clauses = []
    for part in text.split("&"):
        m = _CLAUSE.match(part)
        if not m:
            raise ParseError(f"cannot parse cohort clause {part.strip()!r}")
        clauses.append((m.group(1), _OPS[m.group(2)], m.group(3)))

    def pred(attrs: Mapping[str, str]) -> bool:
        for key, op, value in clauses:
            if key not in attrs:
                return False
            if not op(*_coerce(attrs[key], value)):
                return False
        return True

    return pred


@dataclass(frozen=True)
class Cohort:
    name: str
    rule: str = "*"

    def matches(self, attrs: Mapping[str, str]) -> bool:
        return parse_predicate(self.rule)(attrs)


@dataclass
class GridSpec:
    cohorts: Sequence[Cohort]
    exposures: Mapping[str, DailySeries]
    seasons: Sequence[str] = SEASONS
    lags: Sequence[int] = (0, 1, 2, 3, 4)
    models: Sequence[str] = ("model1", "model2")
    alpha0: float = 0.05
    min_events: int = DEFAULT_MIN_EVENTS
    standardize: bool = True
    season_months: Mapping[str, Sequence[int]] = field(
        default_factory=lambda: dict(DEFAULT_SEASON_MONTHS)
    )

    def __post_init__(self):
        names = [c.name for c in self.cohorts]
        if not names:
            raise DataError("grid needs at least one cohort")
        if len(set(names)) != len(names):
            raise DataError("cohort names must be unique")
        if not self.exposures:
            raise DataError("grid needs at least one exposure series")
        for s in self.seasons:
            if s != "All" and s not in self.season_months:
                raise DataError(f"unknown season {s!r}")
        for lag in self.lags:
            if not 0 <= int(lag) <= 4:
                raise DataError(f"lag {lag} outside 0..4")
        self.models = tuple(ModelSpec.parse(m).kind for m in self.models)
        for m in self.models:
            if m not in ("model1", "model2"):
                raise DataError(f"grid models are model1/model2, got {m!r}")
        cals = {s.calendar for s in self.exposures.values()}
        if len(cals) != 1:
            raise DataError("all exposure series must share one calendar")

    @property
    def n_cells(self) -> int:
        return len(self.cohorts) * len(self.seasons) * len(self.lags) * len(self.exposures)

    @property
    def alpha_bonferroni(self) -> float:
        return self.alpha0 / self.n_cells


@dataclass(frozen=True)
class GridRow:
    cohort: str
    season: str
    n: int
    pollutant: str
    lag: int
    estimate: float = math.nan
    se: float = math.nan
    odds_ratio: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    p: float = math.nan
    flag_05: bool = False
    flag_01: bool = False
    flag_bonferroni: bool = False
    status: str = "ok"

    def as_record(self) -> tuple:
        return (
            self.cohort, self.season, self.n, self.pollutant, self.lag,
            self.estimate, self.se, self.odds_ratio, self.ci_low, self.ci_high,
            self.p, int(self.flag_05), int(self.flag_01), int(self.flag_bonferroni),
            self.status,
        )


def _status_of(exc: Exception) -> str:
    if isinstance(exc, CollinearityError):
        return "collinear"
    if isinstance(exc, SeparationError):
        return "separation"
    if isinstance(exc, (AllMissingError, EmptyTableError)):
        return "no_data"
    return "failed"


def _cohort_rows(
    ci: int,
    spec: GridSpec,
    prepared: Mapping[str, tuple],
    event_offset: np.ndarray,
    n_days: int,
    cohort_masks: np.ndarray,
    season_masks: Mapping[str, np.ndarray],
) -> dict[str, list[GridRow]]:
    cohort = spec.cohorts[ci].name
    out: dict[str, list[GridRow]] = {m: [] for m in spec.models}
    alpha_b = spec.alpha_bonferroni
    for season in spec.seasons:
        mask = cohort_masks[ci] & season_masks[season]
        positions = np.flatnonzero(mask)
        for pollutant, (series, decomp) in prepared.items():
            for lag in spec.lags:
                lag = int(lag)
                hazards = event_offset[positions] - lag
                hazards = np.where((hazards >= 0) & (hazards < n_days), hazards, -1)
                base = dict(cohort=cohort, season=season, pollutant=pollutant, lag=lag)
                try:
                    table = build_table_from_hazards(hazards, series, decomp, strata=positions)
                    n = table.n_strata
                except (AllMissingError, EmptyTableError):
                    for m in spec.models:
                        out[m].append(GridRow(n=0, status="no_data", **base))
                    continue
                if n < spec.min_events:
                    for m in spec.models:
                        out[m].append(GridRow(n=n, status="underpowered", **base))
                    continue
                for m in spec.models:
                    try:
                        fit = fit_logistic(table, ModelSpec(m))
                        if not fit.converged:
                            out[m].append(GridRow(n=n, status="nonconverged", **base))
                            continue
                        w = wald_inference(fit)
                    except CaseCrossError as exc:
                        out[m].append(GridRow(n=n, status=_status_of(exc), **base))
                        continue
                    out[m].append(GridRow(
                        n=n, estimate=fit.estimate, se=fit.se, odds_ratio=w.odds_ratio,
                        ci_low=w.ci_low, ci_high=w.ci_high, p=w.p,
                        flag_05=w.p <= 0.05, flag_01=w.p <= 0.01,
                        flag_bonferroni=w.p <= alpha_b, status="ok", **base,
                    ))
    return out


def run_grid(spec: GridSpec, events: EventList, jobs: int = 1) -> dict[str, list[GridRow]]:
    """Fit every grid cell; returns one row list per model.

    Rows are ordered by (cohort, season, exposure, lag) in spec order. The
    reported ``n`` is the number of retained strata; cells with fewer than
    ``spec.min_events`` are not fitted (status ``underpowered``).
    """
    if len(events) == 0:
        raise EmptyTableError("event list is empty")
    prepared = {}
    for name, series in spec.exposures.items():
        if spec.standardize:
            series, _ = iqr_standardize(series)
        prepared[name] = (series, decompose(series))
    cal = next(iter(spec.exposures.values())).calendar

    # day offset of each event from the study start; may lie outside the period
    event_offset = np.array([(e.date - cal.start).days for e in events.events], dtype=np.intp)
    preds = [parse_predicate(c.rule) for c in spec.cohorts]
    cohort_masks = np.array(
        [[pred(e.attributes) for e in events.events] for pred in preds], dtype=bool
    ).reshape(len(spec.cohorts), len(events))
    event_seasons = [season_of(e.date, spec.season_months) for e in events.events]
    season_masks = {
        s: np.ones(len(events), dtype=bool) if s == "All"
        else np.array([es == s for es in event_seasons], dtype=bool)
        for s in spec.seasons
    }

    work = partial(
        _cohort_rows, spec=spec, prepared=prepared, event_offset=event_offset, n_days=cal.n_days,
        cohort_masks=cohort_masks, season_masks=season_masks,
    )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(work, range(len(spec.cohorts))))
    else:
        chunks = [work(ci) for ci in range(len(spec.cohorts))]
    return {m: [row for chunk in chunks for row in chunk[m]] for m in spec.models}


def summarize_grid(rows: Mapping[str, Sequence[GridRow]]) -> dict[str, float]:
    """Tallies computed from emitted rows only: signs, flag counts, cross-model correlation."""
    summary: dict[str, float] = {}
    for model, rs in rows.items():
        ok = [r for r in rs if r.status == "ok"]
        summary[f"{model}_cells"] = len(rs)
        summary[f"{model}_fitted"] = len(ok)
        summary[f"{model}_positive"] = sum(r.estimate > 0 for r in ok)
        summary[f"{model}_negative"] = sum(r.estimate < 0 for r in ok)
        summary[f"{model}_p05"] = sum(r.flag_05 for r in ok)
        summary[f"{model}_p01"] = sum(r.flag_01 for r in ok)
        summary[f"{model}_bonferroni"] = sum(r.flag_bonferroni for r in ok)
    models = list(rows)
    if len(models) >= 2:
        a, b = rows[models[0]], rows[models[1]]
        pairs = np.array([
            (ra.estimate, rb.estimate) for ra, rb in zip(a, b)
            if ra.status == "ok" and rb.status == "ok"
        ])
        if len(pairs) > 2:
            summary["estimate_correlation"] = float(np.corrcoef(pairs.T)[0, 1])
        else:
            summary["estimate_correlation"] = math.nan
    return summary
