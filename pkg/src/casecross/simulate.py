"""Monte-Carlo size/power experiments for case-crossover analysis strategies.

Each replicate samples event days with probability proportional to
``exp(beta * daily + gamma * (yearly + monthly + weekly))``, builds the
time-stratified table at lag 0, and runs every requested strategy.
Replicate ``r`` draws from a stream derived from ``(master_seed, r)`` and its
calibration from ``(master_seed, r, 1)``, so results do not depend on
execution order or worker count.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .calibrate import DEFAULT_B, NULL_METHODS, calibrate, permute_null_fits, seed_sequence
from .design import Event, EventList, build_table_from_hazards
from .errors import CaseCrossError, DataError, ScenarioUnstableError, WeightOverflowError
from .glm import ModelSpec, fit_logistic, wald_inference
from .series import DailySeries, StudyCalendar, TrendDecomposition

log = logging.getLogger(__name__)

__all__ = [
    "STRATEGIES",
    "ScenarioSpec",
    "StrategyResult",
    "ScenarioSummary",
    "sample_event_days",
    "run_scenario",
    "summarize_size_power",
    "generate_synthetic_series",
    "generate_synthetic_events",
    "parse_strategies",
]

STRATEGIES = ("model1", "model2", "model1+calibration", "model2+calibration")
MAX_EXPONENT = 700.0
MAX_REPLICATE_FAILURE_SHARE = 0.05
WEEK_AR = 0.7

_ALIASES = {
    "1": "model1", "2": "model2", "m1": "model1", "m2": "model2",
    "model1+cal": "model1+calibration", "model2+cal": "model2+calibration",
    "1+cal": "model1+calibration", "2+cal": "model2+calibration",
}


def parse_strategies(items: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(items, str):
        items = [s for s in items.replace(";", ",").split(",")]
    out = []
    for raw in items:
        name = _ALIASES.get(raw.strip().lower(), raw.strip().lower())
        if not name:
            continue
        if name not in STRATEGIES:
            raise DataError(f"unknown strategy {raw!r}; choose from {STRATEGIES}")
        if name not in out:
            out.append(name)
    if not out:
        raise DataError("no strategies given")
    return tuple(out)


@dataclass(frozen=True)
class ScenarioSpec:
    beta: float = 0.0
    gamma: float = 0.0
    n_events: int = 5000
    n_reps: int = 1000
    strategies: tuple[str, ...] = STRATEGIES
    alpha0: float = 0.05
    master_seed: int = 0
    B: int = DEFAULT_B
    null_method: str = "daily"

    def __post_init__(self):
        object.__setattr__(self, "strategies", parse_strategies(self.strategies))
        if self.n_events < 1:
            raise DataError("n_events must be >= 1")
        if self.n_reps < 1:
            raise DataError("n_reps must be >= 1")
        if not 0.0 < self.alpha0 < 1.0:
            raise DataError("alpha0 must lie in (0, 1)")
        if self.null_method not in NULL_METHODS:
            raise DataError(f"null_method must be one of {NULL_METHODS}")
        if any(s.endswith("+calibration") for s in self.strategies) and self.B < 2:
            raise DataError("B must be >= 2 for calibrated strategies")


@dataclass
class StrategyResult:
    estimates: np.ndarray
    p_values: np.ndarray
    alpha0: float

    @property
    def failures(self) -> int:
        return int(np.isnan(self.p_values).sum())

    @property
    def denominator(self) -> int:
        return int(self.p_values.size - self.failures)

    @property
    def rejections(self) -> int:
        return summarize_size_power(self.p_values, self.alpha0)

    @property
    def rate(self) -> float:
        return self.rejections / self.denominator if self.denominator else math.nan

    @property
    def mean_estimate(self) -> float:
        ok = self.estimates[np.isfinite(self.estimates)]
        return float(ok.mean()) if ok.size else math.nan

    @property
    def mc_se(self) -> float:
        """Monte-Carlo standard error of ``mean_estimate``."""
        ok = self.estimates[np.isfinite(self.estimates)]
        return float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else math.nan


@dataclass
class ScenarioSummary:
    spec: ScenarioSpec
    results: dict[str, StrategyResult]
    runtime_s: float = 0.0
    errors: list[tuple[int, str, str]] = field(default_factory=list)


def summarize_size_power(p_values: Sequence[float], alpha0: float) -> int:
    """Number of tests with ``p <= alpha0``; ``NaN`` entries (failures) are ignored."""
    p = np.asarray(p_values, dtype=float)
    return int(np.sum(p[~np.isnan(p)] <= alpha0))


def sample_event_days(
    decomp: TrendDecomposition,
    beta: float,
    gamma: float,
    n_events: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Calendar indices of ``n_events`` hazard days drawn with replacement.

    Only days with an observed daily component are eligible. Weights are
    ``exp(beta * daily + gamma * trend)``, computed after subtracting the
    largest exponent.
    """
    eligible = np.flatnonzero(~np.isnan(decomp.daily))
    expo = beta * decomp.daily[eligible] + gamma * decomp.trend[eligible]
    if not np.all(np.isfinite(expo)):
        raise WeightOverflowError("non-finite sampling exponent")
    if np.max(np.abs(expo)) > MAX_EXPONENT:
        raise WeightOverflowError(
            f"sampling exponent reaches {np.max(np.abs(expo)):.1f}; "
            "rescale the series (e.g. IQR-standardize) or shrink beta/gamma"
        )
    w = np.exp(expo - expo.max())
    return rng.choice(eligible, size=n_events, replace=True, p=w / w.sum())


def _run_replicate(r: int, spec: ScenarioSpec, series: DailySeries, decomp: TrendDecomposition):
    rng = np.random.default_rng(seed_sequence(spec.master_seed, r))
    out: dict[str, tuple[float, float, str]] = {}
    try:
        hazards = sample_event_days(decomp, spec.beta, spec.gamma, spec.n_events, rng)
        table = build_table_from_hazards(hazards, series, decomp)
    except CaseCrossError as exc:
        return {s: (math.nan, math.nan, f"{type(exc).__name__}: {exc}") for s in spec.strategies}

    fits = {}
    for model in ("model1", "model2"):
        if not any(s.startswith(model) for s in spec.strategies):
            continue
        try:
            fit = fit_logistic(table, ModelSpec(model))
            if not fit.converged:
                raise CaseCrossError(f"{model} did not converge")
            fits[model] = fit
        except CaseCrossError as exc:
            fits[model] = exc

    for strategy in spec.strategies:
        model = strategy.split("+")[0]
        fit = fits[model]
        if isinstance(fit, Exception):
            out[strategy] = (math.nan, math.nan, f"{type(fit).__name__}: {fit}")
            continue
        try:
            if strategy.endswith("+calibration"):
                null = permute_null_fits(
                    table, series, decomp, ModelSpec(model), spec.B,
                    seed_sequence(spec.master_seed, r, 1 if model == "model1" else 2),
                    method=spec.null_method,
                )
                cal = calibrate(fit, null)
                out[strategy] = (cal.beta_cal, cal.p_perm, "")
            else:
                out[strategy] = (fit.estimate, wald_inference(fit).p, "")
        except CaseCrossError as exc:
            out[strategy] = (math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    return out


def run_scenario(
    spec: ScenarioSpec,
    series: DailySeries,
    decomp: TrendDecomposition,
    jobs: int = 1,
) -> ScenarioSummary:
    """Run ``spec.n_reps`` replicates and aggregate per-strategy results."""
    t0 = time.perf_counter()
    work = partial(_run_replicate, spec=spec, series=series, decomp=decomp)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, spec.n_reps // (4 * jobs))
            per_rep = list(pool.map(work, range(spec.n_reps), chunksize=chunk))
    else:
        per_rep = [work(r) for r in range(spec.n_reps)]

    results = {}
    errors = []
    for s in spec.strategies:
        est = np.array([rep[s][0] for rep in per_rep])
        pv = np.array([rep[s][1] for rep in per_rep])
        results[s] = StrategyResult(est, pv, spec.alpha0)
        for r, rep in enumerate(per_rep):
            if rep[s][2]:
                errors.append((r, s, rep[s][2]))
                log.warning("replicate %d, %s failed: %s", r, s, rep[s][2])
        if results[s].failures > MAX_REPLICATE_FAILURE_SHARE * spec.n_reps:
            raise ScenarioUnstableError(
                f"strategy {s}: {results[s].failures} of {spec.n_reps} replicates failed"
            )
    return ScenarioSummary(spec, results, time.perf_counter() - t0, errors)


# ---------------------------------------------------------------------------
# synthetic inputs


def generate_synthetic_series(
    year_amp: float,
    month_amp: float,
    week_amp: float,
    noise_sd: float,
    period: StudyCalendar,
    rng: np.random.Generator,
    level: float = 0.0,
    name: str = "synthetic",
) -> DailySeries:
    """Seasonal + persistent-weekly + white-noise daily series.

    ``value(t) = level + year_amp*sin(2*pi*t/365.25) + month_amp*sin(2*pi*t/30.44)
    + week_amp*s(week(t)) + noise_sd*N(0, 1)``, where ``s`` is a per-ISO-week
    AR(1) level with coefficient 0.7 and unit stationary variance.
    """
    for label, amp in (("year_amp", year_amp), ("month_amp", month_amp),
                       ("week_amp", week_amp), ("noise_sd", noise_sd)):
        if amp < 0:
            raise DataError(f"{label} must be non-negative")
    t = np.arange(period.n_days, dtype=float)
    weeks = period.week_ids
    n_weeks = int(weeks.max()) + 1
    innov = rng.standard_normal(n_weeks)
    s = np.empty(n_weeks)
    s[0] = innov[0]
    scale = math.sqrt(1.0 - WEEK_AR**2)
    for k in range(1, n_weeks):
        s[k] = WEEK_AR * s[k - 1] + scale * innov[k]
    noise = rng.standard_normal(period.n_days)
    values = (
        level
        + year_amp * np.sin(2 * np.pi * t / 365.25)
        + month_amp * np.sin(2 * np.pi * t / 30.44)
        + week_amp * s[weeks]
        + noise_sd * noise
    )
    return DailySeries(period, values, name)


def generate_synthetic_events(
    period: StudyCalendar,
    n_events: int,
    rng: np.random.Generator,
) -> EventList:
    """Uniformly dated events with AMI-registry-like attribute columns.

    Attributes: ``sex`` (M/F), ``age`` (integer years, 20-99), ``subtype``
    (STEMI/NSTEMI) and yes/no flags ``diabetes``, ``hypertension``,
    ``dysrhythmia``, ``pihd``.
    """
    days = rng.integers(0, period.n_days, size=n_events)
    sex = rng.random(n_events) < 0.65
    age = np.clip(np.round(rng.normal(66, 13, n_events)), 20, 99).astype(int)
    stemi = rng.random(n_events) < 0.45
    flags = {
        "diabetes": rng.random(n_events) < 0.27,
        "hypertension": rng.random(n_events) < 0.6,
        "dysrhythmia": rng.random(n_events) < 0.1,
        "pihd": rng.random(n_events) < 0.31,
    }
    events = []
    for i in range(n_events):
        attrs = {
            "sex": "M" if sex[i] else "F",
            "age": str(age[i]),
            "subtype": "STEMI" if stemi[i] else "NSTEMI",
        }
        attrs.update({k: "Y" if v[i] else "N" for k, v in flags.items()})
        events.append(Event(period.dates[int(days[i])], attrs))
    return EventList(tuple(events), 0)
