"""Permutation calibration of the design bias in a case-crossover estimate.

The observed estimate is treated as ``beta_hat = beta + b + e`` with a
design bias ``b`` that does not depend on the true effect. ``b`` is
estimated as the mean of estimates refitted on null data sets, and the
calibrated estimate is ``beta_hat - b_hat``.

Two null generators are provided:

``"daily"`` (default)
    Keep the observed event dates and their referent rows. Shuffle the
    daily residual component among the observed days of each calendar
    month, rebuild exposure as ``yearly + monthly + weekly + shuffled
    daily`` and refit. Any association carried by the trend components
    (the source of design bias) survives; the transient association is
    destroyed.

``"resample"``
    Draw the same number of hazard days uniformly from the observed days,
    rebuild the time-stratified table and refit. This is the null of the
    simulation sampler with every coefficient at zero, so it only captures
    bias that exists without any trend-driven event selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .design import CaseCrossoverTable, build_table_from_hazards
from .errors import CalibrationUnstableError, CaseCrossError, DataError, NoReferenceError
from .glm import FitResult, ModelSpec, design_matrix, fit_design
from .series import DailySeries, TrendDecomposition

__all__ = [
    "CalibrationResult",
    "permute_null_fits",
    "calibrate",
    "seed_sequence",
    "DEFAULT_B",
    "NULL_METHODS",
]

DEFAULT_B = 200
MAX_FAILURE_SHARE = 0.10
NULL_METHODS = ("daily", "resample")


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Child stream of ``seed`` addressed by integer ``key``.

    ``seed`` may be an int or a SeedSequence; the result depends only on
    (seed, key), never on how many other streams were drawn before.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


@dataclass(frozen=True)
class CalibrationResult:
    b_hat: float
    null_estimates: np.ndarray
    beta_obs: float
    beta_cal: float
    perm_sd: float
    p_perm: float
    B_requested: int
    B_successful: int


def _within_group_shuffle(groups: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Permutation of positions that only moves elements inside their group."""
    grouped = np.argsort(groups, kind="stable")
    shuffled = np.lexsort((rng.random(groups.size), groups))
    perm = np.empty(groups.size, dtype=np.intp)
    perm[grouped] = shuffled
    return perm


def permute_null_fits(
    table: CaseCrossoverTable,
    series: DailySeries,
    decomp: TrendDecomposition,
    spec: ModelSpec,
    B: int = DEFAULT_B,
    seed=0,
    method: str = "daily",
    covariates: Mapping[str, DailySeries] | None = None,
) -> np.ndarray:
    """Target-coefficient estimates from ``B`` null refits.

    Returns a length-``B`` array; a failed refit is stored as ``NaN``.
    Iteration ``i`` uses its own stream derived from (seed, i).
    """
    if B < 2:
        raise DataError(f"B must be at least 2, got {B}")
    if method not in NULL_METHODS:
        raise DataError(f"unknown null method {method!r}; choose from {NULL_METHODS}")
    if table.n_strata < 1:
        raise DataError("table has no strata")

    out = np.full(B, np.nan)
    if method == "daily":
        cal = series.calendar
        obs = series.observed & ~np.isnan(decomp.daily)
        # missing days get their own singleton group so they never move
        groups = np.where(obs, cal.month_ids, cal.month_ids.max() + 1 + np.arange(cal.n_days))
        trend = decomp.trend
        daily = decomp.daily
        X, names = design_matrix(table, spec)
        exposure_cols = [j for j, n in enumerate(names) if n in ("exposure", "daily")]
        for i in range(B):
            rng = np.random.default_rng(seed_sequence(seed, i))
            perm = _within_group_shuffle(groups, rng)
            shuffled_daily = daily[perm][table.day_index]
            for j in exposure_cols:
                if names[j] == "exposure":
                    X[:, j] = trend[table.day_index] + shuffled_daily
                else:
                    X[:, j] = shuffled_daily
            try:
                fit = fit_design(X, table.y, names, target=spec.target, check_rank=False)
            except CaseCrossError:
                continue
            if fit.converged:
                out[i] = fit.estimate
    else:
        observed_days = np.flatnonzero(series.observed)
        n_events = table.n_strata
        for i in range(B):
            rng = np.random.default_rng(seed_sequence(seed, i))
            hazards = rng.choice(observed_days, size=n_events, replace=True)
            try:
                null_table = build_table_from_hazards(hazards, series, decomp, covariates)
                X, names = design_matrix(null_table, spec)
                fit = fit_design(X, null_table.y, names, target=spec.target)
            except CaseCrossError:
                continue
            if fit.converged:
                out[i] = fit.estimate

    n_failed = int(np.isnan(out).sum())
    if n_failed > MAX_FAILURE_SHARE * B:
        raise CalibrationUnstableError(
            f"{n_failed} of {B} null refits failed (limit {MAX_FAILURE_SHARE:.0%})"
        )
    return out


def calibrate(observed: FitResult | float, null_estimates: Sequence[float]) -> CalibrationResult:
    """Subtract the mean null estimate and compute a two-sided permutation p-value.

    ``p = (1 + #{i: |e_i - b| >= |beta - b|}) / (B_ok + 1)``, where ``NaN``
    entries (failed refits) are excluded from ``B_ok``.
    """
    beta = observed.estimate if isinstance(observed, FitResult) else float(observed)
    null = np.asarray(null_estimates, dtype=float)
    ok = null[np.isfinite(null)]
    if ok.size == 0:
        raise NoReferenceError("no successful null estimates")
    if ok.size < 2:
        raise NoReferenceError("need at least 2 successful null estimates")
    b_hat = math.fsum(ok) / ok.size
    dev = abs(beta - b_hat)
    extreme = int(np.sum(np.abs(ok - b_hat) >= dev))
    return CalibrationResult(
        b_hat=b_hat,
        null_estimates=null,
        beta_obs=beta,
        beta_cal=beta - b_hat,
        perm_sd=float(np.std(ok, ddof=1)),
        p_perm=(1 + extreme) / (ok.size + 1),
        B_requested=int(null.size),
        B_successful=int(ok.size),
    )
