"""CSV writers for every result type, plus the per-run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .calibrate import CalibrationResult
from .design import CaseCrossoverTable
from .glm import FitResult, wald_inference
from .grid import GRID_COLUMNS, GridRow
from .series import DailySeries, TrendDecomposition
from .simulate import ScenarioSummary

FIT_COLUMNS = ("model", "coef", "estimate", "se", "z", "p", "or", "ci_low", "ci_high", "loglik", "converged")
CALIBRATION_COLUMNS = ("b_hat", "beta_obs", "beta_cal", "perm_sd", "p_perm", "B_requested", "B_successful")
DECOMPOSITION_COLUMNS = ("date", "value", "yearly", "monthly", "weekly", "daily")
SUMMARY_COLUMNS = ("strategy", "rejections", "denominator", "rate", "failures", "mean_estimate", "mc_se")
ESTIMATE_COLUMNS = ("replicate", "strategy", "estimate", "p")


def fmt(x) -> str:
    """Round-trippable text for numbers; empty for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def decomposition_rows(series: DailySeries, decomp: TrendDecomposition):
    for i, day in enumerate(series.calendar.dates):
        yield (day.isoformat(), series.values[i], decomp.yearly[i], decomp.monthly[i],
               decomp.weekly[i], decomp.daily[i])


def table_header(table: CaseCrossoverTable) -> tuple[str, ...]:
    return ("stratum", "date", "y", "exposure", "yearly", "monthly", "weekly", "daily",
            *table.covariates)


def table_rows(table: CaseCrossoverTable):
    covs = list(table.covariates.values())
    for k, day in enumerate(table.dates):
        yield (table.stratum[k], day.isoformat(), table.y[k], table.exposure[k],
               table.yearly[k], table.monthly[k], table.weekly[k], table.daily[k],
               *(c[k] for c in covs))


def fit_rows(fit: FitResult):
    for name in fit.names:
        est = fit.coefficients[name]
        se = fit.standard_errors[name]
        try:
            w = wald_inference(fit, name)
            z, p, o, lo, hi = w
        except ArithmeticError:
            z = p = o = lo = hi = math.nan
        yield (fit.model, name, est, se, z, p, o, lo, hi, fit.log_likelihood, fit.converged)


def calibration_row(cal: CalibrationResult):
    return (cal.b_hat, cal.beta_obs, cal.beta_cal, cal.perm_sd, cal.p_perm,
            cal.B_requested, cal.B_successful)


def scenario_summary_rows(summary: ScenarioSummary):
    for name, res in summary.results.items():
        yield (name, res.rejections, res.denominator, res.rate, res.failures,
               res.mean_estimate, res.mc_se)


def scenario_estimate_rows(summary: ScenarioSummary):
    n = summary.spec.n_reps
    for r in range(n):
        for name, res in summary.results.items():
            yield (r, name, res.estimates[r], res.p_values[r])


def grid_rows(rows: Sequence[GridRow]):
    return (r.as_record() for r in rows)


def write_grid(path, rows: Sequence[GridRow]) -> Path:
    return write_csv(path, GRID_COLUMNS, grid_rows(rows))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, manifest: Mapping) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def input_digests(paths: Iterable) -> dict[str, str]:
    return {os.fspath(p): file_digest(p) for p in paths if p is not None}
