"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import logging
import math
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import DEFAULT_B, NULL_METHODS, calibrate, permute_null_fits
from .config import as_bool, as_list, read_config
from .design import EventList, build_table, load_events, referent_days
from .errors import DataError, NumericalError, ParseError
from .export import (
    CALIBRATION_COLUMNS,
    DECOMPOSITION_COLUMNS,
    ESTIMATE_COLUMNS,
    FIT_COLUMNS,
    SUMMARY_COLUMNS,
    calibration_row,
    decomposition_rows,
    fit_rows,
    input_digests,
    scenario_estimate_rows,
    scenario_summary_rows,
    table_header,
    table_rows,
    write_csv,
    write_grid,
    write_manifest,
)
from .glm import ModelSpec, fit_logistic
from .grid import SEASONS, Cohort, GridSpec, run_grid, summarize_grid
from .series import StudyCalendar, decompose, iqr_standardize, load_columns
from .simulate import (
    STRATEGIES,
    ScenarioSpec,
    generate_synthetic_events,
    generate_synthetic_series,
    run_scenario,
)

log = logging.getLogger("casecross")

COMMANDS = ("decompose", "referents", "analyze", "calibrate", "simulate", "grid", "synth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="casecross", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}",
                           parser_class=_Parser)
    sub.required = True

    def period(sp):
        sp.add_argument("--start", type=_date, help="study start (default: first date in file)")
        sp.add_argument("--end", type=_date, help="study end (default: last date in file)")

    d = sub.add_parser("decompose", help="IQR-standardize and decompose a daily series")
    d.add_argument("--input", required=True)
    d.add_argument("--column")
    d.add_argument("--no-standardize", action="store_true")
    period(d)
    d.add_argument("--out", required=True)

    r = sub.add_parser("referents", help="list time-stratified referent days")
    r.add_argument("--date", type=_date, action="append", required=True)
    r.add_argument("--out")

    for name, helptext in (("analyze", "build the case-crossover table and fit a model"),
                           ("calibrate", "fit a model and calibrate it by permutation")):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("--input", required=True, help="daily exposure CSV")
        a.add_argument("--column", required=True, help="exposure column in --input")
        a.add_argument("--events", required=True)
        a.add_argument("--lag", type=int, default=0, choices=range(5))
        a.add_argument("--model", default="2", choices=["1", "2", "3", "custom"])
        a.add_argument("--columns", default="", help="regressors for --model custom")
        a.add_argument("--covariates", default="", help="extra columns of --input, comma separated")
        a.add_argument("--no-standardize", action="store_true")
        period(a)
        a.add_argument("--out", required=True)
        if name == "calibrate":
            a.add_argument("--B", type=int, default=DEFAULT_B)
            a.add_argument("--seed", type=int)
            a.add_argument("--null", default="daily", choices=NULL_METHODS)

    s = sub.add_parser("simulate", help="run a size/power scenario from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="overrides the config seed")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)

    g = sub.add_parser("grid", help="run the cohort x season x lag x exposure grid")
    g.add_argument("--events", required=True)
    g.add_argument("--config", required=True)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--out", required=True)

    y = sub.add_parser("synth", help="write synthetic exposure series (and events)")
    y.add_argument("--seed", type=int)
    y.add_argument("--start", type=_date, default=dt.date(2000, 4, 1))
    y.add_argument("--end", type=_date, default=dt.date(2010, 3, 31))
    y.add_argument("--columns", default="synthetic", help="one synthetic series per name")
    y.add_argument("--year-amp", type=float, default=1.0)
    y.add_argument("--month-amp", type=float, default=0.5)
    y.add_argument("--week-amp", type=float, default=1.0)
    y.add_argument("--noise-sd", type=float, default=0.25)
    y.add_argument("--level", type=float, default=0.0)
    y.add_argument("--events", type=int, default=0, help="also write N synthetic events")
    y.add_argument("--out", required=True)
    return p


# ---------------------------------------------------------------------------


def _calendar(args) -> StudyCalendar | None:
    if args.start is None and args.end is None:
        return None
    if args.start is None or args.end is None:
        raise UsageError("--start and --end must be given together")
    return StudyCalendar(args.start, args.end)


def _seed(value) -> int:
    return int(value) if value is not None else secrets.randbelow(2**31)


def _load_analysis_inputs(args):
    covs = as_list(args.covariates)
    cols = [args.column] + [c for c in covs if c != args.column]
    loaded = load_columns(args.input, cols, _calendar(args))
    series = loaded[args.column]
    iqr = None
    if not args.no_standardize:
        series, iqr = iqr_standardize(series)
    decomp = decompose(series)
    events = load_events(args.events, lag=args.lag)
    cov_series = {c: loaded[c] for c in covs}
    table = build_table(events, series, decomp, cov_series)
    spec = ModelSpec.parse(args.model, covs, as_list(args.columns))
    return series, decomp, table, spec, cov_series, iqr


def cmd_decompose(args, manifest):
    loaded = load_columns(args.input, [args.column] if args.column else None, _calendar(args))
    if len(loaded) != 1:
        raise UsageError(f"--column required; file has columns {list(loaded)}")
    series = next(iter(loaded.values()))
    if not args.no_standardize:
        series, iqr = iqr_standardize(series)
        manifest["iqr"] = iqr
    decomp = decompose(series)
    write_csv(Path(args.out) / "decomposition.csv", DECOMPOSITION_COLUMNS,
              decomposition_rows(series, decomp))
    manifest["inputs"] = input_digests([args.input])


def cmd_referents(args, manifest):
    rows = [(h.isoformat(), r.isoformat()) for h in args.date for r in referent_days(h)]
    if args.out:
        write_csv(Path(args.out) / "referents.csv", ("hazard_date", "referent_date"), rows)
    else:
        for h in args.date:
            print(h.isoformat() + ": " + " ".join(r.isoformat() for r in referent_days(h)))


def cmd_analyze(args, manifest):
    series, decomp, table, spec, cov_series, iqr = _load_analysis_inputs(args)
    fit = fit_logistic(table, spec)
    out = Path(args.out)
    write_csv(out / "table.csv", table_header(table), table_rows(table))
    write_csv(out / "fit.csv", FIT_COLUMNS, fit_rows(fit))
    manifest.update(
        inputs=input_digests([args.input, args.events]), iqr=iqr,
        strata=table.n_strata, dropped_strata=table.dropped_strata,
        dropped_rows=table.dropped_rows, out_of_window=table.out_of_window,
    )
    return fit, table, series, decomp, spec, cov_series


def cmd_calibrate(args, manifest):
    if args.B < 2:
        raise UsageError("--B must be at least 2")
    fit, table, series, decomp, spec, cov_series = cmd_analyze(args, manifest)
    seed = _seed(args.seed)
    manifest["seed"] = seed
    null = permute_null_fits(
        table, series, decomp, spec, args.B, seed, method=args.null, covariates=cov_series
    )
    cal = calibrate(fit, null)
    out = Path(args.out)
    write_csv(out / "calibration.csv", CALIBRATION_COLUMNS, [calibration_row(cal)])
    write_csv(out / "null_estimates.csv", ("iteration", "estimate"), enumerate(cal.null_estimates))


def _resolve(base: Path, name: str) -> Path:
    path = Path(name)
    return path if path.is_absolute() else base / path


def cmd_simulate(args, manifest):
    cfg_path = Path(args.config)
    cfg = read_config(cfg_path)
    known = {"pollutant_file", "column", "beta", "gamma", "n_events", "n_reps", "strategies",
             "alpha0", "seed", "B", "null_method", "standardize", "year_amp", "month_amp",
             "week_amp", "noise_sd", "start", "end"}
    unknown = set(cfg) - known
    if unknown:
        raise ParseError(f"unknown scenario keys: {sorted(unknown)}")
    seed = _seed(args.seed if args.seed is not None else cfg.get("seed"))
    manifest["seed"] = seed
    try:
        spec = ScenarioSpec(
            beta=float(cfg.get("beta", 0.0)),
            gamma=float(cfg.get("gamma", 0.0)),
            n_events=int(cfg.get("n_events", 5000)),
            n_reps=int(cfg.get("n_reps", 1000)),
            strategies=cfg.get("strategies", ",".join(STRATEGIES)),
            alpha0=float(cfg.get("alpha0", 0.05)),
            master_seed=seed,
            B=int(cfg.get("B", DEFAULT_B)),
            null_method=cfg.get("null_method", "daily"),
        )
    except ValueError as exc:
        raise ParseError(f"bad scenario value: {exc}") from None

    inputs = [cfg_path]
    if "pollutant_file" in cfg:
        pfile = _resolve(cfg_path.parent, cfg["pollutant_file"])
        inputs.append(pfile)
        cal = None
        if "start" in cfg and "end" in cfg:
            cal = StudyCalendar(_date(cfg["start"]), _date(cfg["end"]))
        loaded = load_columns(pfile, [cfg["column"]] if "column" in cfg else None, cal)
        if len(loaded) != 1:
            raise ParseError(f"set 'column'; pollutant file has {list(loaded)}")
        series = next(iter(loaded.values()))
    else:
        cal = StudyCalendar(_date(cfg.get("start", "2000-04-01")), _date(cfg.get("end", "2010-03-31")))
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        series = generate_synthetic_series(
            float(cfg.get("year_amp", 1.0)), float(cfg.get("month_amp", 0.5)),
            float(cfg.get("week_amp", 1.0)), float(cfg.get("noise_sd", 0.25)), cal, rng,
        )
    if as_bool(cfg.get("standardize", "true")):
        series, manifest["iqr"] = iqr_standardize(series)
    decomp = decompose(series)
    summary = run_scenario(spec, series, decomp, jobs=args.jobs)
    out = Path(args.out)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, scenario_summary_rows(summary))
    write_csv(out / "estimates.csv", ESTIMATE_COLUMNS, scenario_estimate_rows(summary))
    manifest.update(
        inputs=input_digests(inputs), scenario=dict(spec.__dict__),
        replicate_failures=len(summary.errors),
    )


def cmd_grid(args, manifest):
    cfg_path = Path(args.config)
    cfg = read_config(cfg_path)
    if "pollutant_file" not in cfg:
        raise ParseError("grid config needs 'pollutant_file'")
    pfile = _resolve(cfg_path.parent, cfg["pollutant_file"])
    cal = None
    if "start" in cfg and "end" in cfg:
        cal = StudyCalendar(_date(cfg["start"]), _date(cfg["end"]))
    exposures = load_columns(pfile, as_list(cfg["exposures"]) if "exposures" in cfg else None, cal)
    cohorts = [Cohort(k.split(".", 1)[1], v) for k, v in cfg.items() if k.startswith("cohort.")]
    if not cohorts:
        cohorts = [Cohort("Whole", "*")]
    season_months = {}
    for k, v in cfg.items():
        if k.startswith("season."):
            season_months[k.split(".", 1)[1]] = tuple(int(m) for m in as_list(v))
    try:
        spec = GridSpec(
            cohorts=cohorts,
            exposures=exposures,
            seasons=tuple(as_list(cfg.get("seasons", ",".join(SEASONS)))),
            lags=tuple(int(x) for x in as_list(cfg.get("lags", "0,1,2,3,4"))),
            models=tuple(as_list(cfg.get("models", "1,2"))),
            alpha0=float(cfg.get("alpha0", 0.05)),
            min_events=int(cfg.get("min_events", 10)),
            standardize=as_bool(cfg.get("standardize", "true")),
            **({"season_months": season_months} if season_months else {}),
        )
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise ParseError(f"bad grid value: {exc}") from None
    events = load_events(args.events)
    rows = run_grid(spec, events, jobs=args.jobs)
    name = cfg.get("name", "grid")
    out = Path(args.out)
    for model, rs in rows.items():
        write_grid(out / f"Est-{name}-{model}.csv", rs)
    summary = summarize_grid(rows)
    summary["n_cells"] = spec.n_cells
    summary["alpha_bonferroni"] = spec.alpha_bonferroni
    write_csv(out / "grid_summary.csv", ("key", "value"), sorted(summary.items()))
    manifest.update(
        inputs=input_digests([cfg_path, pfile, args.events]),
        n_cells=spec.n_cells, alpha_bonferroni=spec.alpha_bonferroni,
        bonferroni_rule=f"{spec.alpha0}/{spec.n_cells}",
    )


def cmd_synth(args, manifest):
    seed = _seed(args.seed)
    manifest["seed"] = seed
    if args.start > args.end:
        raise UsageError("--start is after --end")
    cal = StudyCalendar(args.start, args.end)
    names = as_list(args.columns) or ["synthetic"]
    columns = {}
    for k, name in enumerate(names):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, k]))
        columns[name] = generate_synthetic_series(
            args.year_amp, args.month_amp, args.week_amp, args.noise_sd, cal, rng,
            level=args.level, name=name,
        ).values
    out = Path(args.out)
    write_csv(out / "series.csv", ("date", *names),
              ((d.isoformat(), *(columns[n][i] for n in names)) for i, d in enumerate(cal.dates)))
    if args.events > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        ev = generate_synthetic_events(cal, args.events, rng)
        keys = list(ev.events[0].attributes)
        write_csv(out / "events.csv", ("date", *keys),
                  ((e.date.isoformat(), *(e.attributes[k] for k in keys)) for e in ev.events))


HANDLERS = {
    "decompose": cmd_decompose,
    "referents": cmd_referents,
    "analyze": cmd_analyze,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "grid": cmd_grid,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    manifest = {
        "command": args.command,
        "parameters": {k: v for k, v in vars(args).items() if k not in ("verbose",)},
        "version": __version__,
    }
    t0 = time.perf_counter()
    try:
        HANDLERS[args.command](args, manifest)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"casecross: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"casecross: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"casecross: numerical failure: {exc}", file=sys.stderr)
        return 3
    manifest["duration_s"] = round(time.perf_counter() - t0, 3)
    out = getattr(args, "out", None)
    if out:
        write_manifest(out, manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
