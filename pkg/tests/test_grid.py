import datetime as dt

import numpy as np
import pytest

from casecross.design import Event, EventList
from casecross.errors import DataError, ParseError
from casecross.grid import (
    SEASONS,
    Cohort,
    GridSpec,
    parse_predicate,
    run_grid,
    season_of,
    summarize_grid,
)
from casecross.series import StudyCalendar
from casecross.simulate import generate_synthetic_events, generate_synthetic_series

PERIOD = StudyCalendar(dt.date(2000, 4, 1), dt.date(2010, 3, 31))


@pytest.fixture(scope="module")
def small_grid():
    rng = np.random.default_rng(17)
    exposures = {
        name: generate_synthetic_series(1.0, 0.5, 1.0, 0.3, PERIOD, rng, name=name)
        for name in ("co", "o3")
    }
    events = generate_synthetic_events(PERIOD, 1500, np.random.default_rng(18))
    cohorts = [Cohort("AMI"), Cohort("Male", "sex == M"), Cohort("Rare", "dysrhythmia == Y & age > 90")]
    spec = GridSpec(cohorts, exposures, lags=(0, 2), min_events=30)
    return spec, events, run_grid(spec, events)


def test_season_examples():
    assert season_of(dt.date(2005, 6, 15)) == "Summer"
    assert season_of(dt.date(2001, 12, 1)) == "Winter"


def test_seasons_partition_months():
    seen = [season_of(dt.date(2001, m, 1)) for m in range(1, 13)]
    assert sorted(set(seen)) == ["Autumn", "Spring", "Summer", "Winter"]
    assert all(seen.count(s) == 3 for s in set(seen))


def test_predicates():
    attrs = {"sex": "M", "age": "71", "subtype": "STEMI"}
    assert parse_predicate("*")(attrs)
    assert parse_predicate("sex == M")(attrs)
    assert not parse_predicate("sex != M")(attrs)
    assert parse_predicate("age >= 70 & subtype = STEMI")(attrs)
    assert not parse_predicate("age < 9")(attrs)  # numeric, not lexical
    assert not parse_predicate("diabetes == Y")(attrs)
    with pytest.raises(ParseError):
        parse_predicate("sex ~ M")


def test_cell_count_and_bonferroni():
    exposures = {f"p{i}": generate_synthetic_series(0, 0, 1, 1, PERIOD, np.random.default_rng(i)) for i in range(5)}
    spec = GridSpec([Cohort(f"c{i}") for i in range(11)], exposures)
    assert spec.n_cells == 11 * 5 * 5 * 5 == 1375
    assert spec.alpha_bonferroni == 0.05 / 1375


def test_spec_validation():
    ex = {"co": generate_synthetic_series(0, 0, 1, 1, PERIOD, np.random.default_rng(0))}
    with pytest.raises(DataError):
        GridSpec([Cohort("a"), Cohort("a")], ex)
    with pytest.raises(DataError):
        GridSpec([Cohort("a")], ex, lags=(5,))
    with pytest.raises(DataError):
        GridSpec([Cohort("a")], ex, seasons=("Monsoon",))
    with pytest.raises(DataError):
        GridSpec([Cohort("a")], ex, models=("model3",))


def test_rows_and_order(small_grid):
    spec, _, rows = small_grid
    assert set(rows) == {"model1", "model2"}
    expected = [
        (c.name, s, p, lag)
        for c in spec.cohorts for s in SEASONS for p in spec.exposures for lag in spec.lags
    ]
    for rs in rows.values():
        assert [(r.cohort, r.season, r.pollutant, r.lag) for r in rs] == expected


def test_season_n_sums_to_all(small_grid):
    spec, _, rows = small_grid
    for rs in rows.values():
        by_key = {(r.cohort, r.season, r.pollutant, r.lag): r.n for r in rs}
        for c in spec.cohorts:
            for p in spec.exposures:
                for lag in spec.lags:
                    parts = sum(by_key[(c.name, s, p, lag)] for s in SEASONS[1:])
                    assert parts == by_key[(c.name, "All", p, lag)]


def test_flags_and_statuses(small_grid):
    spec, _, rows = small_grid
    for rs in rows.values():
        for r in rs:
            assert (not r.flag_bonferroni) or r.flag_01
            assert (not r.flag_01) or r.flag_05
            if r.status == "ok":
                assert r.n >= spec.min_events
                assert r.flag_05 == (r.p <= 0.05)
                assert r.odds_ratio == pytest.approx(np.exp(r.estimate))
            else:
                assert np.isnan(r.p) and not r.flag_05
    statuses = {r.status for r in rows["model1"]}
    assert "ok" in statuses and "underpowered" in statuses


def test_cohort_n_matches_filter(small_grid):
    spec, events, rows = small_grid
    n_male = sum(e.attributes["sex"] == "M" for e in events.events)
    row = next(r for r in rows["model1"] if r.cohort == "Male" and r.season == "All" and r.lag == 0)
    assert row.n == n_male  # complete series: nothing dropped at lag 0


def test_lag_pushes_early_events_out():
    ex = {"co": generate_synthetic_series(1, 0, 1, 1, PERIOD, np.random.default_rng(0))}
    dates = [dt.date(2000, 4, 1)] + [PERIOD.dates[i] for i in range(100, 3600, 200)]
    events = EventList(tuple(Event(d) for d in dates))
    rows = run_grid(GridSpec([Cohort("all")], ex, seasons=("All",), lags=(0, 1), min_events=5), events)
    n = [r.n for r in rows["model1"]]
    assert n == [len(dates), len(dates) - 1]


def test_summary_counts(small_grid):
    _, _, rows = small_grid
    summ = summarize_grid(rows)
    ok = [r for r in rows["model1"] if r.status == "ok"]
    assert summ["model1_positive"] + summ["model1_negative"] == len(ok)
    assert summ["model1_p05"] >= summ["model1_p01"] >= summ["model1_bonferroni"]
    assert -1.0 <= summ["estimate_correlation"] <= 1.0
