import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casecross.design import (
    EventList,
    build_table,
    build_table_from_hazards,
    load_events,
    referent_days,
)
from casecross.errors import AllMissingError, DataError, EmptyTableError, ParseError
from casecross.series import DailySeries, StudyCalendar, decompose
from casecross.simulate import generate_synthetic_series

PERIOD = StudyCalendar(dt.date(2000, 4, 1), dt.date(2010, 3, 31))


def brute_referents(day):
    """Scan every day of the month by hand."""
    out = []
    d = dt.date(day.year, day.month, 1)
    while d.month == day.month:
        if d.weekday() == day.weekday() and d != day:
            out.append(d)
        d += dt.timedelta(1)
    return out


_s = generate_synthetic_series(1.0, 0.5, 1.0, 0.25, PERIOD, np.random.default_rng(11))
_COMPLETE = (_s, decompose(_s))


@pytest.fixture(scope="module")
def complete():
    return _COMPLETE


def with_missing(series, days):
    vals = series.values.copy()
    for d in days:
        vals[series.calendar.index_of(d)] = np.nan
    s = DailySeries(series.calendar, vals)
    return s, decompose(s)


# -- referents --------------------------------------------------------------------


def test_referents_june_2005():
    assert referent_days(dt.date(2005, 6, 15)) == [
        dt.date(2005, 6, 1), dt.date(2005, 6, 8), dt.date(2005, 6, 22), dt.date(2005, 6, 29)
    ]


def test_february_2001_has_three_referents():
    for day in range(1, 29):
        assert len(referent_days(dt.date(2001, 2, day))) == 3


@settings(max_examples=300, deadline=None)
@given(st.dates(dt.date(1990, 1, 1), dt.date(2030, 12, 31)))
def test_referents_match_brute_force(day):
    refs = referent_days(day)
    assert refs == brute_referents(day)
    assert day not in refs and len(refs) in (3, 4)


# -- build_table ------------------------------------------------------------------


def test_single_event_with_lag_two(complete):
    s, d = complete
    t = build_table(EventList.from_dates([dt.date(2005, 6, 17)], lag=2), s, d)
    assert len(t) == 5 and t.n_strata == 1
    assert int(t.y.sum()) == 1
    assert t.dates[int(np.flatnonzero(t.y)[0])] == dt.date(2005, 6, 15)
    assert t.dates == sorted(t.dates)


def test_missing_hazard_drops_stratum(complete):
    s, _ = complete
    s2, d2 = with_missing(s, [dt.date(2005, 6, 15)])
    ev = EventList.from_dates([dt.date(2005, 6, 15), dt.date(2005, 7, 4)])
    t = build_table(ev, s2, d2)
    assert t.n_strata == 1 and t.dropped_strata == 1
    assert np.all(t.stratum == 1)


def test_missing_referent_drops_only_that_row(complete):
    s, _ = complete
    s2, d2 = with_missing(s, [dt.date(2005, 6, 8)])
    t = build_table(EventList.from_dates([dt.date(2005, 6, 15)]), s2, d2)
    assert len(t) == 4 and t.dropped_rows == 1 and t.dropped_strata == 0
    assert dt.date(2005, 6, 8) not in t.dates


def test_all_missing_and_empty(complete):
    s, _ = complete
    s2, d2 = with_missing(s, [dt.date(2005, 6, 15)])
    with pytest.raises(AllMissingError):
        build_table(EventList.from_dates([dt.date(2005, 6, 15)]), s2, d2)
    with pytest.raises(EmptyTableError):
        build_table(EventList.from_dates([]), *complete)


def test_out_of_window_events_are_counted(complete):
    s, d = complete
    ev = EventList.from_dates([dt.date(2000, 4, 2), dt.date(2005, 6, 15)], lag=3)
    t = build_table(ev, s, d)
    assert t.out_of_window == 1 and t.n_strata == 1 and t.dropped_strata == 0


def test_five_thousand_events(complete):
    s, d = complete
    rng = np.random.default_rng(5)
    hazards = rng.integers(0, PERIOD.n_days, 5000)
    t = build_table_from_hazards(hazards, s, d)
    assert t.n_strata == 5000
    sizes = np.bincount(t.stratum, minlength=5000)
    assert set(np.unique(sizes)) <= {4, 5}


def assert_stratum_purity(t):
    for k in np.unique(t.stratum):
        rows = np.flatnonzero(t.stratum == k)
        assert int(t.y[rows].sum()) == 1
        assert len(rows) - 1 in (3, 4)
        days = [t.dates[i] for i in rows]
        assert len({(x.year, x.month, x.weekday()) for x in days}) == 1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, PERIOD.n_days - 1), min_size=1, max_size=40))
def test_table_properties(hazards):
    s, d = _COMPLETE
    t1 = build_table_from_hazards(np.array(hazards), s, d)
    t2 = build_table_from_hazards(np.array(hazards), s, d)
    assert_stratum_purity(t1)
    recon = t1.yearly + t1.monthly + t1.weekly + t1.daily
    assert np.max(np.abs(recon - t1.exposure)) < 1e-10
    for name in ("stratum", "day_index", "y", "exposure", "daily"):
        np.testing.assert_array_equal(getattr(t1, name), getattr(t2, name))


def test_covariate_missing_drops_row(complete):
    s, d = complete
    temp_vals = np.ones(PERIOD.n_days)
    temp_vals[PERIOD.index_of(dt.date(2005, 6, 22))] = np.nan
    temp = DailySeries(PERIOD, temp_vals, name="temp")
    t = build_table(EventList.from_dates([dt.date(2005, 6, 15)]), s, d, {"temp": temp})
    assert len(t) == 4 and "temp" in t.column_names
    assert np.all(t.column("temp") == 1.0)


# -- events -----------------------------------------------------------------------


def test_load_events_keeps_attributes():
    ev = load_events(io.StringIO("date,sex,subtype\n2005-06-17,M,STEMI\n2006-01-02,F,NSTEMI\n"), lag=2)
    assert len(ev) == 2 and ev.lag == 2
    assert ev.events[0].attributes == {"sex": "M", "subtype": "STEMI"}
    assert ev.hazard_days()[0] == dt.date(2005, 6, 15)


def test_load_events_errors():
    with pytest.raises(ParseError):
        load_events(io.StringIO("day,sex\n2005-06-17,M\n"))
    with pytest.raises(ParseError):
        load_events(io.StringIO("date\n17/06/2005\n"))


@pytest.mark.parametrize("lag", [-1, 5])
def test_lag_outside_range(lag):
    with pytest.raises(DataError):
        EventList.from_dates([dt.date(2005, 6, 17)], lag=lag)
