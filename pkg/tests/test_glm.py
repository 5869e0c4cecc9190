import datetime as dt
import math

import numpy as np
import pytest
from scipy import stats

from casecross.design import build_table_from_hazards
from casecross.errors import CollinearityError, DegenerateInferenceError, SeparationError
from casecross.glm import (
    LL_NOISE,
    Z95,
    FitResult,
    ModelSpec,
    design_matrix,
    fit_design,
    fit_logistic,
    log_likelihood,
    score,
    wald_inference,
)
from casecross.series import StudyCalendar, decompose
from casecross.simulate import generate_synthetic_series

PERIOD = StudyCalendar(dt.date(2000, 4, 1), dt.date(2010, 3, 31))


def two_by_two(a, b, c, d):
    """Rows for y=1: a exposed, b unexposed; y=0: c exposed, d unexposed."""
    x = np.r_[np.ones(a), np.zeros(b), np.ones(c), np.zeros(d)]
    y = np.r_[np.ones(a + b), np.zeros(c + d)]
    return np.column_stack([np.ones_like(x), x]), y


def closed_form(a, b, c, d):
    return math.log(a * d / (b * c)), math.sqrt(1 / a + 1 / b + 1 / c + 1 / d)


def finite_difference_score(X, y, beta, h=1e-6):
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (log_likelihood(X, y, beta + e) - log_likelihood(X, y, beta - e)) / (2 * h)
    return g


def random_table(seed, n_events=800):
    rng = np.random.default_rng(seed)
    s = generate_synthetic_series(1.0, 0.5, 1.0, 0.3, PERIOD, rng)
    d = decompose(s)
    hazards = rng.integers(0, PERIOD.n_days, n_events)
    return build_table_from_hazards(hazards, s, d)


def test_two_by_two_example():
    X, y = two_by_two(30, 20, 40, 60)
    fit = fit_design(X, y, ("intercept", "exposure"), target="exposure")
    beta, se = closed_form(30, 20, 40, 60)
    assert beta == pytest.approx(0.81093, abs=5e-6)
    assert se == pytest.approx(0.35355, abs=5e-6)
    assert fit.converged and fit.score_max < 1e-8
    assert fit.estimate == pytest.approx(beta, abs=1e-8)
    assert fit.se == pytest.approx(se, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_two_by_two_random(seed):
    rng = np.random.default_rng(seed)
    cells = rng.integers(5, 200, 4)
    X, y = two_by_two(*cells)
    fit = fit_design(X, y, ("intercept", "x"), target="x")
    beta, se = closed_form(*cells)
    assert fit.estimate == pytest.approx(beta, abs=1e-8)
    assert fit.se == pytest.approx(se, abs=1e-8)


def test_constant_exposure_is_collinear():
    X = np.column_stack([np.ones(10), np.full(10, 3.0)])
    y = np.r_[np.ones(3), np.zeros(7)]
    with pytest.raises(CollinearityError) as exc:
        fit_design(X, y, ("intercept", "exposure"))
    assert "exposure" in exc.value.columns
    assert "exposure" in str(exc.value)


def test_separation_detected():
    x = np.arange(20.0)
    X = np.column_stack([np.ones(20), x])
    y = (x >= 10).astype(float)
    with pytest.raises(SeparationError):
        fit_design(X, y, ("intercept", "x"))


@pytest.mark.parametrize("seed", range(4))
def test_model2_equals_model3(seed):
    t = random_table(seed)
    f2 = fit_logistic(t, ModelSpec("model2"))
    f3 = fit_logistic(t, ModelSpec("model3"))
    assert f2.target == "exposure" and f3.target == "daily"
    assert f2.estimate == pytest.approx(f3.estimate, abs=1e-6)
    assert f2.se == pytest.approx(f3.se, abs=1e-6)
    assert f2.log_likelihood == pytest.approx(f3.log_likelihood, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_score_matches_finite_differences(seed):
    t = random_table(seed)
    fit = fit_logistic(t, ModelSpec("model2"))
    X, names = design_matrix(t, ModelSpec("model2"))
    beta = np.array([fit.coefficients[n] for n in names])
    np.testing.assert_allclose(score(X, t.y, beta), finite_difference_score(X, t.y, beta), atol=1e-4)
    # away from the optimum as well
    probe = beta + 0.1
    np.testing.assert_allclose(score(X, t.y, probe), finite_difference_score(X, t.y, probe), atol=1e-4)


def test_likelihood_never_decreases():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(400), rng.normal(size=(400, 3))])
    y = (rng.random(400) < 0.3).astype(float)
    trace = []
    fit_design(X, y, ("intercept", "a", "b", "c"), trace=trace, beta0=np.array([2.0, -1.0, 1.0, 0.5]))
    assert len(trace) >= 3
    diffs = np.diff(trace)
    # accepted steps may only lose within the rounding noise of the summed likelihood
    assert np.all(diffs >= -LL_NOISE * (1.0 + np.abs(np.array(trace[:-1]))))


def test_covariates_appended():
    spec = ModelSpec.parse("2", covariates=["temp"])
    assert spec.regressors() == ("exposure", "yearly", "monthly", "weekly", "temp")
    assert ModelSpec.parse("custom", columns=["daily", "weekly"]).target == "daily"


# -- wald ---------------------------------------------------------------------


def _fit(beta, se, name="x"):
    return FitResult((name,), {name: beta}, {name: se}, 0.0, 1, True, 0.0, 10, name)


def test_wald_example():
    beta, se = closed_form(30, 20, 40, 60)
    w = wald_inference(_fit(beta, se))
    assert w.z == pytest.approx(beta / se, rel=1e-15)
    # the quoted 2.2938 rounds the exact 2.29368 up by one unit in the last place
    assert w.z == pytest.approx(2.2938, abs=2e-4)
    assert w.p == pytest.approx(2 * stats.norm.sf(beta / se), rel=1e-12)
    assert w.p == pytest.approx(0.0218, abs=5e-5)
    assert w.odds_ratio == pytest.approx(2.25, abs=5e-5)
    assert w.ci_low == pytest.approx(1.125, abs=5e-4)
    assert w.ci_high == pytest.approx(4.499, abs=5e-4)


def test_wald_at_zero():
    w = wald_inference(_fit(0.0, 0.2))
    assert w.z == 0.0 and w.p == 1.0 and w.odds_ratio == 1.0
    assert w.ci_low * w.ci_high == pytest.approx(1.0)


def test_reported_interval_consistency():
    # an OR of 1.319 with CI (1.094, 1.591): recover SE from the interval
    beta = math.log(1.319)
    se = (math.log(1.591) - math.log(1.094)) / (2 * Z95)
    w = wald_inference(_fit(beta, se))
    assert w.odds_ratio == pytest.approx(1.319, abs=1e-12)
    assert w.ci_low == pytest.approx(1.094, abs=2e-3)
    assert w.ci_high == pytest.approx(1.591, abs=2e-3)


def test_wald_errors():
    with pytest.raises(KeyError):
        wald_inference(_fit(0.1, 0.1), "nope")
    with pytest.raises(DegenerateInferenceError):
        wald_inference(_fit(0.1, 0.0))
