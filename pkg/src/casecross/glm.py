"""Unconditional logistic regression by Newton-Raphson with Wald inference.

Model 1 regresses the hazard indicator on exposure alone. Model 2 adds the
yearly, monthly and weekly trend components; model 3 swaps exposure for the
daily component. Because exposure is the sum of the four components,
models 2 and 3 are reparameterizations of each other and share their
exposure/daily coefficient, its standard error and the log-likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .design import CaseCrossoverTable
from .errors import (
    CollinearityError,
    DataError,
    DegenerateInferenceError,
    EmptyTableError,
    SeparationError,
)

__all__ = [
    "ModelSpec",
    "FitResult",
    "Wald",
    "fit_logistic",
    "fit_design",
    "wald_inference",
    "log_likelihood",
    "score",
    "Z95",
]

Z95 = 1.959964
SCORE_TOL = 1e-8
REL_LL_TOL = 1e-10
MAX_ITER = 50
SEPARATION_BOUND = 15.0
MAX_HALVINGS = 40
LL_NOISE = 1e-13

_BASE_COLUMNS = {
    "model1": ("exposure",),
    "model2": ("exposure", "yearly", "monthly", "weekly"),
    "model3": ("daily", "yearly", "monthly", "weekly"),
}


@dataclass(frozen=True)
class ModelSpec:
    """Which columns enter the linear predictor (an intercept is always added).

    ``covariate_names`` are appended to the kind's base columns. For
    ``kind="custom"`` the base columns are ``columns``; the first one is
    the target coefficient.
    """

    kind: str = "model1"
    covariate_names: tuple[str, ...] = ()
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.kind == "custom":
            if not self.columns:
                raise DataError("custom model needs at least one column")
        elif self.kind not in _BASE_COLUMNS:
            raise DataError(f"unknown model kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str, covariates: Sequence[str] = (), columns: Sequence[str] = ()):
        """Accept ``1``/``2``/``3``/``custom`` or ``model1`` etc."""
        text = text.strip().lower()
        kind = f"model{text}" if text in ("1", "2", "3") else text
        return cls(kind, tuple(covariates), tuple(columns))

    def regressors(self) -> tuple[str, ...]:
        base = self.columns if self.kind == "custom" else _BASE_COLUMNS[self.kind]
        return tuple(dict.fromkeys(base + self.covariate_names))

    @property
    def target(self) -> str:
        return self.regressors()[0]


@dataclass(frozen=True)
class FitResult:
    names: tuple[str, ...]
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    log_likelihood: float
    iterations: int
    converged: bool
    score_max: float
    n_obs: int
    target: str
    model: str = "custom"
    covariance: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def z_stats(self) -> dict[str, float]:
        return {n: wald_inference(self, n).z for n in self.names}

    @property
    def p_values(self) -> dict[str, float]:
        return {n: wald_inference(self, n).p for n in self.names}

    @property
    def odds_ratios(self) -> dict[str, tuple[float, float, float]]:
        out = {}
        for n in self.names:
            w = wald_inference(self, n)
            out[n] = (w.odds_ratio, w.ci_low, w.ci_high)
        return out

    @property
    def estimate(self) -> float:
        return self.coefficients[self.target]

    @property
    def se(self) -> float:
        return self.standard_errors[self.target]


class Wald(NamedTuple):
    z: float
    p: float
    odds_ratio: float
    ci_low: float
    ci_high: float


def wald_inference(fit: FitResult, name: str | None = None) -> Wald:
    """z-test, two-sided normal p-value and 95% odds-ratio interval for one coefficient."""
    name = fit.target if name is None else name
    if name not in fit.coefficients:
        raise KeyError(f"no coefficient named {name!r}; have {list(fit.names)}")
    beta = fit.coefficients[name]
    se = fit.standard_errors[name]
    if not (math.isfinite(se) and se > 0.0):
        raise DegenerateInferenceError(f"standard error of {name!r} is {se}")
    z = beta / se
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return Wald(
        z, p, math.exp(beta), math.exp(beta - Z95 * se), math.exp(beta + Z95 * se)
    )


# ---------------------------------------------------------------------------
# likelihood pieces


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    return float(np.dot(y, eta) - np.logaddexp(0.0, eta).sum())


def score(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of the log-likelihood."""
    return X.T @ (y - _expit(X @ beta))


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _dependent_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0.0):
        return [n for n, v in zip(names, norms) if v == 0.0]
    Xs = X / norms
    tol = max(X.shape) * np.finfo(float).eps * 1e3
    kept: list[int] = []
    dependent = []
    for j in range(X.shape[1]):
        trial = Xs[:, kept + [j]]
        sv = np.linalg.svd(trial, compute_uv=False)
        if sv[-1] <= tol * sv[0]:
            dependent.append(names[j])
        else:
            kept.append(j)
    return dependent


def fit_design(
    X: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    target: str | None = None,
    model: str = "custom",
    check_rank: bool = True,
    beta0: np.ndarray | None = None,
    trace: list | None = None,
) -> FitResult:
    """Maximum-likelihood logistic fit of ``y`` on the columns of ``X``.

    Newton steps with step-halving whenever the log-likelihood would drop.
    Stops once the score max-norm is below 1e-8, or when the relative
    log-likelihood change falls below 1e-10 on a halved step (at most 50
    iterations). ``converged`` means the final score max-norm is below 1e-8.
    If ``trace`` is a list, the log-likelihood of every accepted iterate is
    appended to it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = tuple(names)
    n, k = X.shape
    if n == 0:
        raise EmptyTableError("no rows to fit")
    if check_rank:
        if n < k:
            raise CollinearityError(names[n:])
        dep = _dependent_columns(X, names)
        if dep:
            raise CollinearityError(dep)

    if beta0 is None:
        beta = np.zeros(k)
        n1 = y.sum()
        if names and names[0] == "intercept" and 0 < n1 < n:
            beta[0] = math.log(n1 / (n - n1))
    else:
        beta = np.array(beta0, dtype=float)

    ll = log_likelihood(X, y, beta)
    if trace is not None:
        trace.append(ll)
    grad = score(X, y, beta)
    iterations = 0
    while iterations < MAX_ITER and np.max(np.abs(grad)) >= SCORE_TOL:
        iterations += 1
        p = _expit(X @ beta)
        info = X.T @ (X * (p * (1.0 - p))[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise CollinearityError(names) from None
        # near the optimum the true gain drops below the rounding noise of the
        # summed likelihood; a step inside that noise is kept if it shrinks the score
        noise = LL_NOISE * (1.0 + abs(ll))
        grad_norm = np.max(np.abs(grad))
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + t * step
            ll_new = log_likelihood(X, y, cand)
            if ll_new >= ll:
                break
            if ll_new >= ll - noise and np.max(np.abs(score(X, y, cand))) < grad_norm:
                break
            t *= 0.5
        else:
            break  # no ascent possible in floating point; leave as is
        if np.max(np.abs(cand)) > SEPARATION_BOUND and ll_new > ll:
            raise SeparationError(
                "coefficient exceeded |15| while likelihood kept improving "
                "(complete or quasi-complete separation)"
            )
        rel = abs(ll_new - ll) / max(abs(ll), 1e-300)
        beta, ll = cand, ll_new
        if trace is not None:
            trace.append(ll)
        grad = score(X, y, beta)
        # a tiny likelihood gain only ends the loop once Newton has stalled;
        # a full step with score >= 1e-8 left is one iteration from done
        if rel < REL_LL_TOL and t < 1.0:
            break

    score_max = float(np.max(np.abs(grad)))
    p = _expit(X @ beta)
    info = X.T @ (X * (p * (1.0 - p))[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise CollinearityError(names) from None
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        names=names,
        coefficients=dict(zip(names, map(float, beta))),
        standard_errors=dict(zip(names, map(float, se))),
        log_likelihood=ll,
        iterations=iterations,
        converged=score_max < SCORE_TOL,
        score_max=score_max,
        n_obs=n,
        target=target if target is not None else names[-1],
        model=model,
        covariance=cov,
    )


def design_matrix(table: CaseCrossoverTable, spec: ModelSpec) -> tuple[np.ndarray, tuple[str, ...]]:
    cols = spec.regressors()
    X = np.empty((len(table), len(cols) + 1))
    X[:, 0] = 1.0
    for j, name in enumerate(cols, start=1):
        X[:, j] = table.column(name)
    return X, ("intercept",) + cols


def fit_logistic(table: CaseCrossoverTable, spec: ModelSpec = ModelSpec()) -> FitResult:
    """Fit ``spec`` to a case-crossover table (strata are not conditioned on)."""
    if len(table) == 0:
        raise EmptyTableError("table has no rows")
    X, names = design_matrix(table, spec)
    return fit_design(X, table.y, names, target=spec.target, model=spec.kind)
