"""Regression battery: linear, logistic, and modified Poisson fits.

All three families share one inference convention: Wald confidence intervals
and two-sided p-values against the standard normal reference.  The modified
Poisson fit (log link on a binary response) reports the HC0 sandwich standard
error so that exp(estimate) is a risk ratio with valid inference even though
the Poisson variance model is wrong for 0/1 data.

Fits are pure functions of their inputs; nothing here draws random numbers,
so the per-outcome fits of a run can execute concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .data_model import BINARY, CONTINUOUS, Dataset
from .errors import (
    ConvergenceError,
    NumericalError,
    RankDeficiencyError,
    SeparationError,
    ValidationError,
)

RANK_TOL = 1e-10
SCORE_TOL = 1e-8
MAX_ITER = 100
SEPARATION_COEF = 15.0

SCALE_BY_FAMILY = {
    "linear": "mean_difference",
    "logistic": "log_odds",
    "poisson_robust": "log_risk",
}


@dataclass
class DesignMatrix:
    """Regressor matrix with the intercept first and exposure term(s) next.

    ``matrix`` holds every row of the source data (NaN where a regressor is
    missing); ``complete_mask`` flags the rows with no missing regressor.
    Rank is checked on the complete rows at construction.
    """

    matrix: np.ndarray
    column_names: list[str]
    exposure_columns: tuple[int, ...]
    complete_mask: np.ndarray

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def rows(self, extra_mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Complete-row submatrix, optionally intersected with ``extra_mask``."""
        keep = self.complete_mask if extra_mask is None else (self.complete_mask & extra_mask)
        return self.matrix[keep], keep


@dataclass
class FitResult:
    """One exposure-term coefficient with its Wald inference."""

    estimate: float
    se: float
    ci: tuple[float, float]
    p_value: float
    scale: str
    family: str
    n_used: int
    converged: bool
    iterations: int
    term: str = ""


def _expand_column(col, reference=None) -> tuple[list[np.ndarray], list[str]]:
    if col.kind in (CONTINUOUS, BINARY):
        vals = np.where(col.missing_mask, np.nan, col.values.astype(float))
        return [vals], [col.name]
    levels = list(col.levels or ())
    if len(levels) < 2:
        raise ValidationError(f"categorical column {col.name!r} has fewer than 2 levels")
    ref = reference if reference is not None else levels[0]
    if ref not in levels:
        raise ValidationError(f"reference level {ref!r} not among levels of {col.name!r}")
    arrays, names = [], []
    for level in levels:
        if level == ref:
            continue
        ind = np.array([1.0 if (not m and v == level) else 0.0
                        for v, m in zip(col.values, col.missing_mask)])
        ind[col.missing_mask] = np.nan
        arrays.append(ind)
        names.append(f"{col.name}[{level} vs {ref}]")
    return arrays, names


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0 or s[-1] / s[0] < RANK_TOL:
        _, _, pivots = scipy.linalg.qr(X, mode="economic", pivoting=True)
        rank = int(np.sum(s > RANK_TOL * s[0])) if s.size else 0
        dependent = [names[j] for j in pivots[rank:]]
        raise RankDeficiencyError(
            f"design matrix is rank deficient; collinear columns: {dependent}",
            collinear=dependent,
        )


def build_design_matrix(
    dataset: Dataset,
    exposure: str,
    covariates: Sequence[str],
    *,
    reference_levels: dict | None = None,
) -> DesignMatrix:
    """Assemble intercept + exposure term(s) + covariate terms.

    Categorical columns expand to reference-coded indicators (reference is the
    first level unless overridden via ``reference_levels``).  Rows with any
    missing regressor are flagged in ``complete_mask`` for the caller; the
    full-rank check runs on the complete rows and, on failure, names the
    collinear column set.
    """
    refs = reference_levels or {}
    arrays: list[np.ndarray] = [np.ones(dataset.n_rows)]
    names: list[str] = ["(intercept)"]
    exp_arrays, exp_names = _expand_column(dataset.column(exposure), refs.get(exposure))
    arrays += exp_arrays
    names += exp_names
    exposure_columns = tuple(range(1, 1 + len(exp_arrays)))
    for cov in covariates:
        a, n = _expand_column(dataset.column(cov), refs.get(cov))
        arrays += a
        names += n
    X = np.column_stack(arrays)
    complete = ~np.isnan(X).any(axis=1)
    if not complete.any():
        raise ValidationError("no rows with complete regressors")
    _check_rank(X[complete], names)
    return DesignMatrix(X, names, exposure_columns, complete)


def _as_matrix(X) -> tuple[np.ndarray, int]:
    """Accept a DesignMatrix (complete rows) or a plain 2-d array."""
    if isinstance(X, DesignMatrix):
        M, _ = X.rows()
        return M, X.exposure_columns[0]
    M = np.asarray(X, dtype=float)
    if M.ndim != 2:
        raise ValidationError("design matrix must be 2-dimensional")
    return M, 1


def wald_inference(estimate: float, se: float, ci_level: float) -> tuple[tuple[float, float], float]:
    """Normal-reference CI and two-sided p-value for one coefficient."""
    if se == 0.0:
        return (estimate, estimate), (1.0 if estimate == 0.0 else 0.0)
    z = norm.ppf(0.5 + ci_level / 2.0)
    half = z * se
    p = 2.0 * norm.sf(abs(estimate) / se)
    return (estimate - half, estimate + half), float(p)


def _coef_inference(beta, cov_diag, j, family, n, converged, iterations, ci_level, term) -> FitResult:
    est = float(beta[j])
    var = float(cov_diag[j])
    se = math.sqrt(max(var, 0.0))
    ci, p = wald_inference(est, se, ci_level)
    return FitResult(est, se, ci, p, SCALE_BY_FAMILY[family], family, n, converged, iterations, term)


def fit_linear(X, y, *, exposure_column: int | None = None, ci_level: float = 0.95) -> FitResult:
    """Ordinary least squares; classical sigma^2 (X'X)^-1 standard errors."""
    M, j = _as_matrix(X)
    if exposure_column is not None:
        j = exposure_column
    y = np.asarray(y, dtype=float)
    n, p = M.shape
    if n <= p:
        raise NumericalError(f"linear fit needs n > p, got n={n}, p={p}")
    beta, *_ = np.linalg.lstsq(M, y, rcond=None)
    resid = y - M @ beta
    sigma2 = float(resid @ resid) / (n - p)
    xtx_inv = np.linalg.inv(M.T @ M)
    cov_diag = sigma2 * np.diag(xtx_inv)
    name = X.column_names[j] if isinstance(X, DesignMatrix) else f"x{j}"
    return _coef_inference(beta, cov_diag, j, "linear", n, True, 0, ci_level, name)


def _logistic_mu(eta):
    mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -35, 35)))
    return np.clip(mu, 1e-12, 1.0 - 1e-12)


def _poisson_mu(eta):
    return np.exp(np.clip(eta, -35, 35))


def _deviance(family, y, mu):
    if family == "logistic":
        return -2.0 * float(y @ np.log(mu) + (1.0 - y) @ np.log(1.0 - mu))
    # Poisson with 0/1 response: y*log(y) terms vanish
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogmu = np.where(y > 0, y * np.log(mu), 0.0)
    return 2.0 * float(np.sum(mu - y - ylogmu) + np.sum(np.where(y > 0, y * np.log(np.maximum(y, 1e-300)), 0.0)))


def _irls(M, y, family):
    """Newton scoring with step-halving; converges on max |score| < 1e-8."""
    n, p = M.shape
    beta = np.zeros(p)
    mean_y = float(np.mean(y))
    if family == "logistic":
        if mean_y <= 0.0 or mean_y >= 1.0:
            raise NumericalError("logistic fit needs a non-constant 0/1 response")
        beta[0] = math.log(mean_y / (1.0 - mean_y))
        mu_fn = _logistic_mu
    else:
        if mean_y <= 0.0:
            raise NumericalError("poisson fit needs at least one event")
        beta[0] = math.log(mean_y)
        mu_fn = _poisson_mu

    eta = M @ beta
    mu = mu_fn(eta)
    dev = _deviance(family, y, mu)
    converged = False
    iterations = 0
    for iterations in range(1, MAX_ITER + 1):
        score = M.T @ (y - mu)
        if np.max(np.abs(score)) < SCORE_TOL:
            converged = True
            iterations -= 1
            break
        w = mu * (1.0 - mu) if family == "logistic" else mu
        info = M.T @ (M * w[:, None])
        try:
            delta = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        for _ in range(30):
            cand = beta + step * delta
            mu_c = mu_fn(M @ cand)
            dev_c = _deviance(family, y, mu_c)
            if dev_c <= dev + 1e-12:
                beta, mu, dev = cand, mu_c, dev_c
                break
            step *= 0.5
        else:
            break
    else:
        score = M.T @ (y - mu)
        converged = bool(np.max(np.abs(score)) < SCORE_TOL)
        iterations = MAX_ITER

    score = M.T @ (y - mu)
    diag = {
        "iterations": iterations,
        "max_abs_score": float(np.max(np.abs(score))),
        "deviance": dev,
        "beta": beta.tolist(),
    }
    # a diverging logistic coefficient means the MLE sits at infinity; the
    # clipped mean can make the score criterion pass, so check either way
    if family == "logistic" and np.max(np.abs(beta)) > SEPARATION_COEF:
        raise SeparationError(
            "complete or quasi-complete separation detected "
            f"(|coefficient| > {SEPARATION_COEF:g})",
            diagnostics=diag,
        )
    if not converged:
        raise ConvergenceError(
            f"{family} fit did not converge in {MAX_ITER} iterations "
            f"(max |score| = {diag['max_abs_score']:.3g})",
            diagnostics=diag,
        )
    return beta, mu, iterations


def fit_logistic(X, y, *, exposure_column: int | None = None, ci_level: float = 0.95) -> FitResult:
    """Maximum-likelihood logistic regression via IRLS.

    Standard errors come from the inverse observed information at the
    optimum.  Failure to converge with any |coefficient| > 15 is reported as
    separation rather than returned as a huge estimate.
    """
    M, j = _as_matrix(X)
    if exposure_column is not None:
        j = exposure_column
    y = np.asarray(y, dtype=float)
    beta, mu, iterations = _irls(M, y, "logistic")
    w = mu * (1.0 - mu)
    cov = np.linalg.inv(M.T @ (M * w[:, None]))
    name = X.column_names[j] if isinstance(X, DesignMatrix) else f"x{j}"
    return _coef_inference(beta, np.diag(cov), j, "logistic", M.shape[0], True, iterations, ci_level, name)


def fit_modified_poisson(X, y, *, exposure_column: int | None = None, ci_level: float = 0.95) -> FitResult:
    """Poisson log-link fit on a binary response with HC0 sandwich variance.

    Bread is the inverse information, meat the outer product of per-row
    scores; exp(estimate) is then a risk ratio for common outcomes.
    """
    M, j = _as_matrix(X)
    if exposure_column is not None:
        j = exposure_column
    y = np.asarray(y, dtype=float)
    beta, mu, iterations = _irls(M, y, "poisson")
    info = M.T @ (M * mu[:, None])
    bread = np.linalg.inv(info)
    resid = y - mu
    meat = M.T @ (M * (resid ** 2)[:, None])
    cov = bread @ meat @ bread
    name = X.column_names[j] if isinstance(X, DesignMatrix) else f"x{j}"
    return _coef_inference(beta, np.diag(cov), j, "poisson_robust", M.shape[0], True, iterations, ci_level, name)


def fit_family(family: str, X, y, **kw) -> FitResult:
    fitters = {"linear": fit_linear, "logistic": fit_logistic, "poisson_robust": fit_modified_poisson}
    try:
        fn = fitters[family]
    except KeyError:
        raise ValidationError(f"unknown model family {family!r}") from None
    return fn(X, y, **kw)


def min_detectable_estimate(se: float, alpha: float) -> float:
    """Smallest absolute estimate with two-sided p < alpha at this se."""
    if not se > 0:
        raise ValidationError("se must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    return float(norm.ppf(1.0 - alpha / 2.0) * se)
