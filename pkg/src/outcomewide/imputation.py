"""Multiple imputation by chained equations, Rubin pooling, and the
MI-versus-complete-case discrepancy report.

The imputer draws from Bayesian linear models for continuous targets and from
posterior-perturbed (lightly ridged) logistic models for binary and
categorical targets.  Each of the M chains runs on its own derived seed, so
chains are independent and the whole procedure is reproducible.  This is a
conventional chained-equations engine, configurable but deliberately plain:
no predictive mean matching, no not-at-random sensitivity analysis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .data_model import BINARY, CATEGORICAL, CONTINUOUS, Column, Dataset, load_table
from .errors import ValidationError
from .spec import AnalysisSpec
from .utils import derive_seed

MIN_OBSERVED_PER_COLUMN = 20
MISSINGNESS_WARNING_FRACTION = 0.10


class HighMissingnessWarning(UserWarning):
    """More missing data than an automated outcome-wide run comfortably bears."""


@dataclass
class ImputedSet:
    datasets: tuple[Dataset, ...]
    m: int
    provenance: dict

    def __post_init__(self):
        if self.m != len(self.datasets):
            raise ValidationError("ImputedSet: m does not match the number of datasets")
        if not self.datasets:
            raise ValidationError("ImputedSet: empty")
        first = self.datasets[0]
        for ds in self.datasets:
            if ds.names != first.names or ds.n_rows != first.n_rows:
                raise ValidationError("imputed datasets must share schema and row count")
            for col in ds.columns.values():
                if col.n_missing:
                    raise ValidationError(f"imputed dataset still has missing cells in {col.name!r}")


@dataclass
class PooledResult:
    """Rubin's-rules combination of M per-imputation fits."""

    estimate: float
    within_var: float
    between_var: float
    total_var: float
    se: float
    ci: tuple[float, float]
    p_value: float
    scale: str
    family: str
    m: int
    n_used: int
    term: str = ""


def _encode_regressors(working: dict, columns: dict, exclude: str) -> np.ndarray:
    """Intercept + numeric/indicator encoding of every column except ``exclude``."""
    n = len(next(iter(working.values())))
    parts = [np.ones(n)]
    for name, col in columns.items():
        if name == exclude:
            continue
        vals = working[name]
        if col.kind == CATEGORICAL:
            for level in (col.levels or ())[1:]:
                parts.append(np.array([1.0 if v == level else 0.0 for v in vals]))
        else:
            parts.append(np.asarray(vals, dtype=float))
    return np.column_stack(parts)


def _bayes_linear_draw(X, y, rng):
    n, p = X.shape
    xtx = X.T @ X + 1e-8 * np.eye(p)
    xty = X.T @ y
    beta_hat = np.linalg.solve(xtx, xty)
    resid = y - X @ beta_hat
    dof = max(n - p, 1)
    sigma2 = float(resid @ resid) / dof
    sigma2_draw = sigma2 * dof / max(rng.chisquare(dof), 1e-12)
    cov = sigma2_draw * np.linalg.inv(xtx)
    beta_draw = rng.multivariate_normal(beta_hat, (cov + cov.T) / 2.0, method="svd")
    return beta_draw, np.sqrt(sigma2_draw)


def _ridge_logistic(X, y, ridge=1e-6, max_iter=50, tol=1e-6):
    n, p = X.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -35, 35)
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        grad = X.T @ (y - mu) - ridge * beta
        hess = X.T @ (X * w[:, None]) + ridge * np.eye(p)
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    eta = np.clip(X @ beta, -35, 35)
    mu = 1.0 / (1.0 + np.exp(-eta))
    w = np.maximum(mu * (1.0 - mu), 1e-10)
    cov = np.linalg.inv(X.T @ (X * w[:, None]) + ridge * np.eye(p))
    return beta, cov


def _logistic_prob_draw(X_fit, y_fit, X_pred, rng):
    beta_hat, cov = _ridge_logistic(X_fit, y_fit)
    beta_draw = rng.multivariate_normal(beta_hat, (cov + cov.T) / 2.0, method="svd")
    eta = np.clip(X_pred @ beta_draw, -35, 35)
    return 1.0 / (1.0 + np.exp(-eta))


def _impute_one_chain(dataset: Dataset, iterations: int, rng: np.random.Generator) -> Dataset:
    columns = dataset.columns
    targets = [n for n, c in columns.items() if c.n_missing]
    working: dict[str, np.ndarray] = {}
    for name, col in columns.items():
        vals = np.array(col.values, dtype=object if col.kind == CATEGORICAL else float)
        miss = col.missing_mask
        if miss.any():
            obs = col.observed()
            fill = rng.choice(obs, size=int(miss.sum()), replace=True)
            vals[miss] = fill
        working[name] = vals

    for _ in range(iterations):
        for name in targets:
            col = columns[name]
            miss = col.missing_mask
            obs_rows = ~miss
            X = _encode_regressors(working, columns, exclude=name)
            X_fit, X_mis = X[obs_rows], X[miss]
            if col.kind == CONTINUOUS:
                y_fit = np.asarray(working[name], dtype=float)[obs_rows]
                beta_draw, sigma_draw = _bayes_linear_draw(X_fit, y_fit, rng)
                draws = X_mis @ beta_draw + rng.normal(0.0, sigma_draw, size=X_mis.shape[0])
                vals = np.asarray(working[name], dtype=float)
                vals[miss] = draws
                working[name] = vals
            elif col.kind == BINARY:
                y_fit = np.asarray(working[name], dtype=float)[obs_rows]
                if y_fit.min() == y_fit.max():
                    p = np.full(X_mis.shape[0], float(y_fit.mean()))
                else:
                    p = _logistic_prob_draw(X_fit, y_fit, X_mis, rng)
                vals = np.asarray(working[name], dtype=float)
                vals[miss] = (rng.random(X_mis.shape[0]) < p).astype(float)
                working[name] = vals
            else:
                levels = col.levels or ()
                probs = np.empty((X_mis.shape[0], len(levels)))
                w = working[name]
                for li, level in enumerate(levels):
                    y_fit = np.array([1.0 if w[i] == level else 0.0
                                      for i in np.flatnonzero(obs_rows)])
                    if y_fit.min() == y_fit.max():
                        probs[:, li] = float(y_fit.mean())
                    else:
                        probs[:, li] = _logistic_prob_draw(X_fit, y_fit, X_mis, rng)
                probs = np.maximum(probs, 1e-12)
                probs /= probs.sum(axis=1, keepdims=True)
                cdf = np.cumsum(probs, axis=1)
                u = rng.random(X_mis.shape[0])
                picks = (u[:, None] > cdf).sum(axis=1)
                vals = np.array(w, dtype=object)
                vals[miss] = [levels[i] for i in picks]
                working[name] = vals

    out = []
    for name, col in columns.items():
        out.append(Column(name, col.kind, working[name], np.zeros(dataset.n_rows, dtype=bool),
                          levels=col.levels if col.kind == CATEGORICAL else None))
    return Dataset.from_columns(out)


def impute_chained(dataset: Dataset, m: int, iterations: int, seed: int) -> ImputedSet:
    """M completed copies of ``dataset`` via chained equations.

    Every column with missing cells must have at least 20 observed values.
    A column with more than 10% missing triggers a warning: that much missing
    data deserves per-outcome attention rather than an automated run.  With no
    missing cells at all the input is returned M times unchanged.
    """
    if m < 1:
        raise ValidationError(f"m must be a positive count, got {m}")
    if iterations < 1:
        raise ValidationError(f"iterations must be a positive count, got {iterations}")
    any_missing = False
    for name, col in dataset.columns.items():
        nm = col.n_missing
        if nm == 0:
            continue
        any_missing = True
        n_obs = len(col) - nm
        if n_obs < MIN_OBSERVED_PER_COLUMN:
            raise ValidationError(
                f"column {name!r} has only {n_obs} observed values; "
                f"imputation needs at least {MIN_OBSERVED_PER_COLUMN}"
            )
        frac = nm / len(col)
        if frac > MISSINGNESS_WARNING_FRACTION:
            warnings.warn(
                f"column {name!r} is {frac:.1%} missing, above the "
                f"{MISSINGNESS_WARNING_FRACTION:.0%} guidance for automated outcome-wide runs",
                HighMissingnessWarning,
                stacklevel=2,
            )
    provenance = {"method": "chained_equations", "m": m, "iterations": iterations, "seed": int(seed)}
    if not any_missing:
        return ImputedSet(tuple([dataset] * m), m, provenance)
    datasets = []
    for chain in range(m):
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "impute_chain", chain)))
        datasets.append(_impute_one_chain(dataset, iterations, rng))
    return ImputedSet(tuple(datasets), m, provenance)


def load_imputed_dir(path, schema, *, delimiter: str = ",") -> ImputedSet:
    """Load externally imputed datasets: a directory of M delimited files
    with identical schema, taken in sorted filename order."""
    root = Path(path)
    files = sorted(p for p in root.iterdir() if p.is_file())
    if not files:
        raise ValidationError(f"no files found in {root}")
    datasets = tuple(load_table(p, schema, delimiter=delimiter) for p in files)
    return ImputedSet(datasets, len(datasets),
                      {"method": "external", "files": [p.name for p in files]})


def pool_rubin(results, *, ci_level: float = 0.95) -> PooledResult:
    """Combine M per-imputation fits: mean estimate, within + inflated
    between variance, normal-reference inference on the pooled scale."""
    results = list(results)
    m = len(results)
    if m < 2:
        raise ValidationError(f"pooling needs at least 2 results, got {m}")
    scales = {r.scale for r in results}
    families = {r.family for r in results}
    if len(scales) != 1 or len(families) != 1:
        raise ValidationError(f"cannot pool mixed scales/families: {sorted(scales)}, {sorted(families)}")
    estimates = np.array([r.estimate for r in results], dtype=float)
    ses = np.array([r.se for r in results], dtype=float)
    # shifted means are exact when the M inputs are identical
    q_bar = float(estimates[0] + np.mean(estimates - estimates[0]))
    within = float(ses[0] ** 2 + np.mean(ses ** 2 - ses[0] ** 2))
    between = float(np.var(estimates - estimates[0], ddof=1))
    total = within + (1.0 + 1.0 / m) * between
    se = float(np.sqrt(total))
    if se == 0.0:
        ci = (q_bar, q_bar)
        p = 1.0 if q_bar == 0.0 else 0.0
    else:
        z = norm.ppf(0.5 + ci_level / 2.0)
        ci = (q_bar - z * se, q_bar + z * se)
        p = float(2.0 * norm.sf(abs(q_bar) / se))
    return PooledResult(
        estimate=q_bar,
        within_var=within,
        between_var=between,
        total_var=total,
        se=se,
        ci=ci,
        p_value=p,
        scale=results[0].scale,
        family=results[0].family,
        m=m,
        n_used=results[0].n_used,
        term=results[0].term,
    )


def complete_case_filter(dataset: Dataset, spec: AnalysisSpec, outcome: str) -> Dataset:
    """Rows complete on the exposure, the covariate block, and one outcome."""
    names = [spec.exposure.column, *spec.covariate_block(), outcome]
    keep = ~dataset.missing_any(names)
    if not keep.any():
        raise ValidationError(f"complete-case filter for {outcome!r} leaves no rows")
    return dataset.filter_rows(keep)


@dataclass
class MiCcRow:
    outcome: str
    mi_estimate: float
    cc_estimate: float
    abs_difference: float
    rel_difference: float
    ci_overlap: bool
    flagged: bool


@dataclass
class MiCcComparison:
    rows: list[MiCcRow]
    flagged_outcomes: list[str]
    recommendation: str | None


def compare_mi_cc(mi, cc) -> MiCcComparison:
    """Per-outcome discrepancies between a multiple-imputation run and a
    complete-case run of the same spec.

    Outcomes whose confidence intervals fail to overlap are flagged; any flag
    comes with the recommendation to drop the automated outcome-wide analysis
    for those outcomes and examine their missing data individually.
    """
    mi_by = {o.name: o for o in mi.outcomes}
    cc_by = {o.name: o for o in cc.outcomes}
    if set(mi_by) != set(cc_by):
        raise ValidationError(
            f"outcome sets differ: {sorted(set(mi_by) ^ set(cc_by))}"
        )
    rows = []
    for name in (o.name for o in mi.outcomes):
        a, b = mi_by[name], cc_by[name]
        if a.fit.scale != b.fit.scale:
            raise ValidationError(f"outcome {name!r} was fit on different scales in the two runs")
        diff = abs(a.fit.estimate - b.fit.estimate)
        denom = max(abs(a.fit.estimate), 1e-12)
        overlap = a.fit.ci[0] <= b.fit.ci[1] and b.fit.ci[0] <= a.fit.ci[1]
        rows.append(MiCcRow(
            outcome=name,
            mi_estimate=a.fit.estimate,
            cc_estimate=b.fit.estimate,
            abs_difference=diff,
            rel_difference=diff / denom,
            ci_overlap=overlap,
            flagged=not overlap,
        ))
    flagged = [r.outcome for r in rows if r.flagged]
    recommendation = None
    if flagged:
        recommendation = (
            "Non-overlapping intervals between the imputation and complete-case runs for "
            + ", ".join(flagged)
            + ": missing data may be driving these estimates. Abandon the automated "
            "outcome-wide treatment of the flagged outcomes and analyze each one "
            "separately with explicit missing-data modeling."
        )
    return MiCcComparison(rows, flagged, recommendation)
