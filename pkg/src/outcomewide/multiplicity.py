"""Multiple-testing metrics: Bonferroni/Holm, stepdown max-T resampling, and
the null interval for the count of nominal-level rejections.

The resampling procedures share one scheme: fit every continuous outcome on
the shared design, then redraw outcomes from the fitted linear models with
residual rows resampled jointly, which preserves the empirical cross-outcome
residual correlation without modeling it.  Resampled t statistics are centered
at the observed estimates to recover the null distribution; for the null
interval the exposure coefficient is instead forced to zero when generating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._kernels import linear_bootstrap_stats
from .data_model import CONTINUOUS, Dataset
from .errors import NumericalError, ValidationError
from .glm import build_design_matrix
from .spec import AnalysisSpec, prepare_exposure
from .utils import derive_seed

MIN_RESAMPLES_MAXT = 100
MIN_RESAMPLES_NULL_INTERVAL = 500


@dataclass
class MultiplicityReport:
    alpha: float
    k: int
    raw_p: np.ndarray
    bonferroni_threshold: float
    holm_adjusted: np.ndarray
    rejected_nominal: int
    rejected_bonferroni: int
    rejected_holm: int
    rw_adjusted: np.ndarray | None = None
    rw_outcomes: list[str] | None = None
    rejected_rw: int | None = None


@dataclass
class NullIntervalReport:
    alpha: float
    k: int
    expected_rejections: float
    interval: tuple[int, int]
    observed_rejections: int
    excess_hits: float


def holm_adjust(p: np.ndarray) -> np.ndarray:
    """Holm stepdown adjusted p-values (monotone, clipped to 1)."""
    p = np.asarray(p, dtype=float)
    k = p.size
    order = np.argsort(p, kind="stable")
    mult = (k - np.arange(k)) * p[order]
    adj_sorted = np.minimum(np.maximum.accumulate(mult), 1.0)
    out = np.empty(k)
    out[order] = adj_sorted
    return out


def adjust_bonferroni_holm(p, alpha: float) -> MultiplicityReport:
    """Bonferroni threshold and Holm adjusted p-values for one test family."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValidationError("empty p-value sequence")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValidationError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    k = p.size
    threshold = alpha / k
    holm = holm_adjust(p)
    return MultiplicityReport(
        alpha=alpha,
        k=k,
        raw_p=p.copy(),
        bonferroni_threshold=threshold,
        holm_adjusted=holm,
        rejected_nominal=int(np.sum(p < alpha)),
        rejected_bonferroni=int(np.sum(p < threshold)),
        rejected_holm=int(np.sum(holm < alpha)),
    )


def _ols_battery(X: np.ndarray, Y: np.ndarray, jcol: int):
    """Per-outcome OLS on a shared design; returns what resampling needs."""
    n, p = X.shape
    if n <= p:
        raise NumericalError(f"resampling needs n > p, got n={n}, p={p}")
    xtx_inv = np.linalg.inv(X.T @ X)
    pinv = xtx_inv @ X.T
    beta = pinv @ Y
    fitted = X @ beta
    resid = Y - fitted
    rss = np.einsum("ik,ik->k", resid, resid)
    cjj = float(xtx_inv[jcol, jcol])
    dof = n - p
    se = np.sqrt(cjj * rss / dof)
    return beta, fitted, resid, pinv, cjj, dof, se


def _resample_indices(rng: np.random.Generator, b_resamples: int, n: int) -> np.ndarray:
    return rng.integers(0, n, size=(b_resamples, n), dtype=np.int64)


def maxt_adjusted_p(
    X: np.ndarray,
    Y: np.ndarray,
    jcol: int,
    b_resamples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Stepdown max-T adjusted p-values for the exposure across K outcomes.

    Returns (adjusted_p, raw_p) in the column order of ``Y``.  With a single
    outcome there is nothing to adjust for and the raw p-value is returned
    unchanged.
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    if b_resamples < MIN_RESAMPLES_MAXT:
        raise ValidationError(f"need at least {MIN_RESAMPLES_MAXT} resamples, got {b_resamples}")
    beta, fitted, resid, pinv, cjj, dof, se = _ols_battery(X, Y, jcol)
    if np.any(se == 0.0):
        raise NumericalError("an outcome fits exactly; max-T statistics are undefined")
    t_obs = beta[jcol] / se
    raw_p = 2.0 * norm.sf(np.abs(t_obs))
    k = Y.shape[1]
    if k == 1:
        return raw_p.copy(), raw_p

    idx = _resample_indices(rng, b_resamples, X.shape[0])
    beta_s, se_s = linear_bootstrap_stats(X, pinv, cjj, dof, fitted, resid, idx, jcol)
    bad = ~np.isfinite(se_s) | (se_s == 0.0)
    if np.any(bad):
        b_bad = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise NumericalError(f"refit failed in resample {b_bad}")
    t_star = np.abs((beta_s - beta[jcol][None, :]) / se_s)

    order = np.argsort(-np.abs(t_obs), kind="stable")
    # suffix max over the not-yet-rejected hypotheses at each stepdown rank
    suffix_max = np.maximum.accumulate(t_star[:, order][:, ::-1], axis=1)[:, ::-1]
    counts = np.sum(suffix_max >= np.abs(t_obs)[order][None, :], axis=0)
    adj_sorted = (1.0 + counts) / (b_resamples + 1.0)
    adj_sorted = np.minimum(np.maximum.accumulate(adj_sorted), 1.0)
    adjusted = np.empty(k)
    adjusted[order] = adj_sorted
    return adjusted, raw_p


def null_rejection_counts(
    X: np.ndarray,
    Y: np.ndarray,
    jcol: int,
    alpha: float,
    b_resamples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Draws of the nominal-rejection count under the global null.

    Outcomes are regenerated from the fitted models with the exposure
    coefficient forced to zero and residual rows resampled jointly; each draw
    counts how many of the K refitted exposure tests fall below alpha.
    Returns (counts, observed_rejections).
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    beta, fitted, resid, pinv, cjj, dof, se = _ols_battery(X, Y, jcol)
    if np.any(se == 0.0):
        raise NumericalError("an outcome fits exactly; rejection counts are undefined")
    t_obs = beta[jcol] / se
    observed = int(np.sum(2.0 * norm.sf(np.abs(t_obs)) < alpha))
    yhat_null = fitted - np.outer(X[:, jcol], beta[jcol])
    idx = _resample_indices(rng, b_resamples, X.shape[0])
    beta_s, se_s = linear_bootstrap_stats(X, pinv, cjj, dof, yhat_null, resid, idx, jcol)
    bad = ~np.isfinite(se_s) | (se_s == 0.0)
    if np.any(bad):
        b_bad = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise NumericalError(f"refit failed in resample {b_bad}")
    crit = norm.ppf(1.0 - alpha / 2.0)
    counts = np.sum(np.abs(beta_s / se_s) > crit, axis=1)
    return counts, observed


def _continuous_battery(dataset: Dataset, spec: AnalysisSpec):
    """Shared design and outcome matrix for the continuous outcomes.

    Rows are restricted to complete cases across the exposure, the covariate
    block, and every continuous outcome, so all K fits share one sample.
    """
    continuous = [o for o in spec.outcomes if o.kind == CONTINUOUS]
    if not continuous:
        raise ValidationError("resampling-based metrics need at least one continuous outcome")
    coded, _ = prepare_exposure(dataset, spec)
    design = build_design_matrix(coded, spec.exposure.column, spec.covariate_block())
    if len(design.exposure_columns) != 1:
        raise ValidationError(
            "resampling-based metrics need a single-column exposure term; "
            f"got {len(design.exposure_columns)} contrast columns"
        )
    names = [o.column for o in continuous]
    keep_outcomes = ~coded.missing_any(names)
    X, keep = design.rows(keep_outcomes)
    Y = np.column_stack([coded.column(nm).values[keep] for nm in names])
    return X, Y, design.exposure_columns[0], names


def romano_wolf(
    dataset: Dataset,
    spec: AnalysisSpec,
    *,
    b_resamples: int | None = None,
    seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Stepdown max-T adjusted p-values for the continuous outcomes of a spec.

    Deterministic given (dataset, spec, b_resamples, seed).  Returns
    (adjusted_p, raw_p, outcome_names).
    """
    b = spec.options.b_romano_wolf if b_resamples is None else b_resamples
    master = spec.options.seed if seed is None else seed
    X, Y, jcol, names = _continuous_battery(dataset, spec)
    rng = np.random.Generator(np.random.PCG64(derive_seed(master, "romano_wolf")))
    adjusted, raw = maxt_adjusted_p(X, Y, jcol, b, rng)
    return adjusted, raw, names


def null_rejection_interval(
    dataset: Dataset,
    spec: AnalysisSpec,
    *,
    alpha: float | None = None,
    b_resamples: int | None = None,
    seed: int | None = None,
) -> NullIntervalReport:
    """95% null interval for the count of alpha-level rejections.

    The interval takes the outcomes' correlation into account through the
    joint residual resampling scheme; expected rejections are K * alpha and
    excess hits are observed minus expected.
    """
    a = spec.options.alpha if alpha is None else alpha
    b = spec.options.b_null_interval if b_resamples is None else b_resamples
    if b < MIN_RESAMPLES_NULL_INTERVAL:
        raise ValidationError(f"need at least {MIN_RESAMPLES_NULL_INTERVAL} resamples, got {b}")
    master = spec.options.seed if seed is None else seed
    X, Y, jcol, names = _continuous_battery(dataset, spec)
    rng = np.random.Generator(np.random.PCG64(derive_seed(master, "null_interval")))
    counts, observed = null_rejection_counts(X, Y, jcol, a, b, rng)
    return interval_report_from_counts(counts, len(names), a, observed)


def interval_report_from_counts(counts: np.ndarray, k: int, alpha: float, observed: int) -> NullIntervalReport:
    lo, hi = np.quantile(counts, [0.025, 0.975], method="inverted_cdf")
    expected = k * alpha
    return NullIntervalReport(
        alpha=alpha,
        k=k,
        expected_rejections=expected,
        interval=(int(lo), int(hi)),
        observed_rejections=int(observed),
        excess_hits=float(observed - expected),
    )
