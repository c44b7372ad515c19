"""Outcome-wide runners: one exposure, many outcomes, one covariate set.

``run_outcome_wide`` fits every declared outcome against the same exposure
and the same covariate block, picks each binary outcome's family by the
prevalence rule, attaches an E-value report per fitted contrast, and appends
the multiplicity metrics.  ``run_lagged_exposure_wide`` and
``run_interaction`` reuse the same machinery for the two design variants.

Determinism contract: all randomness flows from ``options.seed`` through
named streams, so re-running a spec reproduces every number, and removing
one outcome from the spec leaves every other outcome's fit bit-identical
(only the multiplicity reports change).  To keep the covariate block truly
shared under imputation, covariates and exposure are imputed once, jointly,
without reference to any outcome; each outcome's own missing cells are then
imputed in a stream keyed by the outcome's name.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .covariates import classify_design_level
from .data_model import CONTINUOUS, Column, Dataset, TransformRecord, column_prevalence
from .data_model import apply_standardize, standardize_column
from .errors import OutcomeWideError, ValidationError
from .glm import FitResult, build_design_matrix, fit_family
from .imputation import ImputedSet, PooledResult, complete_case_filter, impute_chained, pool_rubin
from .multiplicity import (
    MultiplicityReport,
    NullIntervalReport,
    adjust_bonferroni_holm,
    null_rejection_interval,
    romano_wolf,
)
from .sensitivity import EValueReport, OutcomeMeta, evalue_report
from .spec import AnalysisSpec, OutcomeSpec, apply_exposure_record, outcome_family, prepare_exposure
from .utils import derive_seed

logger = logging.getLogger("outcomewide")


@dataclass
class ContrastResult:
    """One exposure contrast for one outcome: fit plus robustness report."""

    term: str
    fit: FitResult | PooledResult
    evalue: EValueReport


@dataclass
class OutcomeResult:
    name: str
    kind: str
    family: str
    contrasts: list[ContrastResult]
    n_used: int
    prevalence: float | None = None
    outcome_sd: float | None = None

    @property
    def fit(self):
        return self.contrasts[0].fit

    @property
    def evalue(self):
        return self.contrasts[0].evalue


@dataclass
class OutcomeWideResult:
    outcomes: list[OutcomeResult]
    multiplicity: dict[str, MultiplicityReport]
    null_interval: NullIntervalReport | None
    metadata: dict
    notes: list[str] = field(default_factory=list)


def _check_spec_columns(dataset: Dataset, spec: AnalysisSpec) -> None:
    names = [spec.exposure.column, *spec.covariate_block()]
    names += [o.column for o in spec.outcomes]
    if spec.second_exposure:
        names.append(spec.second_exposure)
    for n in names:
        dataset.column(n)
    for o in spec.outcomes:
        col = dataset.column(o.column)
        if col.kind != o.kind:
            raise ValidationError(
                f"outcome {o.column!r} declared {o.kind} but loaded as {col.kind}"
            )


def _named(exc: OutcomeWideError, outcome: str) -> OutcomeWideError:
    new = type(exc)(f"outcome {outcome!r}: {exc}")
    for attr in ("collinear", "diagnostics"):
        if hasattr(exc, attr):
            setattr(new, attr, getattr(exc, attr))
    return new


def _fit_one_dataset(
    ds: Dataset,
    spec: AnalysisSpec,
    outcome: OutcomeSpec,
    family: str,
    exp_record: TransformRecord | None,
    out_record: TransformRecord | None,
) -> tuple[list[FitResult], int]:
    """Fit every exposure contrast for one outcome on one complete design."""
    coded = apply_exposure_record(ds, spec, exp_record)
    design = build_design_matrix(coded, spec.exposure.column, spec.covariate_block())
    ycol = coded.column(outcome.column)
    if out_record is not None:
        ycol = apply_standardize(ycol, out_record)
    mask = design.complete_mask & ~ycol.missing_mask
    n = int(mask.sum())
    if n == 0:
        raise ValidationError(f"no complete rows for outcome {outcome.column!r}")
    X = design.matrix[mask]
    y = ycol.values[mask]
    fits = []
    for j in design.exposure_columns:
        fit = fit_family(family, X, y, exposure_column=j, ci_level=spec.options.ci_level)
        fit.term = design.column_names[j]
        fits.append(fit)
    return fits, n


def _evalue_for(fit, kind: str, prevalence: float | None, threshold: float) -> EValueReport:
    meta = OutcomeMeta(prevalence=prevalence, outcome_sd=1.0, common_threshold=threshold)
    return evalue_report(fit, meta)


def _base_imputations(observed: Dataset, spec: AnalysisSpec) -> list[Dataset]:
    """M imputed copies of the exposure + covariate columns (outcomes never
    enter these models, so the shared block is identical for every outcome)."""
    base_cols = [spec.exposure.column, *spec.covariate_block()]
    base = observed.select(base_cols)
    m = spec.options.m_imputations
    if all(base.column(c).n_missing == 0 for c in base_cols):
        return [base] * m
    seed = derive_seed(spec.options.seed, "covariate_imputation")
    imputed = impute_chained(base, m, spec.options.imputation_iterations, seed)
    return list(imputed.datasets)


def _outcome_datasets(
    observed: Dataset,
    spec: AnalysisSpec,
    outcome: OutcomeSpec,
    base_sets: list[Dataset],
) -> list[Dataset]:
    """Per-imputation datasets for one outcome, keyed by the outcome's name."""
    ycol = observed.column(outcome.column)
    out = []
    for m_index, base in enumerate(base_sets):
        ds = base.with_column(ycol)
        if ycol.n_missing:
            seed = derive_seed(spec.options.seed, "outcome_imputation", outcome.column, m_index)
            ds = impute_chained(ds, 1, spec.options.imputation_iterations, seed).datasets[0]
        out.append(ds)
    return out


def run_outcome_wide(data, spec: AnalysisSpec, *, complete_case: bool = False) -> OutcomeWideResult:
    """Run the full outcome-wide battery.

    ``data`` is a :class:`Dataset`, or an :class:`ImputedSet` of externally
    imputed files.  With missing cells and ``complete_case=False`` the
    internal imputer runs and per-outcome fits are pooled by Rubin's rules.
    Any fit failure aborts the run naming the outcome; a table with silent
    holes would misrepresent the design.
    """
    spec.validate()
    if spec.mode != "outcome_wide":
        raise ValidationError(f"run_outcome_wide got spec mode {spec.mode!r}")
    notes: list[str] = []

    external = isinstance(data, ImputedSet)
    observed = data.datasets[0] if external else data
    _check_spec_columns(observed, spec)
    if external:
        notes.append("transform records frozen from the first imputed dataset")

    # Freeze every transform once, from observed data, so all imputed copies
    # are coded identically and estimates stay comparable across imputations.
    _, exp_record = prepare_exposure(observed, spec)
    threshold = spec.options.family_threshold
    out_records: dict[str, TransformRecord | None] = {}
    families: dict[str, str] = {}
    prevalences: dict[str, float | None] = {}
    for o in spec.outcomes:
        families[o.column] = outcome_family(observed, o, threshold)
        if o.kind == CONTINUOUS:
            _, rec = standardize_column(observed.column(o.column))
            out_records[o.column] = rec
            prevalences[o.column] = None
        else:
            out_records[o.column] = None
            prevalences[o.column] = column_prevalence(observed.column(o.column))

    analysis_cols = [spec.exposure.column, *spec.covariate_block(),
                     *[o.column for o in spec.outcomes]]
    any_missing = any(observed.column(c).n_missing for c in analysis_cols)

    if external:
        analysis_mode = "external_imputation"
    elif complete_case:
        analysis_mode = "complete_case"
    elif any_missing:
        analysis_mode = "multiple_imputation"
    else:
        analysis_mode = "single_fit"

    base_sets: list[Dataset] | None = None
    if analysis_mode == "multiple_imputation":
        base_sets = _base_imputations(observed, spec)

    outcome_results: list[OutcomeResult] = []
    for o in spec.outcomes:
        family = families[o.column]
        try:
            if analysis_mode == "single_fit":
                fits, n = _fit_one_dataset(observed, spec, o, family, exp_record, out_records[o.column])
                contrast_fits = [[f] for f in fits]
            elif analysis_mode == "complete_case":
                ds_k = complete_case_filter(observed, spec, o.column)
                fits, n = _fit_one_dataset(ds_k, spec, o, family, exp_record, out_records[o.column])
                contrast_fits = [[f] for f in fits]
            else:
                datasets = (
                    list(data.datasets)
                    if analysis_mode == "external_imputation"
                    else _outcome_datasets(observed, spec, o, base_sets)
                )
                per_m = []
                n = 0
                for ds_m in datasets:
                    fits_m, n = _fit_one_dataset(ds_m, spec, o, family, exp_record, out_records[o.column])
                    per_m.append(fits_m)
                contrast_fits = [
                    [per_m[m_i][c] for m_i in range(len(per_m))]
                    for c in range(len(per_m[0]))
                ]
        except OutcomeWideError as exc:
            raise _named(exc, o.column) from exc

        contrasts = []
        for fits_c in contrast_fits:
            if len(fits_c) == 1:
                fit = fits_c[0]
            else:
                fit = pool_rubin(fits_c, ci_level=spec.options.ci_level)
            ev = _evalue_for(fit, o.kind, prevalences[o.column], threshold)
            contrasts.append(ContrastResult(fit.term, fit, ev))
        sd = out_records[o.column].parameters["sd"] if out_records[o.column] else None
        outcome_results.append(OutcomeResult(
            name=o.column, kind=o.kind, family=family, contrasts=contrasts,
            n_used=n, prevalence=prevalences[o.column], outcome_sd=sd,
        ))

    # Multiplicity: one family of K outcome tests per exposure contrast.
    multiplicity: dict[str, MultiplicityReport] = {}
    n_contrasts = len(outcome_results[0].contrasts)
    for c in range(n_contrasts):
        term = outcome_results[0].contrasts[c].term
        p = [r.contrasts[c].fit.p_value for r in outcome_results]
        multiplicity[term] = adjust_bonferroni_holm(np.array(p), spec.options.alpha)

    null_interval = None
    continuous = [o for o in spec.outcomes if o.kind == CONTINUOUS]
    resampling_meta = None
    if not continuous:
        notes.append("resampling-based metrics skipped: no continuous outcomes")
    elif n_contrasts != 1:
        notes.append("resampling-based metrics skipped: multi-column exposure term")
    else:
        rw_data = observed if not external else data.datasets[0]
        adjusted, _raw, rw_names = romano_wolf(rw_data, spec)
        term = outcome_results[0].contrasts[0].term
        report = multiplicity[term]
        report.rw_adjusted = adjusted
        report.rw_outcomes = rw_names
        report.rejected_rw = int(np.sum(adjusted < spec.options.alpha))
        null_interval = null_rejection_interval(rw_data, spec)
        resampling_meta = {
            "b_romano_wolf": spec.options.b_romano_wolf,
            "b_null_interval": spec.options.b_null_interval,
            "rows": "complete cases across exposure, covariates, and continuous outcomes",
        }
        if analysis_mode in ("multiple_imputation", "external_imputation"):
            notes.append("resampling-based metrics computed on observed-data complete cases")

    if analysis_mode == "external_imputation":
        m_actual = data.m
    elif analysis_mode == "multiple_imputation":
        m_actual = spec.options.m_imputations
    else:
        m_actual = None
    metadata = _run_metadata(spec, analysis_mode, exp_record, out_records, families,
                             prevalences, outcome_results, resampling_meta, m_actual)
    # declaring baseline-outcome / prior-exposure columns upgrades the rung
    # the run can claim on the design hierarchy (exposure precedes outcomes)
    has_baseline_outcome = any(o.baseline_outcome_column for o in spec.outcomes)
    has_prior_exposure = bool(spec.exposure.prior_exposure_column)
    level = classify_design_level(
        longitudinal=True,
        baseline_covariates=bool(spec.covariate_block()),
        baseline_outcome_controlled=has_baseline_outcome,
        prior_exposure_controlled=has_prior_exposure and has_baseline_outcome,
        randomized=False,
    )
    metadata["design_level"] = {"level": level.level, "label": level.label}
    if has_prior_exposure and not has_baseline_outcome:
        notes.append("prior-exposure control declared without baseline-outcome control; "
                     "design level capped below 3")
    if level.caution:
        notes.append(level.caution)
    return OutcomeWideResult(outcome_results, multiplicity, null_interval, metadata, notes)


def _record_params(record: TransformRecord | None):
    if record is None:
        return None
    return {"transform": record.transform, **{k: list(v) if isinstance(v, tuple) else v
                                              for k, v in record.parameters.items()}}


def _run_metadata(spec, analysis_mode, exp_record, out_records, families,
                  prevalences, outcome_results, resampling_meta, m_actual) -> dict:
    return {
        "package": {"name": "outcomewide", "version": __version__},
        "kernel_backend": BACKEND,
        "seed": spec.options.seed,
        "spec_hash": spec.spec_hash(),
        "mode": spec.mode,
        "analysis": analysis_mode,
        "inference_reference": "normal",
        "alpha": spec.options.alpha,
        "ci_level": spec.options.ci_level,
        "family_threshold": spec.options.family_threshold,
        "m_imputations": m_actual,
        "covariate_block": spec.covariate_block(),
        "exposure": {"column": spec.exposure.column, "coding": spec.exposure.coding,
                     "transform": _record_params(exp_record)},
        "outcome_standardization": {k: _record_params(v) for k, v in out_records.items()},
        "families": dict(families),
        "prevalences": {k: v for k, v in prevalences.items() if v is not None},
        "n_used": {r.name: r.n_used for r in outcome_results},
        "resampling": resampling_meta,
    }


@dataclass
class LaggedEntry:
    exposure: str
    fit: FitResult
    evalue: EValueReport
    n_used: int


@dataclass
class LaggedResult:
    entries: list[LaggedEntry]
    multiplicity: MultiplicityReport
    metadata: dict
    notes: list[str] = field(default_factory=list)


def run_lagged_exposure_wide(data: Dataset, spec: AnalysisSpec) -> LaggedResult:
    """One regression per later-wave exposure, all sharing the earlier-wave
    exposure block plus the declared covariates.

    A later-wave exposure without its earlier-wave counterpart in the shared
    block is analyzed anyway, with a logged warning; if the two waves are
    (near-)identical the design-matrix rank check rejects the regression.
    Rows with missing values are dropped per regression.
    """
    spec.validate()
    if spec.mode != "lagged_exposure_wide" or spec.lagged is None:
        raise ValidationError("run_lagged_exposure_wide needs mode lagged_exposure_wide")
    lg = spec.lagged
    notes: list[str] = []
    outcome = lg.outcome
    dataset = data
    dataset.column(outcome.column)
    shared = [*lg.wave1_exposures, *spec.covariates]

    out_record = None
    if outcome.kind == CONTINUOUS:
        _, out_record = standardize_column(dataset.column(outcome.column))
    family = outcome_family(dataset, outcome, spec.options.family_threshold)
    prevalence = (column_prevalence(dataset.column(outcome.column))
                  if outcome.kind != CONTINUOUS else None)

    entries = []
    for w2 in lg.wave2_exposures:
        if not w2.wave1_counterpart or w2.wave1_counterpart not in lg.wave1_exposures:
            msg = (f"later-wave exposure {w2.column!r} has no earlier-wave counterpart "
                   "in the shared block")
            logger.warning(msg)
            notes.append(msg)
        try:
            design = build_design_matrix(dataset, w2.column, shared)
            ycol = dataset.column(outcome.column)
            if out_record is not None:
                ycol = apply_standardize(ycol, out_record)
            mask = design.complete_mask & ~ycol.missing_mask
            if not mask.any():
                raise ValidationError("no complete rows")
            X = design.matrix[mask]
            y = ycol.values[mask]
            if len(design.exposure_columns) != 1:
                raise ValidationError("lagged exposures must be single-column terms")
            j = design.exposure_columns[0]
            fit = fit_family(family, X, y, exposure_column=j, ci_level=spec.options.ci_level)
            fit.term = design.column_names[j]
        except OutcomeWideError as exc:
            raise _named(exc, w2.column) from exc
        ev = _evalue_for(fit, outcome.kind, prevalence, spec.options.family_threshold)
        entries.append(LaggedEntry(w2.column, fit, ev, int(mask.sum())))

    p = np.array([e.fit.p_value for e in entries])
    report = adjust_bonferroni_holm(p, spec.options.alpha)
    metadata = {
        "package": {"name": "outcomewide", "version": __version__},
        "seed": spec.options.seed,
        "spec_hash": spec.spec_hash(),
        "mode": spec.mode,
        "analysis": "complete_case_per_regression",
        "inference_reference": "normal",
        "alpha": spec.options.alpha,
        "ci_level": spec.options.ci_level,
        "outcome": outcome.column,
        "family": family,
        "shared_block": shared,
        "outcome_standardization": _record_params(out_record),
    }
    return LaggedResult(entries, report, metadata, notes)


@dataclass
class InteractionEntry:
    outcome: str
    family: str
    exposure_fit: FitResult | PooledResult
    second_fit: FitResult | PooledResult
    interaction_fit: FitResult | PooledResult
    n_used: int


@dataclass
class InteractionResult:
    entries: list[InteractionEntry]
    multiplicity: MultiplicityReport  # over the interaction terms
    metadata: dict
    notes: list[str] = field(default_factory=list)


def _product_column(ds: Dataset, a: str, x: str) -> tuple[Dataset, str]:
    ca, cx = ds.column(a), ds.column(x)
    name = f"{a}*{x}"
    mask = ca.missing_mask | cx.missing_mask
    vals = np.where(mask, np.nan, ca.values.astype(float) * cx.values.astype(float))
    return ds.with_column(Column(name, CONTINUOUS, vals, mask)), name


def run_interaction(data: Dataset, spec: AnalysisSpec) -> InteractionResult:
    """Product-term models for two contemporaneous exposures, outcome-wide.

    Each outcome is fit in its own family with columns intercept, first
    exposure, second exposure, their product, then the shared covariates;
    all three coefficients are reported and the multiplicity correction is
    applied to the interaction terms.
    """
    spec.validate()
    if spec.mode != "interaction" or not spec.second_exposure:
        raise ValidationError("run_interaction needs mode interaction and second_exposure")
    if spec.exposure.coding == "tertiles":
        raise ValidationError("interaction mode needs a single-column exposure coding")
    observed = data
    _check_spec_columns(observed, spec)
    notes: list[str] = []

    _, exp_record = prepare_exposure(observed, spec)
    threshold = spec.options.family_threshold
    a_name, x_name = spec.exposure.column, spec.second_exposure

    entries = []
    for o in spec.outcomes:
        family = outcome_family(observed, o, threshold)
        prevalence = (column_prevalence(observed.column(o.column))
                      if o.kind != CONTINUOUS else None)
        out_record = None
        if o.kind == CONTINUOUS:
            _, out_record = standardize_column(observed.column(o.column))
        try:
            coded = apply_exposure_record(observed, spec, exp_record)
            with_prod, prod_name = _product_column(coded, a_name, x_name)
            design = build_design_matrix(with_prod, a_name,
                                         [x_name, prod_name, *spec.covariate_block()])
            if len(design.exposure_columns) != 1:
                raise ValidationError("interaction mode needs a single-column exposure term")
            ycol = with_prod.column(o.column)
            if out_record is not None:
                ycol = apply_standardize(ycol, out_record)
            mask = design.complete_mask & ~ycol.missing_mask
            if not mask.any():
                raise ValidationError("no complete rows")
            X = design.matrix[mask]
            y = ycol.values[mask]
            fits = {}
            for label, col_name in (("exposure", a_name), ("second", x_name),
                                    ("interaction", prod_name)):
                j = design.column_names.index(col_name)
                fit = fit_family(family, X, y, exposure_column=j, ci_level=spec.options.ci_level)
                fit.term = col_name
                fits[label] = fit
        except OutcomeWideError as exc:
            raise _named(exc, o.column) from exc
        entries.append(InteractionEntry(
            outcome=o.column, family=family,
            exposure_fit=fits["exposure"], second_fit=fits["second"],
            interaction_fit=fits["interaction"], n_used=int(mask.sum()),
        ))

    p = np.array([e.interaction_fit.p_value for e in entries])
    report = adjust_bonferroni_holm(p, spec.options.alpha)
    metadata = {
        "package": {"name": "outcomewide", "version": __version__},
        "seed": spec.options.seed,
        "spec_hash": spec.spec_hash(),
        "mode": spec.mode,
        "analysis": "complete_case_per_outcome",
        "inference_reference": "normal",
        "alpha": spec.options.alpha,
        "ci_level": spec.options.ci_level,
        "exposures": [a_name, x_name],
        "covariate_block": spec.covariate_block(),
    }
    return InteractionResult(entries, report, metadata, notes)
