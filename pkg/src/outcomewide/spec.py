"""Analysis specification: the design decisions of a run made explicit.

The spec names one exposure (with its coding), the outcome list with declared
kinds, the shared covariate set, and the run options.  Baseline-outcome and
prior-exposure columns are ordinary covariates once declared; declaring them
also upgrades the design-hierarchy classification.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from . import data_model as dm
from .data_model import BINARY, CONTINUOUS, Dataset, TransformRecord
from .errors import ValidationError
from .utils import canonical_json, sha256_hex

CODINGS = ("raw", "standardized", "tertiles", "median_split")
MODES = ("outcome_wide", "lagged_exposure_wide", "interaction")


@dataclass
class ExposureSpec:
    column: str
    coding: str = "raw"
    prior_exposure_column: str | None = None


@dataclass
class OutcomeSpec:
    column: str
    kind: str
    baseline_outcome_column: str | None = None


@dataclass
class LaggedExposure:
    column: str
    wave1_counterpart: str | None = None


@dataclass
class LaggedSpec:
    wave1_exposures: list[str]
    wave2_exposures: list[LaggedExposure]
    outcome: OutcomeSpec


@dataclass
class Options:
    alpha: float = 0.05
    ci_level: float = 0.95
    family_threshold: float = 0.10
    b_romano_wolf: int = 1000
    b_null_interval: int = 2000
    m_imputations: int = 20
    imputation_iterations: int = 10
    seed: int = 0


@dataclass
class AnalysisSpec:
    exposure: ExposureSpec
    outcomes: list[OutcomeSpec]
    covariates: list[str]
    options: Options = field(default_factory=Options)
    mode: str = "outcome_wide"
    second_exposure: str | None = None
    lagged: LaggedSpec | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.exposure.coding not in CODINGS:
            raise ValidationError(f"unknown exposure coding {self.exposure.coding!r}")
        if not 0.0 < self.options.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if not 0.0 < self.options.ci_level < 1.0:
            raise ValidationError("ci_level must lie in (0, 1)")
        if self.mode == "interaction" and not self.second_exposure:
            raise ValidationError("interaction mode requires second_exposure")
        if self.mode == "lagged_exposure_wide" and self.lagged is None:
            raise ValidationError("lagged mode requires a lagged section")
        outcome_names = [o.column for o in self.outcomes]
        if self.mode != "lagged_exposure_wide" and not outcome_names:
            raise ValidationError("at least one outcome is required")
        if len(set(outcome_names)) != len(outcome_names):
            raise ValidationError("duplicate outcome columns")
        for o in self.outcomes:
            if o.kind not in (CONTINUOUS, BINARY):
                raise ValidationError(f"outcome {o.column!r} must be continuous or binary, got {o.kind!r}")
        exp = {self.exposure.column}
        if self.second_exposure:
            exp.add(self.second_exposure)
        outs = set(outcome_names)
        covs = set(self.covariates)
        if len(self.covariates) != len(covs):
            raise ValidationError("duplicate covariate names")
        for a, b, what in ((exp, outs, "exposure/outcome"), (exp, covs, "exposure/covariate"),
                           (outs, covs, "outcome/covariate")):
            overlap = a & b
            if overlap:
                raise ValidationError(f"{what} overlap: {sorted(overlap)}")

    def covariate_block(self) -> list[str]:
        """Shared covariate columns: declared covariates, then every declared
        baseline-outcome column, then the prior-exposure column."""
        block = list(self.covariates)
        for o in self.outcomes:
            c = o.baseline_outcome_column
            if c and c not in block:
                block.append(c)
        prior = self.exposure.prior_exposure_column
        if prior and prior not in block:
            block.append(prior)
        return block

    def to_dict(self) -> dict:
        return asdict(self)

    def spec_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))

    @classmethod
    def from_dict(cls, raw: dict) -> "AnalysisSpec":
        try:
            exposure = ExposureSpec(**raw["exposure"])
            outcomes = [OutcomeSpec(**o) for o in raw.get("outcomes", [])]
            covariates = list(raw.get("covariates", []))
            options = Options(**raw.get("options", {}))
            lagged = None
            if raw.get("lagged") is not None:
                lg = raw["lagged"]
                lagged = LaggedSpec(
                    wave1_exposures=list(lg["wave1_exposures"]),
                    wave2_exposures=[LaggedExposure(**e) for e in lg["wave2_exposures"]],
                    outcome=OutcomeSpec(**lg["outcome"]),
                )
            spec = cls(
                exposure=exposure,
                outcomes=outcomes,
                covariates=covariates,
                options=options,
                mode=raw.get("mode", "outcome_wide"),
                second_exposure=raw.get("second_exposure"),
                lagged=lagged,
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed analysis spec: {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def from_yaml(cls, path) -> "AnalysisSpec":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValidationError(f"config {path} did not parse to a mapping")
        return cls.from_dict(raw)


def prepare_exposure(dataset: Dataset, spec: AnalysisSpec) -> tuple[Dataset, TransformRecord | None]:
    """Apply the exposure coding, freezing its parameters from observed data."""
    col = dataset.column(spec.exposure.column)
    coding = spec.exposure.coding
    if coding == "raw":
        return dataset, None
    if col.kind != CONTINUOUS:
        raise ValidationError(f"{coding} coding needs a continuous exposure, got {col.kind}")
    if coding == "standardized":
        coded, record = dm.standardize_column(col)
    elif coding == "tertiles":
        coded, record = dm.tertile_code(col)
    else:
        coded, record = dm.median_split(col)
    return dataset.with_column(coded), record


def apply_exposure_record(dataset: Dataset, spec: AnalysisSpec, record: TransformRecord | None) -> Dataset:
    """Replay a frozen exposure coding on (possibly imputed) data."""
    if record is None:
        return dataset
    col = dataset.column(spec.exposure.column)
    if record.transform == "standardize":
        return dataset.with_column(dm.apply_standardize(col, record))
    if record.transform == "tertile":
        return dataset.with_column(dm.apply_tertile(col, record))
    if record.transform == "median_split":
        return dataset.with_column(dm.apply_median_split(col, record))
    raise ValidationError(f"unknown transform {record.transform!r}")


def outcome_family(dataset: Dataset, outcome: OutcomeSpec, threshold: float) -> str:
    """Model family for one outcome: linear for continuous; for binary,
    modified Poisson when the observed prevalence exceeds the threshold,
    logistic otherwise."""
    col = dataset.column(outcome.column)
    if col.kind != outcome.kind:
        raise ValidationError(
            f"outcome {outcome.column!r} declared {outcome.kind} but loaded as {col.kind}"
        )
    if outcome.kind == CONTINUOUS:
        return "linear"
    return "poisson_robust" if dm.column_prevalence(col) > threshold else "logistic"
