"""Covariate selection rules and the design-hierarchy classifier.

Selection follows the modified disjunctive cause criterion: keep anything
that causes the exposure or any outcome (or proxies an unmeasured common
cause), drop known instruments, and never adjust for variables measured
after the exposure, which may be mediators.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

REASON_MEDIATOR = "potential mediator (not temporally prior to the exposure)"
REASON_INSTRUMENT = "instrumental variable"
REASON_NO_CAUSE = "cause of neither the exposure nor any outcome"

DESIGN_LABELS = {
    1: "cross-sectional",
    2: "longitudinal with baseline covariates",
    3: "longitudinal with baseline covariates and baseline outcome",
    4: "longitudinal with baseline covariates, baseline outcome, and prior exposure",
    5: "randomized trial",
}

LOW_LEVEL_CAUTION = (
    "Designs below level 3 rarely support causal claims: without control for "
    "the outcome measured at baseline, reverse causation cannot be ruled out."
)


@dataclass
class CovariateTag:
    """Explicit causal flags for one candidate covariate; nothing is inferred."""

    name: str
    cause_of_exposure: bool
    cause_of_any_outcome: bool
    known_instrument: bool
    proxy_for_unmeasured_common_cause: bool
    temporally_prior_to_exposure: bool


@dataclass
class CovariateSelection:
    included: list[str]
    excluded: list[tuple[str, str]]  # (name, reason)


def select_covariates(tags) -> CovariateSelection:
    """Partition tagged candidates into the adjustment set and the discards.

    A candidate is included iff it is temporally prior to the exposure, is a
    cause of the exposure or of at least one outcome (or a proxy for an
    unmeasured common cause), and is not a known instrument.  Every exclusion
    carries the rule that removed it.
    """
    included: list[str] = []
    excluded: list[tuple[str, str]] = []
    for tag in tags:
        if not tag.temporally_prior_to_exposure:
            excluded.append((tag.name, REASON_MEDIATOR))
        elif tag.known_instrument:
            excluded.append((tag.name, REASON_INSTRUMENT))
        elif tag.cause_of_exposure or tag.cause_of_any_outcome or tag.proxy_for_unmeasured_common_cause:
            included.append(tag.name)
        else:
            excluded.append((tag.name, REASON_NO_CAUSE))
    return CovariateSelection(included, excluded)


@dataclass
class DesignLevel:
    level: int
    label: str
    caution: str | None


def classify_design_level(
    *,
    longitudinal: bool,
    baseline_covariates: bool,
    baseline_outcome_controlled: bool,
    prior_exposure_controlled: bool,
    randomized: bool,
) -> DesignLevel:
    """Place a study design on the five-level causal-evidence ladder.

    1 cross-sectional, 2 longitudinal + baseline covariates, 3 + baseline
    outcome, 4 + prior exposure, 5 randomized trial.  The ladder is
    cumulative; flag combinations that skip a rung are rejected.  Levels
    below 3 carry a caution.
    """
    if randomized:
        return DesignLevel(5, DESIGN_LABELS[5], None)
    if not longitudinal:
        if baseline_outcome_controlled or prior_exposure_controlled:
            raise ValidationError(
                "inconsistent design flags: baseline-outcome or prior-exposure "
                "control requires a longitudinal design"
            )
        return DesignLevel(1, DESIGN_LABELS[1], LOW_LEVEL_CAUTION)
    if prior_exposure_controlled and not baseline_outcome_controlled:
        raise ValidationError(
            "inconsistent design flags: prior-exposure control without baseline-outcome control"
        )
    if baseline_outcome_controlled and not baseline_covariates:
        raise ValidationError(
            "inconsistent design flags: baseline-outcome control without baseline covariates"
        )
    if not baseline_covariates:
        return DesignLevel(1, DESIGN_LABELS[1], LOW_LEVEL_CAUTION)
    level = 2
    if baseline_outcome_controlled:
        level = 3
    if prior_exposure_controlled:
        level = 4
    caution = LOW_LEVEL_CAUTION if level < 3 else None
    return DesignLevel(level, DESIGN_LABELS[level], caution)
