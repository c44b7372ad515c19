"""E-values and the sharp confounding bias bound.

The E-value of an association is the minimum strength, on the risk-ratio
scale, that an unmeasured confounder would need with both the exposure and
the outcome (conditional on the measured covariates) to fully explain the
association away.  Estimates on other scales are first converted to an
approximate risk ratio; every report records the conversion chain it used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

RISK_RATIO = "risk_ratio"
ODDS_RATIO_RARE = "odds_ratio_rare"
ODDS_RATIO_COMMON = "odds_ratio_common"
MEAN_DIFFERENCE_STANDARDIZED = "mean_difference_standardized"
EFFECT_SCALES = (RISK_RATIO, ODDS_RATIO_RARE, ODDS_RATIO_COMMON, MEAN_DIFFERENCE_STANDARDIZED)

#: Standardized-difference to log-risk-ratio slope, and the matching CI factor.
D_TO_LOG_RR = 0.91
D_CI_FACTOR = 1.78

#: Outcome prevalence above which an odds ratio is treated as common-outcome.
COMMON_OUTCOME_PREVALENCE = 0.10


@dataclass
class EffectEstimate:
    """An exposure effect with its CI on one of the supported scales."""

    value: float
    ci: tuple[float, float]
    scale: str
    se: float | None = None

    def __post_init__(self):
        if self.scale not in EFFECT_SCALES:
            raise ValidationError(f"unsupported effect scale {self.scale!r}")
        lo, hi = self.ci
        if lo > hi:
            raise ValidationError(f"inverted confidence interval ({lo}, {hi})")
        if not lo <= self.value <= hi:
            raise ValidationError("estimate must lie inside its confidence interval")
        if self.scale != MEAN_DIFFERENCE_STANDARDIZED and (self.value <= 0 or lo <= 0):
            raise ValidationError("ratio-scale estimates and limits must be positive")


@dataclass
class EValueReport:
    evalue_point: float
    evalue_ci: float
    rr_used: float
    conversion: str


def evalue_point(rr: float) -> float:
    """E-value for a risk ratio; protective ratios are inverted first."""
    if not rr > 0:
        raise ValidationError(f"risk ratio must be positive, got {rr}")
    if rr < 1.0:
        rr = 1.0 / rr
    return rr + math.sqrt(rr * (rr - 1.0))


def evalue_interval(rr: float, lo: float, hi: float) -> float:
    """E-value for the CI limit closest to the null; 1 if the CI spans 1."""
    if lo > hi:
        raise ValidationError(f"inverted confidence interval ({lo}, {hi})")
    if not (lo <= rr <= hi):
        raise ValidationError("estimate must lie inside its confidence interval")
    if not (rr > 0 and lo > 0):
        raise ValidationError("risk-ratio inputs must be positive")
    if lo <= 1.0 <= hi:
        return 1.0
    return evalue_point(lo if lo > 1.0 else hi)


def bias_bound(rr_uy: float, rr_au: float) -> float:
    """Sharp maximum of observed/true risk ratio for given confounder strengths.

    ``rr_uy`` bounds the confounder-outcome association within either exposure
    arm; ``rr_au`` bounds the exposure-confounder association.  The bound is
    attained by a suitably distributed confounder, so it cannot be improved
    without extra assumptions.
    """
    if rr_uy < 1.0 or rr_au < 1.0:
        raise ValidationError("confounder association parameters must be >= 1")
    return rr_uy * rr_au / (rr_uy + rr_au - 1.0)


def convert_to_rr(est: EffectEstimate) -> tuple[EffectEstimate, str]:
    """Convert an effect estimate to the (approximate) risk-ratio scale.

    Standardized mean differences d use RR ~ exp(0.91 d) with CI limits
    exp(0.91 d -/+ 1.78 s_d); rare-outcome odds ratios pass through unchanged;
    common-outcome odds ratios take a square root.  Returns the converted
    estimate and a description of the chain applied.
    """
    if est.scale == RISK_RATIO:
        return est, "risk ratio (no conversion)"
    if est.scale == MEAN_DIFFERENCE_STANDARDIZED:
        if est.se is None:
            raise ValidationError("standardized-difference conversion needs the standard error")
        d, sd = est.value, est.se
        rr = math.exp(D_TO_LOG_RR * d)
        lo = math.exp(D_TO_LOG_RR * d - D_CI_FACTOR * sd)
        hi = math.exp(D_TO_LOG_RR * d + D_CI_FACTOR * sd)
        chain = (f"standardized difference -> RR via exp({D_TO_LOG_RR} d), "
                 f"CI via exp({D_TO_LOG_RR} d -/+ {D_CI_FACTOR} s_d)")
        return EffectEstimate(rr, (lo, hi), RISK_RATIO), chain
    if est.scale == ODDS_RATIO_RARE:
        out = EffectEstimate(est.value, est.ci, RISK_RATIO)
        return out, "rare-outcome OR taken as RR"
    if est.scale == ODDS_RATIO_COMMON:
        lo, hi = est.ci
        out = EffectEstimate(math.sqrt(est.value), (math.sqrt(lo), math.sqrt(hi)), RISK_RATIO)
        return out, "common-outcome OR -> RR via square root"
    raise ValidationError(f"unsupported effect scale {est.scale!r}")


@dataclass
class OutcomeMeta:
    """Per-outcome facts needed to pick the conversion for a model-scale fit."""

    prevalence: float | None = None
    outcome_sd: float = 1.0
    common_threshold: float = COMMON_OUTCOME_PREVALENCE


def _effect_from_fit(fit, meta: OutcomeMeta) -> tuple[EffectEstimate, str]:
    lo, hi = fit.ci
    if fit.scale == "mean_difference":
        sd = meta.outcome_sd
        pre = "" if sd == 1.0 else f"divided by outcome sd {sd:g}; "
        return (
            EffectEstimate(fit.estimate / sd, (lo / sd, hi / sd),
                           MEAN_DIFFERENCE_STANDARDIZED, se=fit.se / sd),
            pre,
        )
    if fit.scale == "log_risk":
        return EffectEstimate(math.exp(fit.estimate), (math.exp(lo), math.exp(hi)), RISK_RATIO), "exp -> "
    if fit.scale == "log_odds":
        if meta.prevalence is None:
            raise ValidationError("odds-ratio conversion needs the outcome prevalence")
        scale = ODDS_RATIO_COMMON if meta.prevalence > meta.common_threshold else ODDS_RATIO_RARE
        return EffectEstimate(math.exp(fit.estimate), (math.exp(lo), math.exp(hi)), scale), "exp -> OR; "
    raise ValidationError(f"unsupported fit scale {fit.scale!r}")


def evalue_report(fit, meta: OutcomeMeta | None = None) -> EValueReport:
    """E-values for an estimate and for its CI limit closest to the null.

    ``fit`` is either a model-scale fit (linear / logistic / modified Poisson
    result with ``estimate``, ``ci``, ``se``, ``scale``) or an
    :class:`EffectEstimate` already on a supported scale.
    """
    meta = meta or OutcomeMeta()
    if isinstance(fit, EffectEstimate):
        est, prefix = fit, ""
    else:
        est, prefix = _effect_from_fit(fit, meta)
    rr_est, chain = convert_to_rr(est)
    point = evalue_point(rr_est.value)
    ci = evalue_interval(rr_est.value, *rr_est.ci)
    return EValueReport(point, ci, rr_est.value, prefix + chain)
