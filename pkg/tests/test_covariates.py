import pytest

from outcomewide.covariates import (
    REASON_INSTRUMENT,
    REASON_MEDIATOR,
    REASON_NO_CAUSE,
    CovariateTag,
    classify_design_level,
    select_covariates,
)
from outcomewide.errors import ValidationError


def tag(name, cause_exp=False, cause_out=False, instrument=False, proxy=False, prior=True):
    return CovariateTag(
        name=name,
        cause_of_exposure=cause_exp,
        cause_of_any_outcome=cause_out,
        known_instrument=instrument,
        proxy_for_unmeasured_common_cause=proxy,
        temporally_prior_to_exposure=prior,
    )


class TestSelectCovariates:
    def test_cause_of_exposure_included(self):
        out = select_covariates([tag("age", cause_exp=True)])
        assert out.included == ["age"]

    def test_cause_of_outcome_included(self):
        out = select_covariates([tag("income", cause_out=True)])
        assert out.included == ["income"]

    def test_proxy_included(self):
        out = select_covariates([tag("zip", proxy=True)])
        assert out.included == ["zip"]

    def test_instrument_excluded_even_if_cause_of_exposure(self):
        out = select_covariates([tag("lottery", cause_exp=True, instrument=True)])
        assert out.included == []
        assert out.excluded == [("lottery", REASON_INSTRUMENT)]

    def test_all_flags_false_excluded(self):
        out = select_covariates([tag("noise")])
        assert out.excluded == [("noise", REASON_NO_CAUSE)]

    def test_not_prior_excluded_as_mediator(self):
        out = select_covariates([tag("bmi", cause_exp=True, cause_out=True, prior=False)])
        assert out.excluded == [("bmi", REASON_MEDIATOR)]

    def test_every_exclusion_has_reason(self):
        tags = [tag("a", cause_exp=True), tag("b", instrument=True, cause_exp=True),
                tag("c"), tag("d", prior=False)]
        out = select_covariates(tags)
        assert len(out.included) + len(out.excluded) == 4
        assert all(reason for _, reason in out.excluded)


class TestClassifyDesign:
    def test_cross_sectional(self):
        lvl = classify_design_level(longitudinal=False, baseline_covariates=False,
                                    baseline_outcome_controlled=False,
                                    prior_exposure_controlled=False, randomized=False)
        assert lvl.level == 1 and "cross-sectional" in lvl.label
        assert lvl.caution

    def test_level_two(self):
        lvl = classify_design_level(longitudinal=True, baseline_covariates=True,
                                    baseline_outcome_controlled=False,
                                    prior_exposure_controlled=False, randomized=False)
        assert lvl.level == 2 and lvl.caution

    def test_level_three_no_caution(self):
        lvl = classify_design_level(longitudinal=True, baseline_covariates=True,
                                    baseline_outcome_controlled=True,
                                    prior_exposure_controlled=False, randomized=False)
        assert lvl.level == 3 and lvl.caution is None

    def test_level_four(self):
        lvl = classify_design_level(longitudinal=True, baseline_covariates=True,
                                    baseline_outcome_controlled=True,
                                    prior_exposure_controlled=True, randomized=False)
        assert lvl.level == 4

    def test_randomized_is_five(self):
        lvl = classify_design_level(longitudinal=False, baseline_covariates=False,
                                    baseline_outcome_controlled=False,
                                    prior_exposure_controlled=False, randomized=True)
        assert lvl.level == 5

    def test_baseline_outcome_without_longitudinal_errors(self):
        with pytest.raises(ValidationError, match="longitudinal"):
            classify_design_level(longitudinal=False, baseline_covariates=True,
                                  baseline_outcome_controlled=True,
                                  prior_exposure_controlled=False, randomized=False)

    def test_prior_exposure_without_baseline_outcome_errors(self):
        with pytest.raises(ValidationError, match="prior-exposure"):
            classify_design_level(longitudinal=True, baseline_covariates=True,
                                  baseline_outcome_controlled=False,
                                  prior_exposure_controlled=True, randomized=False)
