"""Outcome-wide longitudinal analysis toolkit.

One exposure, many outcomes, one shared covariate set: a regression battery
(linear / logistic / modified Poisson), E-value robustness reports, and
multiplicity metrics that respect the correlation between outcomes, with
multiple-imputation support and table emitters.
"""

__version__ = "0.1.0"

from .data_model import (  # noqa: F401
    Column,
    Dataset,
    TransformRecord,
    column_prevalence,
    load_table,
    median_split,
    standardize_column,
    tertile_code,
    write_table,
)
from .glm import (  # noqa: F401
    DesignMatrix,
    FitResult,
    build_design_matrix,
    fit_linear,
    fit_logistic,
    fit_modified_poisson,
    min_detectable_estimate,
)
from .sensitivity import (  # noqa: F401
    EffectEstimate,
    EValueReport,
    bias_bound,
    convert_to_rr,
    evalue_interval,
    evalue_point,
    evalue_report,
)
from .multiplicity import (  # noqa: F401
    MultiplicityReport,
    NullIntervalReport,
    adjust_bonferroni_holm,
    null_rejection_interval,
    romano_wolf,
)
from .imputation import (  # noqa: F401
    ImputedSet,
    PooledResult,
    compare_mi_cc,
    complete_case_filter,
    impute_chained,
    pool_rubin,
)
from .covariates import (  # noqa: F401
    CovariateTag,
    classify_design_level,
    select_covariates,
)
from .spec import AnalysisSpec, ExposureSpec, Options, OutcomeSpec  # noqa: F401
from .pipeline import (  # noqa: F401
    OutcomeWideResult,
    run_interaction,
    run_lagged_exposure_wide,
    run_outcome_wide,
)
