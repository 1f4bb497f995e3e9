"""Group sequential designs for negative binomial (recurrent event) outcomes.

Planning, interim monitoring, small-sample adjustment, and Monte Carlo
evaluation of one-sided rate-ratio tests with error-spending boundaries.
"""

from .boundary import (
    Boundary,
    IntegrationError,
    LookSchedule,
    SpendingFunction,
    crossing_probability,
    custom_table,
    obrien_fleming_type,
    pocock_type,
    solve_boundary,
    spend,
    spending_levels,
)
from .nb_model import (
    EstimationError,
    MleFit,
    NbParams,
    NonConvergenceError,
    PatientRateModel,
    PatientRecord,
    TrialData,
    ZeroEventsError,
    ZeroInformationError,
    estimate_information,
    fisher_info_beta,
    fit_mle,
    fit_restricted_mle,
    information_level,
    log_likelihood,
    mom_rates,
    nb_pmf,
    sample_counts,
    sample_trial_paths,
)
from .planning import (
    AccrualCapped,
    AccrualToEnd,
    DesignSpec,
    EqualFollowup,
    ExplicitExposures,
    calendar_curves,
    calendar_time_for_information,
    fixed_design_information,
    max_information,
    sample_size,
)
from .small_sample import TBoundarySpec, modified_wald_test, solve_t_boundary
from .trial_sim import (
    InterimAnalyzer,
    OperatingCharacteristics,
    SimConfig,
    operating_characteristics,
    run_replication,
    scenario_grid,
)

__version__ = "0.1.0"
