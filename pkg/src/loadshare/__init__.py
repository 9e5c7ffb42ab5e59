"""Estimation and testing for load-sharing systems with sequential order
statistics under the conditional proportional hazard rate (CPHR) model."""

from .estimators import (
    CountTable,
    EstimateResult,
    EstimationError,
    PooledEstimate,
    exposure_stats,
    failure_counts,
    fit_location,
    mle_location_scale,
    mle_order_restricted,
    mle_pooled_sos,
    mle_scale_family,
    mle_unrestricted,
    mle_unrestricted_sequence,
    order_restrict,
)
from .inference import (
    LrtResult,
    MissingQuantileError,
    QuantileTable,
    TestNotComputable,
    euclidean_distance_to_null,
    lrt,
    lrt_statistic,
    lrt_test,
    simulate_null_quantiles,
)
from .isotonic import isotonic_nondecreasing
from .model import (
    Baseline,
    BaselineSpec,
    Dataset,
    DomainError,
    Identity,
    Log,
    MissingParameterError,
    Observation,
    ParamTable,
    Power,
    cphr_hazard,
    delta,
    esos_log_density,
    exponential,
    location_scale,
    log_likelihood,
    log_survival,
    scale_family,
)
from .simulator import ScenarioSpec, proportional_alpha, sample_dataset, sample_system, substream

__version__ = "0.1.0"
