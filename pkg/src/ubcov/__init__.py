"""Covariance and precision estimation for interconnected-community structures.

Large covariance matrices whose variables form K interconnected communities
are stored as K x K block coordinates.  The package provides the exact
coordinate algebra, closed-form (minimum variance unbiased) estimators with
exact finite-sample standard errors, hard thresholding for regimes with more
communities than observations, singleton handling, and a reproducible Monte
Carlo harness, all surfaced through the ``ubcov`` command line tool.
"""

from .blocks import (
    NotPositiveDefiniteError,
    Partition,
    PdCheck,
    SingularityError,
    UniformBlock,
    add,
    eigenvalues,
    expand,
    frobenius_distance,
    identity,
    inverse,
    is_positive_definite,
    make_uniform_block,
    multiply,
    spectral_distance,
    subtract,
)
from .estimation import (
    BlockStats,
    ThetaEstimate,
    block_stats,
    compute_inference,
    estimate_correlation_mode,
    estimate_from_data,
    estimate_theta,
    exact_covariance_matrix,
    exact_variance_theta,
    normal_quantile,
    plugin_covariance,
    plugin_precision,
    sample_covariance,
    theta_names,
    theta_vector,
    wald_ci,
)
from .simulation import (
    ScenarioSpec,
    SimReport,
    frobenius_ub,
    run_scenario,
    sample_mvn,
    scenario1_coords,
    scenario2_coords,
    spectral_ub,
    wishart_perturbation,
)
from .singletons import (
    AugmentedCov,
    estimate_augmented,
    hard_threshold_dense,
    soft_threshold_dense,
    split_augmented,
)
from .thresholding import (
    LargeKEstimate,
    SelectedLambda,
    ThresholdConfig,
    estimate_large_k,
    hard_threshold_theta,
    select_lambda,
)

__version__ = "0.1.0"
