"""rcmlab: a random connection model laboratory.

Simulates Poisson random connection models under truncated/scaled connection
functions, evaluates the closed-form and limiting moment formulas of the
isolated-vertex and component counting statistics by deterministic
quadrature, and statistically verifies the central limit behaviour, the
degenerate swapped-truncation limit, the domination bound, the martingale
variance identity, and the quadratic variance lower bound.
"""

from .connfn import (
    ConnectionFunction,
    ConnFnError,
    exponential,
    gaussian,
    hard_disk,
    make_variant,
    table_function,
    verify_identities,
)
from .moments import (
    DominationConstant,
    ModelConfig,
    ModelError,
    MomentReport,
    domination_constants,
    isolation_prob,
    limit_mean_excess,
    limit_var_excess,
    limit_var_isolated,
    mean_excess,
    mean_excess_unscaled,
    mean_isolated,
    pair_factor,
    swapped_truncation_means,
    var_excess,
    var_excess_unscaled,
    var_isolated,
    variance_ratio,
)
from .quadrature import (
    QuadratureError,
    QuadratureSpec,
    QuadResult,
    Region,
    box_covariogram,
    double_region_integral,
    overlap_integral,
    radial_integral,
    unit_box,
)
from .simulator import (
    LatticeRegion,
    PointGraph,
    SimPolicy,
    SimulationError,
    SimWindow,
    count_components,
    count_isolated,
    count_truncation_family,
    margin_policy,
    pair_uniform,
    sample_points,
    simulate_graph,
)
from .stats import (
    FiniteFiltrationSpace,
    LowerBoundCertificate,
    StatRequest,
    StatSample,
    StatsError,
    covariance_field,
    ks_normality,
    martingale_identity_oracle,
    random_filtration_space,
    replicate,
    replicate_many,
    stationary_variance_check,
    variance_density_convergence,
    variance_lower_bound,
)

__version__ = "0.1.0"
