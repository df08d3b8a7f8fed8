"""Two-sided marketplace experimentation lab.

Pairs an exact finite-market simulator of the consideration /
application / acceptance booking process with a mean-field analytic
engine, so that interference bias and variance of customer-randomized
(CR) and listing-randomized (LR) experiments can be computed, simulated,
and cross-validated.
"""

from .designs import DesignKind, DesignSpec
from .experiment import (
    RunSummary,
    build_experiment_market,
    derive_seed,
    estimate,
    replication_estimates,
    run_replications,
)
from .market_sim import (
    BookingTally,
    FiniteMarket,
    accept_applications,
    active_backend,
    available_backends,
    run_many,
    run_realization,
    sample_consideration_and_apply,
)
from .meanfield import (
    ALLOCATION_GRID,
    BiasReport,
    CrVarianceLimit,
    LrVarianceLimit,
    MarketSpec,
    RateMatrices,
    application_rates,
    asymptotic_bias,
    bias_differential_bound,
    booking_rates,
    calibrate_phi,
    cr_estimator_limit,
    cr_variance_limit,
    f_poisson_serve,
    find_lambda_star,
    gte_limit,
    limit_booking_rate,
    lr_estimator_limit,
    lr_variance_limit,
    rate_matrices,
    variance_approx_ratio,
)
from .oracle import TinyMarket, exact_expectations
from .sweeps import SweepPlan, bias_band, recommend_design, run_sweep

__version__ = "0.1.0"
