"""Shapley value estimation with fidelity scores and fairness diagnostics."""

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateBoundError,
    EmptyInputError,
    ExternalUtilityError,
    FormatError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidCoalitionError,
    InvalidDistributionError,
    NumericError,
    ShapfairError,
    ZeroProbabilityError,
)
from .estimators import (
    EstimationResult,
    GaeConfig,
    RunningEstimate,
    estimate_gae,
    estimate_greedy,
    estimate_mc,
    fidelity_score,
    run_estimator,
)
from .exact import ExactProfile, check_axiom_clauses, exact_moments, exact_shapley_permutations, exact_shapley_subsets
from .fairness import (
    chebyshev_check,
    check_a1,
    check_a2,
    check_a3,
    budget_bound,
    delta_bound,
    fairness_report,
    fidelity_report,
    nl_nsw,
    rank_metrics,
)
from .game import CooperativeGame, TableGame, load_table, make_synthetic, save_table, subprocess_game
from .proposal import ProposalParams, map_theta, mle_theta, oracle_theta, proposal_variance
from .sampler import RngStream, StreamFactory

__version__ = "0.1.0"
