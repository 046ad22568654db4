"""Time-consistent mean-variance reinsurance design under heterogeneous beliefs.

The package computes equilibrium reinsurance contracts for an insurer with
mean-variance preferences facing a reinsurer who prices with her own belief
(likelihood ratio or distortion, including VaR and ES), under the
no-sabotage incentive constraint.  It cross-validates the structured
solvers against a brute-force convex program and Monte Carlo simulation of
the controlled surplus.
"""

from .beliefs import (
    ClaimDistribution,
    DistortionFunction,
    LikelihoodRatio,
    ReinsurerBelief,
    check_reinsurer_consistency,
    distorted_survival,
    distortion_es,
    distortion_identity,
    distortion_var,
    effective_ymax,
    es_alpha,
    lr_constant,
    lr_exponential,
    lr_piecewise_linear,
    make_exponential,
    reinsurer_distortion,
    reinsurer_es,
    reinsurer_from_lr,
    reinsurer_homogeneous,
    reinsurer_var,
    var_alpha,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .hjb import GridTooCoarseError, ValueFunctions, hjb_residual, solve_value_odes
from .indemnity import (
    ConstructionError,
    IndemnityFunction,
    MarginalIndemnity,
    Segment,
    Theorem2Params,
    UnconstrainedIndemnity,
    build_theorem2,
    check_class_C,
    dual_truncated,
    excess_of_loss,
    full_indemnity,
    lambda_saturation_bounds,
    layer_contract,
    limited_loss,
    phi_lambda,
    phi_lambda_deriv,
    segments_to_json,
    zero_indemnity,
)
from .market import MarketParams, validate_net_profit
from .objective import (
    first_order_residual,
    lagrangian_G,
    lemma_L,
    lemma_L_grid,
    objective_H,
    premium,
    q_expectation,
    retained_moments,
)
from .oracle import DiscretizationError, DiscretizedProblem, discretize, solve_qp
from .partition import Partition, PartitionError, classify_partition
from .quadrature import QuadratureError, QuadratureSpec, integrate
from .simulate import (
    CoverageError,
    SimConfig,
    SimResult,
    estimate_objective,
    simulate_terminal,
)
from .solver import (
    CERTIFY_TOL,
    EquilibriumEntry,
    EquilibriumSolution,
    detect_solver,
    solve_at,
    solve_decreasing_lr,
    solve_es,
    solve_exponential,
    solve_general,
    solve_homogeneous,
    solve_path,
    solve_unconstrained,
    solve_var,
)

__version__ = "0.1.0"
