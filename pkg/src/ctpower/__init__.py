"""Transmit-power allocation minimizing convex costs of packet completion times."""

from .costs import CostSpec, epigraph_reform, eval_cost, harmonic_mean_utility, utility_from_cost
from .fading import AdaptiveSolution, FadingStates, solve_adaptive_avg, solve_adaptive_expected_cost
from .model import (
    LinkState,
    NetworkInstance,
    ParseError,
    PowerAllocation,
    completion_time,
    db_to_linear,
    link_state,
    rate,
    sinr,
)
from .region import RegionTrace, convexity_audit, trace_completion_region
from .robust import (
    ChannelDistribution,
    LinkShape,
    LogNormal,
    Nakagami,
    OutageSpec,
    Rayleigh,
    ReliabilityEstimate,
    RobustProblem,
    log_concavity_probe,
    reliability_mc,
    reliability_rayleigh_closed,
    solve_robust,
)
from .solver import (
    Certificate,
    InfeasibleError,
    Solution,
    SolveOptions,
    SolverError,
    TransformedPoint,
    brute_force_oracle,
    ct_bound,
    feasibility_residual,
    solve_perfect_csi,
)

__version__ = "0.1.0"
