"""Dense two-phase simplex and the network flow problems built on it."""
from .network import (
    DualityInverse,
    FlowDecision,
    NetworkProblem,
    complete_edges,
    distribution_to_counts,
    duality_inverse,
    flow_balance_inverse,
    flow_balance_targets,
    rebalancing_lp,
    rebalancing_policy,
    round_flows,
    star_edges,
    supplychain_lp,
    supplychain_policy,
)
from .simplex import LpProblem, LpSolution, Status, primal_residual, solve_lp
