"""Desk-scale simulators and a small factory keyed by environment kind."""
from .goal import GoalEnv, GoalState, LinearEnv, NonlinearEnv, StepRecord, double_integrator, planar_double_integrator
from .routing import RoutingConfig, RoutingEnv, RoutingState, routing_reward
from .supply_chain import (
    NetworkRecord,
    SupplyChainConfig,
    SupplyChainEnv,
    SupplyChainState,
    demand_mean,
    sample_demand,
    ten_store_config,
)
from ..errors import InvalidConfig

ENV_KINDS = ("linear", "nonlinear", "supply_chain", "supply_chain_10", "routing")


def make_env(kind: str, **params):
    """Build an environment from its kind name and keyword parameters."""
    try:
        if kind == "linear":
            return LinearEnv(**params)
        if kind == "nonlinear":
            return NonlinearEnv(**params)
        if kind == "supply_chain":
            return SupplyChainEnv(SupplyChainConfig(**params))
        if kind == "supply_chain_10":
            return SupplyChainEnv(ten_store_config(**params))
        if kind == "routing":
            return RoutingEnv(RoutingConfig(**params))
    except TypeError as exc:
        raise InvalidConfig(f"bad parameters for {kind}: {exc}") from exc
    raise InvalidConfig(f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")
