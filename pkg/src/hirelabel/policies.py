"""Behavior policies for dataset collection and the default low-level controllers.

High-level policies are callables ``policy(obs, rng) -> HighAction``. Data
collectors log only low-level transitions; the high-level action is never
written to the dataset.
"""
from __future__ import annotations

import enum
import itertools
import warnings
from typing import Callable, Optional, Sequence

import numpy as np

from .control import CostMatrices, LinearDynamics, LqrTracker
from .core import HighAction, HighActionKind, SeededRng, Transition, ensure_rng
from .envs.goal import ACTION_PENALTY, GoalEnv
from .envs.routing import RoutingEnv
from .envs.supply_chain import SupplyChainEnv


class PolicyKind(str, enum.Enum):
    HIERARCHICAL_EXPERT = "HierarchicalExpert"
    DIRICHLET_DISPERSION = "DirichletDispersion"
    PROPORTIONAL_HEURISTIC = "ProportionalHeuristic"
    ORDER_UP_TO = "OrderUpTo"
    RANDOM_LOW_LEVEL = "RandomLowLevel"
    OBSERVED_STATE_BASELINE = "ObservedStateBaseline"


# Exhaustive search over store levels {5..20}^3 on the default three-store
# network (warehouse level fixed at WAREHOUSE_LEVEL), 20 episodes, seed 0.
# Regenerate with ``order_up_to_grid_search(SupplyChainEnv())``.
FROZEN_ORDER_UP_TO = (14.0, 20.0, 19.0)  # mean return -829.85
WAREHOUSE_LEVEL = 25.0


class AllZeroForecast(UserWarning):
    pass


# ---------------------------------------------------------------------------
# low level


def default_cost(env: GoalEnv, q_pos: float = 1.0, q_vel: float = 1.0, r: float = 1000.0) -> CostMatrices:
    """Diagonal tracking weights: ``q_pos`` on positions, ``q_vel`` on velocities.

    The heavy effort weight makes the tracker close only part of the gap to
    its goal within one window, so a good high level has to aim past the
    point it wants to reach.
    """
    q = np.array([q_pos if i in env.position_dims else q_vel for i in range(env.n)])
    return CostMatrices(Q=np.diag(q), R=r * np.eye(env.m))


def position_goal_map(env: GoalEnv) -> np.ndarray:
    """Goal map whose goals are positions with zero target velocity."""
    G = np.zeros((env.n, len(env.position_dims)))
    for j, i in enumerate(env.position_dims):
        G[i, j] = 1.0
    return G


def default_low_level(env: GoalEnv, cost: Optional[CostMatrices] = None, horizon: int = 5,
                      dyn: Optional[LinearDynamics] = None, full_state_goals: bool = False) -> LqrTracker:
    """Goal-tracking LQR on the environment's nominal model, clipped to the action box.

    Goals are positions (targets at rest) unless ``full_state_goals``.
    """
    dyn = env.nominal_dynamics() if dyn is None else dyn
    cost = default_cost(env) if cost is None else cost
    G = None if full_state_goals else position_goal_map(env)
    return LqrTracker(dyn, cost, horizon, action_low=env.action_low, action_high=env.action_high, goal_map=G)


# ---------------------------------------------------------------------------
# goal environments


def window_optimal_goal(tracker: LqrTracker, x, goal, T_abs: Optional[int] = None) -> np.ndarray:
    """Goal ``u`` maximizing the window's nominal return under ``tracker``.

    States and actions inside the window are affine in ``u`` (clipping
    ignored), so the summed reward is a concave quadratic in ``u``; it is
    maximized by least squares on ``p + 1`` probe rollouts.
    """
    x = np.asarray(x, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    p = tracker.goal_dim
    T = tracker.horizon if T_abs is None else min(T_abs, tracker.horizon)
    probes = tracker.target(np.vstack([np.zeros(p), np.eye(p)]))
    X = np.broadcast_to(x, probes.shape).copy()
    rows = []
    w = np.sqrt(ACTION_PENALTY)
    for i in range(T):
        A = (X - probes) @ tracker.gains.Ks[i].T
        X = tracker.dyn.step(X, A)
        rows.append(np.hstack([X - goal, w * A]))
    R = np.stack(rows, axis=1).reshape(p + 1, -1)
    r0 = R[0]
    J = (R[1:] - r0).T
    u, *_ = np.linalg.lstsq(J, -r0, rcond=None)
    return u


class WindowGoalSetter:
    """Scripted goal-setter: the window-optimal goal plus Gaussian exploration noise."""

    def __init__(self, env: GoalEnv, tracker: LqrTracker, T_abs: int = 5, noise_std: float = 0.0):
        self.env = env
        self.tracker = tracker
        self.T_abs = T_abs
        self.noise_std = float(noise_std)

    def __call__(self, obs, rng=None) -> HighAction:
        obs = np.asarray(obs, dtype=np.float64)
        n = self.env.n
        u = window_optimal_goal(self.tracker, obs[:n], obs[n:2 * n], self.T_abs)
        if self.noise_std > 0:
            u = u + self.noise_std * ensure_rng(rng).standard_normal(u.size)
        return HighAction(u, HighActionKind.GOAL_STATE)


class UniformGoalPolicy:
    """Goals drawn uniformly from a box (the environment's goal box by default)."""

    def __init__(self, env: GoalEnv, dim: Optional[int] = None, low=None, high=None):
        self.env = env
        self.dim = len(env.position_dims) if dim is None else dim
        self.low = env.goal_low if low is None else low
        self.high = env.goal_high if high is None else high

    def __call__(self, obs, rng=None) -> HighAction:
        u = ensure_rng(rng).uniform(self.low, self.high, size=self.dim)
        return HighAction(u, HighActionKind.GOAL_STATE)


class HoldPolicy:
    """Commands the current position: the do-nothing floor for score normalization."""

    def __init__(self, env: GoalEnv, tracker: LqrTracker):
        self.env = env
        self.tracker = tracker

    def __call__(self, obs, rng=None) -> HighAction:
        x = np.asarray(obs, dtype=np.float64)[:self.env.n]
        G = self.tracker.goal_map
        u = x if G is None else np.linalg.pinv(G) @ x
        return HighAction(u, HighActionKind.GOAL_STATE)


def run_goal_episode(env: GoalEnv, policy: Callable, low_level: Callable, rng, T_abs: int = 5,
                     episode: int = 0, policy_rng=None, keep_actions: bool = True,
                     keep_rewards: bool = True) -> tuple[list[Transition], float]:
    """Roll one hierarchical episode; returns the low-level transitions and the return."""
    rng = ensure_rng(rng)
    policy_rng = rng.child(0x9E3779B9) if policy_rng is None else ensure_rng(policy_rng)
    state, obs = env.reset(rng)
    records = []
    total = 0.0
    while not env.done(state):
        u = policy(obs, policy_rng)
        state, obs, r = env.step_hierarchical(state, u, low_level, T_abs, records)
        total += r
    out = [
        Transition(episode=episode, t=t, s=rec.s, a=rec.a if keep_actions else None,
                   r=rec.r if keep_rewards else None, s_next=rec.s_next)
        for t, rec in enumerate(records)
    ]
    return out, total


def hierarchical_expert(env: GoalEnv, rng, low_level: Optional[Callable] = None, T_abs: int = 5,
                        noise_std: float = 0.0, episode: int = 0, keep_actions: bool = True) -> list[Transition]:
    """One expert episode: window-optimal goals tracked by the LQR low level."""
    low_level = default_low_level(env, horizon=T_abs) if low_level is None else low_level
    policy = WindowGoalSetter(env, low_level, T_abs, noise_std)
    return run_goal_episode(env, policy, low_level, rng, T_abs, episode, keep_actions=keep_actions)[0]


def random_low_level(env: GoalEnv, rng) -> Callable:
    """Uniform primitive actions in the action box, ignoring ``u``."""
    rng = ensure_rng(rng)

    def act(x, u, i=0):
        return rng.uniform(env.action_low, env.action_high)

    return act


# ---------------------------------------------------------------------------
# network environments


def dirichlet_dispersion(n: int, rng) -> HighAction:
    """Flat-Dirichlet draw via normalized unit-rate Gamma variables."""
    if n < 2:
        raise ValueError("need at least two stations")
    g = ensure_rng(rng).gamma(1.0, 1.0, size=n)
    return HighAction(g / g.sum(), HighActionKind.DISTRIBUTION)


def proportional_heuristic(forecast, idle_total: int | None = None) -> HighAction:
    """Distribution proportional to forecast demand, averaged over the forecast rows.

    ``forecast`` is per-station demand of shape (N,) or (K, N). An all-zero
    forecast falls back to the uniform distribution with a warning.
    ``idle_total`` is accepted for symmetry with the count targets; the LP
    turns the distribution into integer counts.
    """
    lam = np.asarray(forecast, dtype=np.float64)
    if lam.ndim == 2:
        lam = lam.mean(axis=0)
    if np.any(lam < 0):
        raise ValueError("forecast demand must be nonnegative")
    total = lam.sum()
    if total <= 0:
        warnings.warn("forecast is zero everywhere; using the uniform distribution", AllZeroForecast)
        return HighAction(np.full(lam.size, 1.0 / lam.size), HighActionKind.DISTRIBUTION)
    return HighAction(lam / total, HighActionKind.DISTRIBUTION)


def order_up_to(q, in_transit, S_levels) -> np.ndarray:
    """``max(0, S - q - in_transit)`` elementwise."""
    S = np.asarray(S_levels, dtype=np.float64)
    if np.any(S < 0):
        raise ValueError("order-up-to levels must be nonnegative")
    return np.maximum(0.0, S - np.asarray(q, dtype=np.float64) - np.asarray(in_transit, dtype=np.float64))


class DispersionPolicy:
    def __init__(self, env: RoutingEnv):
        self.env = env

    def __call__(self, obs, rng=None) -> HighAction:
        return dirichlet_dispersion(self.env.n_nodes, rng)


class ProportionalPolicy:
    def __init__(self, env: RoutingEnv):
        self.env = env

    def __call__(self, obs, rng=None) -> HighAction:
        parts = self.env.unpack(obs)
        return proportional_heuristic(parts["forecast"], int(round(parts["idle"].sum() + parts["arrivals"].sum())))


class OrderUpToPolicy:
    """Order-up-to levels on a supply-chain network as a mixed high-level action.

    ``noise_std`` adds Gaussian noise to the orders (clipped at zero), giving
    a deliberately weaker behavior policy.
    """

    def __init__(self, env: SupplyChainEnv, store_levels: Optional[Sequence[float]] = None,
                 warehouse_level: float = WAREHOUSE_LEVEL, noise_std: float = 0.0):
        self.env = env
        if store_levels is None:
            if FROZEN_ORDER_UP_TO is None or len(FROZEN_ORDER_UP_TO) != env.n_stores:
                store_levels = env.capacity[1:] * 0.8
            else:
                store_levels = FROZEN_ORDER_UP_TO
        self.levels = np.concatenate([[warehouse_level], np.asarray(store_levels, dtype=np.float64)])
        self.noise_std = float(noise_std)

    def __call__(self, obs, rng=None) -> HighAction:
        parts = self.env.unpack(obs)
        orders = order_up_to(parts["q"], parts["in_transit"], self.levels)
        if self.noise_std > 0:
            orders = np.maximum(0.0, orders + self.noise_std * ensure_rng(rng).standard_normal(orders.size))
        return HighAction(orders, HighActionKind.MIXED)


class NoOrderPolicy:
    """Never produces or ships: the score floor for supply-chain normalization."""

    def __init__(self, env: SupplyChainEnv):
        self.env = env

    def __call__(self, obs, rng=None) -> HighAction:
        return HighAction(np.zeros(self.env.n_nodes), HighActionKind.MIXED)


def network_action_vector(env, record) -> np.ndarray:
    """Logged primitive action: edge flows, followed by production for supply chains."""
    if record.production is None:
        return np.asarray(record.flows, dtype=np.float64)
    return np.concatenate([record.flows, record.production])


def run_network_episode(env, policy: Callable, rng, episode: int = 0, policy_rng=None,
                        keep_actions: bool = True) -> tuple[list[Transition], float]:
    """Roll one episode through the LP low level; returns transitions and the return."""
    rng = ensure_rng(rng)
    policy_rng = rng.child(0x9E3779B9) if policy_rng is None else ensure_rng(policy_rng)
    state, obs = env.reset(rng)
    records = []
    total = 0.0
    while not env.done(state):
        state, obs, r = env.step_hierarchical(state, policy(obs, policy_rng), records=records)
        total += r
    out = [
        Transition(episode=episode, t=t, s=rec.s, a=network_action_vector(env, rec) if keep_actions else None,
                   r=rec.r, s_next=rec.s_next)
        for t, rec in enumerate(records)
    ]
    return out, total


def episode_rng(seed: int, episode: int) -> SeededRng:
    """Environment stream for one episode of a seeded collection run."""
    return SeededRng(seed).child(episode + 1)


def order_up_to_grid_search(env: SupplyChainEnv, levels: Sequence[float] = range(5, 21), episodes: int = 20,
                            seed: int = 0, warehouse_level: float = WAREHOUSE_LEVEL):
    """Exhaustive search of store order-up-to levels by mean episode return.

    Every candidate is scored on the same seeded episodes. Returns
    ``(best_levels, best_mean, table)`` with ``table`` a list of
    ``(levels, mean)`` in search order.
    """
    table = []
    best, best_mean = None, -np.inf
    for combo in itertools.product(levels, repeat=env.n_stores):
        policy = OrderUpToPolicy(env, combo, warehouse_level)
        mean = float(np.mean([run_network_episode(env, policy, episode_rng(seed, e), e)[1] for e in range(episodes)]))
        table.append((tuple(float(c) for c in combo), mean))
        if mean > best_mean:
            best, best_mean = tuple(float(c) for c in combo), mean
    return best, best_mean, table
