"""Station-level taxi network with Poisson trip requests and vehicle rebalancing.

Timeline of one step ``t``: the state holds idle vehicles per station after
passenger matching at ``t``. Rebalancing flows leave now and arrive after
their travel time. Then time advances: arrivals become idle, requests for
``t+1`` are drawn and matched greedily at each station (destinations in
index order, unmet requests are lost), and matched vehicles depart with
their passengers. The reward is passenger profit at ``t+1`` minus the
rebalancing cost at ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import HighAction, HighActionKind, SeededRng, ensure_rng
from ..errors import ConstraintViolation, InvalidConfig
from ..lp.network import (
    NetworkProblem,
    complete_edges,
    distribution_to_counts,
    rebalancing_policy,
    round_flows,
)
from .supply_chain import NetworkRecord


@dataclass(frozen=True)
class RoutingConfig:
    n_stations: int = 4
    fleet_size: int = 20
    episode_length: int = 20
    base_rate: float = 1.0
    rate_amplitude: float = 0.6
    period: int = 20
    travel_time: Optional[tuple] = None   # (N, N) integer steps; default 1 everywhere
    price: Optional[tuple] = None         # (N, N); default 4 + travel time
    cost: Optional[tuple] = None          # (N, N); default travel time
    forecast_horizon: int = 6
    forecast_noise: float = 0.1
    strict: bool = True

    def __post_init__(self):
        if self.n_stations < 2:
            raise InvalidConfig("need at least two stations")
        if self.fleet_size <= 0:
            raise InvalidConfig("fleet_size must be positive")
        if self.base_rate < 0 or self.rate_amplitude < 0 or self.rate_amplitude > 1:
            raise InvalidConfig("rates must be nonnegative with amplitude in [0, 1]")
        if self.episode_length < 1 or self.forecast_horizon < 1:
            raise InvalidConfig("episode_length and forecast_horizon must be >= 1")
        if self.travel_time is not None:
            tau = np.asarray(self.travel_time)
            off = ~np.eye(self.n_stations, dtype=bool)
            if tau.shape != (self.n_stations, self.n_stations) or np.any(tau[off] < 1):
                raise InvalidConfig("travel times must be an N x N matrix of integers >= 1")


@dataclass(frozen=True)
class RoutingState:
    idle: np.ndarray        # idle vehicles per station after matching
    pipeline: np.ndarray    # (N, L): vehicles arriving at each station in 1..L steps
    demand: np.ndarray      # (N, N) requests realized at t
    served: np.ndarray      # (N, N) passengers matched at t
    t: int
    rng: SeededRng = field(repr=False, compare=False)

    @property
    def in_transit(self) -> np.ndarray:
        return self.pipeline.sum(axis=1)


def routing_reward(passenger_flows, rebalance_flows, price, cost) -> float:
    """``sum f_P (p - c) - sum f_R c`` over origin-destination matrices."""
    fP = np.asarray(passenger_flows, dtype=np.float64)
    fR = np.asarray(rebalance_flows, dtype=np.float64)
    price = np.asarray(price, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    return float(np.sum(fP * (price - cost)) - np.sum(fR * cost))


class RoutingEnv:
    kind = "routing"

    def __init__(self, config: Optional[RoutingConfig] = None, **kw):
        self.config = config if config is not None else RoutingConfig(**kw)
        cfg = self.config
        N = cfg.n_stations
        self.n_nodes = N
        self.edges = complete_edges(N)
        tau = np.ones((N, N), dtype=int) if cfg.travel_time is None else np.asarray(cfg.travel_time, dtype=int)
        np.fill_diagonal(tau, 0)
        self.tau = tau
        self.cost = tau.astype(np.float64) if cfg.cost is None else np.asarray(cfg.cost, dtype=np.float64)
        self.price = (4.0 + tau) if cfg.price is None else np.asarray(cfg.price, dtype=np.float64)
        np.fill_diagonal(self.cost, 0.0)
        self.lead = max(int(tau.max()), 1)
        # fixed asymmetric pattern: each origin has its own phase and destination weights
        i = np.arange(N)
        self.phase = 2 * math.pi * i / N
        w = 1.0 + (np.add.outer(i, 2 * i) % N) / N
        np.fill_diagonal(w, 0.0)
        self.dest_weight = w / w.sum(axis=1, keepdims=True)

    @property
    def episode_length(self) -> int:
        return self.config.episode_length

    @property
    def obs_dim(self) -> int:
        N = self.n_nodes
        return N + N + N * self.config.forecast_horizon + N * self.lead

    @property
    def goal_dim(self) -> int:
        return self.n_nodes

    def rates(self, t: int) -> np.ndarray:
        """(N, N) Poisson request rates at step ``t``."""
        cfg = self.config
        origin = cfg.base_rate * (1.0 + cfg.rate_amplitude * np.sin(2 * math.pi * t / cfg.period + self.phase))
        return origin[:, None] * self.dest_weight * (cfg.fleet_size / (2.0 * self.n_nodes))

    def unpack(self, obs) -> dict:
        obs = np.asarray(obs, dtype=np.float64)
        N, K, L = self.n_nodes, self.config.forecast_horizon, self.lead
        parts = {"idle": obs[..., :N], "requests": obs[..., N:2 * N]}
        parts["forecast"] = obs[..., 2 * N:2 * N + K * N].reshape(obs.shape[:-1] + (K, N))
        parts["arrivals"] = obs[..., 2 * N + K * N:].reshape(obs.shape[:-1] + (L, N))
        return parts

    def forecast(self, state: RoutingState) -> np.ndarray:
        """Noisy per-station request forecast for ``t+1..t+K``, shape (K, N)."""
        cfg = self.config
        noise_rng = state.rng.child(0xF0CA5700 + state.t)
        rows = []
        for k in range(1, cfg.forecast_horizon + 1):
            mean = self.rates(state.t + k).sum(axis=1)
            rows.append(np.clip(mean + cfg.forecast_noise * mean * noise_rng.standard_normal(mean.size), 0, None))
        return np.array(rows)

    def observation(self, state: RoutingState) -> np.ndarray:
        """``[idle (N), requests per origin at t (N), forecast (K x N), arrivals (L x N)]``."""
        return np.concatenate([
            state.idle, state.demand.sum(axis=1), self.forecast(state).reshape(-1),
            state.pipeline.T.reshape(-1),
        ])

    def _match(self, idle, pipe, demand):
        """Greedy per-station matching; returns ``(idle, pipeline, served)``."""
        N = self.n_nodes
        idle = idle.copy()
        pipe = pipe.copy()
        served = np.zeros((N, N))
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                k = min(demand[i, j], idle[i])
                if k > 0:
                    served[i, j] = k
                    idle[i] -= k
                    pipe[j, self.tau[i, j] - 1] += k
        return idle, pipe, served

    def reset(self, rng=None) -> tuple[RoutingState, np.ndarray]:
        rng = ensure_rng(rng)
        N, M = self.n_nodes, self.config.fleet_size
        idle = distribution_to_counts(np.full(N, 1.0 / N), M).astype(np.float64)
        demand = rng.poisson(self.rates(0)).astype(np.float64)
        np.fill_diagonal(demand, 0.0)
        pipe = np.zeros((N, self.lead))
        idle, pipe, served = self._match(idle, pipe, demand)
        state = RoutingState(idle=idle, pipeline=pipe, demand=demand, served=served, t=0, rng=rng)
        return state, self.observation(state)

    def done(self, state) -> bool:
        return state.t >= self.config.episode_length

    def violations(self, state: RoutingState, flows) -> list[str]:
        f = np.asarray(flows, dtype=np.float64)
        problems = []
        if np.any(f < 0):
            problems.append("negative rebalancing flow")
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.edges[:, 0], f)
        for i in np.flatnonzero(out > state.idle + 1e-9):
            problems.append(f"station {i} sends {out[i]:g} vehicles but has {state.idle[i]:g} idle")
        return problems

    def step(self, state: RoutingState, flows):
        """Apply edge rebalancing flows (ordered as ``self.edges``)."""
        f = np.asarray(flows, dtype=np.float64).reshape(len(self.edges))
        bad = self.violations(state, f)
        if bad and self.config.strict:
            raise ConstraintViolation("; ".join(bad))
        f = np.clip(f, 0.0, None)
        N = self.n_nodes
        fR = np.zeros((N, N))
        fR[self.edges[:, 0], self.edges[:, 1]] = f
        idle = state.idle - fR.sum(axis=1)
        pipe = state.pipeline.copy()
        for (i, j), k in zip(self.edges, f):
            if k > 0:
                pipe[j, self.tau[i, j] - 1] += k
        idle = idle + pipe[:, 0]
        pipe = np.hstack([pipe[:, 1:], np.zeros((N, 1))])
        demand = state.rng.poisson(self.rates(state.t + 1)).astype(np.float64)
        np.fill_diagonal(demand, 0.0)
        idle, pipe, served = self._match(idle, pipe, demand)
        r = routing_reward(served, fR, self.price, self.cost)
        new = RoutingState(idle=idle, pipeline=pipe, demand=demand, served=served, t=state.t + 1,
                           rng=state.rng)
        return new, self.observation(new), r

    def network(self, state: RoutingState, u) -> NetworkProblem:
        """Rebalancing LP with ``u`` (a distribution) turned into integer targets."""
        vals = u.values if isinstance(u, HighAction) else np.asarray(u, dtype=np.float64)
        total = int(round(state.idle.sum()))
        targets = distribution_to_counts(vals, total).astype(np.float64)
        return NetworkProblem(q=state.idle, edges=self.edges, cost=self.cost[self.edges[:, 0], self.edges[:, 1]],
                              q_target=targets)

    def low_level(self, state: RoutingState, u):
        net = self.network(state, u)
        dec = rebalancing_policy(net)
        return round_flows(net, dec.flows).astype(np.float64), dec

    def step_hierarchical(self, state, u, low_level=None, T_abs: int = 1, records: Optional[list] = None):
        s = self.observation(state)
        flows, _ = self.low_level(state, u) if low_level is None else low_level(self, state, u)
        new, obs, r = self.step(state, flows)
        if records is not None:
            records.append(NetworkRecord(s=s, flows=flows, production=None, r=r, s_next=obs,
                                         context=self.context(state)))
        return new, obs, r

    def context(self, state) -> dict:
        return {"q": state.idle.tolist()}

    def context_from_observation(self, obs) -> dict:
        return {"q": self.unpack(obs)["idle"].tolist()}

    def network_from_context(self, ctx: dict) -> NetworkProblem:
        return NetworkProblem(q=ctx["q"], edges=self.edges, cost=self.cost[self.edges[:, 0], self.edges[:, 1]])
