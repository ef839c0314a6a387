"""Single-warehouse, multi-store inventory network with seasonal demand.

Timeline of one step ``t``:

1. the state carries on-hand stock ``q``, backorders, the already realized
   demand ``d_t`` and pipelines of shipments/production still travelling;
2. the decision (store shipments ``f`` and warehouse production ``w``) is
   checked against the hard limits;
3. reward is booked on the start-of-step stock and outstanding demand;
4. stores sell ``min(d_t + backorders, q)``, unmet demand is backordered,
   the warehouse releases its shipments, pipelines advance one step and
   arrivals are added to stock;
5. demand ``d_{t+1}`` is drawn.

Node 0 is the warehouse; nodes 1..S are stores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..core import HighAction, HighActionKind, SeededRng, ensure_rng
from ..errors import ConstraintViolation, InvalidConfig
from ..lp.network import NetworkProblem, round_flows, star_edges, supplychain_policy

CAPACITY_TOL = 1e-7


@dataclass(frozen=True)
class SupplyChainConfig:
    d_max: tuple = (5, 15, 20)
    d_var: tuple = (2, 2, 2)
    frequency: tuple = (2, 4, 6)
    shift: tuple = (1, 3, 6)
    travel_time: tuple = (1, 1, 1)
    production_time: int = 1
    storage_capacity: tuple = (50, 15, 15, 15)
    storage_cost: tuple = (0.1, 0.5, 0.5, 0.5)
    production_cost: float = 5.0
    production_capacity: float = 25.0
    transport_cost: float = 0.5
    price: float = 15.0
    backorder_cost: float = 1.5
    episode_length: int = 30
    initial_fill: float = 0.5
    forecast_horizon: int = 3
    forecast_noise: float = 0.1
    demand_noise: bool = True
    strict: bool = True

    def __post_init__(self):
        S = len(self.d_max)
        if S < 1:
            raise InvalidConfig("need at least one store")
        for name in ("d_var", "frequency", "shift", "travel_time"):
            if len(getattr(self, name)) != S:
                raise InvalidConfig(f"{name} must have one entry per store")
        for name in ("storage_capacity", "storage_cost"):
            if len(getattr(self, name)) != S + 1:
                raise InvalidConfig(f"{name} must have one entry per node (warehouse first)")
        costs = [self.production_cost, self.transport_cost, self.backorder_cost, *self.storage_cost]
        if min(costs) < 0 or self.price < 0:
            raise InvalidConfig("costs and price must be nonnegative")
        if min(self.storage_capacity) <= 0 or self.production_capacity <= 0:
            raise InvalidConfig("capacities must be positive")
        if self.episode_length < 1:
            raise InvalidConfig("episode_length must be >= 1")
        if min(self.travel_time) < 1 or self.production_time < 1:
            raise InvalidConfig("lead times must be >= 1")
        if not 0 <= self.initial_fill <= 1:
            raise InvalidConfig("initial_fill must lie in [0, 1]")

    @property
    def n_stores(self) -> int:
        return len(self.d_max)


def ten_store_config(**kw) -> SupplyChainConfig:
    """Ten-store layout with the larger warehouse."""
    base = dict(
        d_max=(5, 5, 5, 5, 10, 10, 10, 18, 18, 18),
        d_var=(2,) * 10,
        frequency=(2, 4, 6, 2, 4, 6, 2, 4, 6, 3),
        shift=(1, 1, 1, 3, 3, 3, 6, 6, 6, 2),
        travel_time=(1,) * 10,
        storage_capacity=(80,) + (15,) * 10,
        storage_cost=(0.005,) + (2.0,) * 10,
        production_capacity=60.0,
    )
    base.update(kw)
    return SupplyChainConfig(**base)


def demand_mean(cfg: SupplyChainConfig, t: int) -> np.ndarray:
    """Noise-free seasonal demand ``d_max/2 (1 + cos(f pi (2 r + t) / T))``."""
    T = cfg.episode_length
    return np.array([
        dm / 2.0 * (1.0 + math.cos(f * math.pi * (2 * r + t) / T))
        for dm, f, r in zip(cfg.d_max, cfg.frequency, cfg.shift)
    ])


def sample_demand(cfg: SupplyChainConfig, t: int, rng: Optional[SeededRng]) -> np.ndarray:
    base = demand_mean(cfg, t)
    if cfg.demand_noise and rng is not None:
        base = base + rng.uniform(0.0, 1.0, size=base.size) * np.asarray(cfg.d_var, dtype=np.float64)
    return np.floor(base)


@dataclass(frozen=True)
class SupplyChainState:
    q: np.ndarray            # on-hand stock per node, warehouse first
    backorders: np.ndarray   # per store
    demand: np.ndarray       # realized demand for this step, per store
    pipeline: np.ndarray     # (nodes, L): units arriving in 1..L steps
    t: int
    rng: SeededRng = field(repr=False, compare=False)

    @property
    def in_transit(self) -> np.ndarray:
        return self.pipeline.sum(axis=1)


class SupplyChainEnv:
    kind = "supply_chain"

    def __init__(self, config: Optional[SupplyChainConfig] = None, **kw):
        self.config = config if config is not None else SupplyChainConfig(**kw)
        cfg = self.config
        self.n_stores = cfg.n_stores
        self.n_nodes = cfg.n_stores + 1
        self.warehouses = (0,)
        self.stores = tuple(range(1, self.n_nodes))
        self.edges = star_edges(self.warehouses, self.stores)
        self.lead = max(max(cfg.travel_time), cfg.production_time)
        self.capacity = np.asarray(cfg.storage_capacity, dtype=np.float64)
        self.storage_cost = np.asarray(cfg.storage_cost, dtype=np.float64)

    @property
    def episode_length(self) -> int:
        return self.config.episode_length

    @property
    def obs_dim(self) -> int:
        S, K = self.n_stores, self.config.forecast_horizon
        return self.n_nodes + S + S + S * K + self.n_nodes * self.lead

    @property
    def goal_dim(self) -> int:
        return 1 + self.n_stores

    def observation(self, state: SupplyChainState) -> np.ndarray:
        """``[stock (nodes), backorders (stores), demand (stores), forecast (K x stores),
        arrivals (L x nodes)]``, in that order."""
        return np.concatenate([
            state.q, state.backorders, state.demand,
            self.forecast(state).reshape(-1), state.pipeline.T.reshape(-1),
        ])

    def unpack(self, obs) -> dict:
        """Split an observation back into its named feature groups."""
        obs = np.asarray(obs, dtype=np.float64)
        N, S, K, L = self.n_nodes, self.n_stores, self.config.forecast_horizon, self.lead
        i = 0
        parts = {}
        for name, size in (("q", N), ("backorders", S), ("demand", S), ("forecast", K * S), ("arrivals", L * N)):
            parts[name] = obs[..., i:i + size]
            i += size
        parts["forecast"] = parts["forecast"].reshape(obs.shape[:-1] + (K, S))
        parts["arrivals"] = parts["arrivals"].reshape(obs.shape[:-1] + (L, N))
        parts["in_transit"] = parts["arrivals"].sum(axis=-2)
        return parts

    def forecast(self, state: SupplyChainState) -> np.ndarray:
        """Noisy unbiased demand estimate for steps ``t+1..t+K``, shape (K, stores).

        The noise stream is derived from the episode seed and ``t``, so the
        forecast does not perturb the demand stream.
        """
        cfg = self.config
        noise_rng = state.rng.child(0x5EED0000 + state.t)
        rows = []
        for k in range(1, cfg.forecast_horizon + 1):
            mean = demand_mean(cfg, state.t + k) + 0.5 * np.asarray(cfg.d_var, dtype=np.float64)
            rows.append(np.clip(mean + cfg.forecast_noise * mean * noise_rng.standard_normal(mean.size), 0, None))
        return np.array(rows).reshape(cfg.forecast_horizon, self.n_stores)

    def reset(self, rng=None) -> tuple[SupplyChainState, np.ndarray]:
        rng = ensure_rng(rng)
        cfg = self.config
        q = np.floor(cfg.initial_fill * self.capacity)
        q[0] = min(q[0], cfg.production_capacity)
        state = SupplyChainState(
            q=q,
            backorders=np.zeros(self.n_stores),
            demand=sample_demand(cfg, 0, rng),
            pipeline=np.zeros((self.n_nodes, self.lead)),
            t=0,
            rng=rng,
        )
        return state, self.observation(state)

    def done(self, state) -> bool:
        return state.t >= self.config.episode_length

    def outstanding(self, state) -> np.ndarray:
        """Demand to be served this step, per node (warehouse entry 0)."""
        out = np.zeros(self.n_nodes)
        out[1:] = state.demand + state.backorders
        return out

    def violations(self, state: SupplyChainState, flows, production) -> list[str]:
        """Hard-limit breaches of a raw decision; empty when admissible."""
        cfg = self.config
        f = np.asarray(flows, dtype=np.float64)
        w = float(np.asarray(production, dtype=np.float64).reshape(-1)[0])
        problems = []
        if np.any(f < -CAPACITY_TOL) or w < -CAPACITY_TOL:
            problems.append("negative shipment or production")
        out_w = f.sum()
        if out_w > state.q[0] + CAPACITY_TOL:
            problems.append(f"warehouse ships {out_w:g} but holds {state.q[0]:g}")
        transit = state.in_transit
        if state.q[0] - out_w + w + transit[0] > cfg.production_capacity + CAPACITY_TOL:
            problems.append("warehouse production capacity exceeded")
        need = self.outstanding(state)
        for k, s in enumerate(self.stores):
            after = state.q[s] - min(need[s], state.q[s]) + transit[s] + f[k]
            if after > self.capacity[s] + CAPACITY_TOL:
                problems.append(f"store {s} storage capacity exceeded")
        return problems

    def reward(self, state: SupplyChainState, flows, production) -> float:
        cfg = self.config
        q = state.q
        need = state.demand + state.backorders
        stock = q[1:]
        r = cfg.price * np.minimum(need, stock).sum()
        r -= self.storage_cost @ q
        r -= cfg.production_cost * float(np.sum(production))
        r -= cfg.transport_cost * float(np.sum(flows))
        r -= 1.5 * cfg.price * np.maximum(0.0, stock - self.capacity[1:]).sum()
        r -= cfg.backorder_cost * np.maximum(0.0, need - stock).sum()
        return float(r)

    def step(self, state: SupplyChainState, flows, production):
        """Apply raw shipments (one per store) and warehouse production."""
        cfg = self.config
        f = np.asarray(flows, dtype=np.float64).reshape(self.n_stores)
        w = float(np.asarray(production, dtype=np.float64).reshape(-1)[0])
        bad = self.violations(state, f, w)
        if bad and cfg.strict:
            raise ConstraintViolation("; ".join(bad))
        r = self.reward(state, f, w)
        need = state.demand + state.backorders
        sold = np.minimum(need, state.q[1:])
        q = state.q.copy()
        q[1:] -= sold
        q[0] -= f.sum()
        pipe = state.pipeline.copy()
        for k, s in enumerate(self.stores):
            pipe[s, cfg.travel_time[k] - 1] += f[k]
        pipe[0, cfg.production_time - 1] += w
        arrivals = pipe[:, 0].copy()
        pipe = np.hstack([pipe[:, 1:], np.zeros((self.n_nodes, 1))])
        q += arrivals
        new = SupplyChainState(
            q=q,
            backorders=need - sold,
            demand=sample_demand(cfg, state.t + 1, state.rng),
            pipeline=pipe,
            t=state.t + 1,
            rng=state.rng,
        )
        return new, self.observation(new), r

    def network(self, state: SupplyChainState, u) -> NetworkProblem:
        """Forward-LP instance for high-level action ``u = [production, store inflows]``."""
        vals = u.values if isinstance(u, HighAction) else np.asarray(u, dtype=np.float64)
        q_target = np.zeros(self.n_nodes)
        q_target[1:] = vals[1:]
        prod = np.zeros(self.n_nodes)
        prod[0] = vals[0]
        cap_p = np.zeros(self.n_nodes)
        cap_p[0] = self.config.production_capacity
        return NetworkProblem(
            q=state.q, edges=self.edges, cost=np.full(len(self.edges), self.config.transport_cost),
            q_target=q_target, warehouses=self.warehouses, storage_capacity=self.capacity,
            production_capacity=cap_p, production_target=prod, demand=self.outstanding(state),
            in_transit=state.in_transit,
        )

    def low_level(self, state: SupplyChainState, u):
        """LP decision for ``u``, rounded to whole units. Returns ``(flows, production, decision)``."""
        net = self.network(state, u)
        dec = supplychain_policy(net)
        flows = round_flows(net, dec.flows).astype(np.float64)
        prod = float(np.floor(dec.production[0] + 0.5))
        # rounding can only add half a unit; trim if it breaches a limit
        while prod > 0 and self.violations(state, flows, prod):
            prod -= 1.0
        return flows, prod, dec

    def step_hierarchical(self, state, u, low_level=None, T_abs: int = 1, records: Optional[list] = None):
        """One LP solve and one network step; ``records`` receives ``(s, flows, production, r, s')``."""
        s = self.observation(state)
        flows, prod, _ = self.low_level(state, u) if low_level is None else low_level(self, state, u)
        new, obs, r = self.step(state, flows, prod)
        if records is not None:
            records.append(NetworkRecord(s=s, flows=flows, production=np.array([prod]), r=r, s_next=obs,
                                         context=self.context(state)))
        return new, obs, r

    def context(self, state) -> dict:
        """Quantities the inverse needs to rebuild the forward LP for this step."""
        return {"q": state.q.tolist(), "demand": self.outstanding(state).tolist(),
                "in_transit": state.in_transit.tolist()}

    def context_from_observation(self, obs) -> dict:
        """Rebuild :meth:`context` from a logged observation."""
        parts = self.unpack(obs)
        demand = np.zeros(self.n_nodes)
        demand[1:] = parts["demand"] + parts["backorders"]
        return {"q": parts["q"].tolist(), "demand": demand.tolist(), "in_transit": parts["in_transit"].tolist()}

    def network_from_context(self, ctx: dict) -> NetworkProblem:
        cap_p = np.zeros(self.n_nodes)
        cap_p[0] = self.config.production_capacity
        return NetworkProblem(
            q=ctx["q"], edges=self.edges, cost=np.full(len(self.edges), self.config.transport_cost),
            warehouses=self.warehouses, storage_capacity=self.capacity, production_capacity=cap_p,
            demand=ctx["demand"], in_transit=ctx["in_transit"],
        )


@dataclass(frozen=True)
class NetworkRecord:
    s: np.ndarray
    flows: np.ndarray
    production: Optional[np.ndarray]
    r: float
    s_next: np.ndarray
    context: dict = field(default_factory=dict)
