"""Network-flow LP policies and their inverses.

Two forward policies share ``NetworkProblem``:

* fleet rebalancing: move idle vehicles toward per-node targets at minimum
  edge cost, with penalized slack so every target vector is admissible;
* supply-chain distribution: ship from warehouses to stores and set
  production so incoming flows and production are as close as possible (L1)
  to desired values, under inventory and capacity limits.

Inverses recover the targets from observed flows, either directly by flow
conservation or by minimizing the duality gap of the forward LP.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..core import HighAction, HighActionKind
from ..errors import FlowExceedsInventory, InfeasibleReconstruction, NumericalBreakdown
from .simplex import LpProblem, LpSolution, Status, solve_lp

FLOW_TOL = 1e-9


def complete_edges(n: int) -> np.ndarray:
    """All ordered pairs (i, j), i != j, in row-major order."""
    return np.array([(i, j) for i in range(n) for j in range(n) if i != j], dtype=int).reshape(-1, 2)


def star_edges(warehouses, stores) -> np.ndarray:
    return np.array([(w, s) for w in warehouses for s in stores], dtype=int).reshape(-1, 2)


def _vec(x, n, name):
    if x is None:
        return None
    arr = np.broadcast_to(np.asarray(x, dtype=np.float64), (n,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class NetworkProblem:
    """Node inventories, edges with unit costs, and optional targets/capacities.

    ``q_target`` holds per-node vehicle targets (rebalancing) or desired
    incoming flow per store (supply chain). ``demand`` is the stock that
    will leave each store this step and ``in_transit`` the stock already on
    its way; both tighten the storage limits.
    """

    q: np.ndarray
    edges: np.ndarray
    cost: np.ndarray
    q_target: Optional[np.ndarray] = None
    warehouses: tuple = ()
    storage_capacity: Optional[np.ndarray] = None
    production_capacity: Optional[np.ndarray] = None
    production_target: Optional[np.ndarray] = None
    demand: Optional[np.ndarray] = None
    in_transit: Optional[np.ndarray] = None
    p_slack: Optional[float] = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        n = q.size
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("inventories must be finite and nonnegative")
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge references a node that does not exist")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        cost = _vec(self.cost, len(edges), "cost")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "warehouses", tuple(int(w) for w in self.warehouses))
        for name in ("q_target", "storage_capacity", "production_capacity", "production_target",
                     "demand", "in_transit"):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        for name in ("storage_capacity", "production_capacity"):
            val = getattr(self, name)
            if val is not None and np.any(val < 0):
                raise ValueError(f"{name} must be nonnegative")

    @property
    def n_nodes(self) -> int:
        return self.q.size

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def stores(self) -> tuple:
        return tuple(i for i in range(self.n_nodes) if i not in self.warehouses)

    @property
    def slack_penalty(self) -> float:
        if self.p_slack is not None:
            return float(self.p_slack)
        return 10.0 * max(float(np.max(self.cost, initial=0.0)), 1.0)

    def incidence(self):
        """(N, E) matrices of outgoing and incoming edge membership."""
        out = np.zeros((self.n_nodes, self.n_edges))
        inc = np.zeros((self.n_nodes, self.n_edges))
        e = np.arange(self.n_edges)
        out[self.edges[:, 0], e] = 1.0
        inc[self.edges[:, 1], e] = 1.0
        return out, inc


@dataclass(frozen=True)
class FlowDecision:
    flows: np.ndarray
    objective: float
    flow_cost: float
    production: Optional[np.ndarray] = None
    slack: Optional[np.ndarray] = None
    solution: Optional[LpSolution] = field(default=None, repr=False)


def _check(sol: LpSolution, what: str) -> LpSolution:
    if sol.status is not Status.OPTIMAL:
        raise NumericalBreakdown(f"{what} LP ended with status {sol.status.value}")
    return sol


# ---------------------------------------------------------------------------
# rebalancing


def rebalancing_lp(net: NetworkProblem, q_target=None) -> LpProblem:
    """Variables ``[f (E), z (N)]``; rows ``[target (N), outflow (N)]``, all ``<=``."""
    target = net.q_target if q_target is None else np.asarray(q_target, dtype=np.float64)
    if target is None:
        raise ValueError("rebalancing needs per-node targets")
    N, E = net.n_nodes, net.n_edges
    out, inc = net.incidence()
    A_target = np.hstack([-(inc - out), -np.eye(N)])
    A_out = np.hstack([out, np.zeros((N, N))])
    c = np.concatenate([net.cost, np.full(N, net.slack_penalty)])
    return LpProblem(c=c, A_ub=np.vstack([A_target, A_out]),
                     b_ub=np.concatenate([net.q - target, net.q]))


def rebalancing_policy(net: NetworkProblem) -> FlowDecision:
    """Minimum-cost flows reaching the targets, with slack penalized by ``p_slack``."""
    sol = _check(solve_lp(rebalancing_lp(net)), "rebalancing")
    E = net.n_edges
    f = np.clip(sol.x[:E], 0.0, None)
    return FlowDecision(flows=f, objective=sol.objective_value, flow_cost=float(net.cost @ f),
                        slack=np.clip(sol.x[E:], 0.0, None), solution=sol)


# ---------------------------------------------------------------------------
# supply chain


def _sc_layout(net: NetworkProblem):
    W = list(net.warehouses)
    S = list(net.stores)
    if not W:
        raise ValueError("supply-chain problems need at least one warehouse")
    if np.any(np.isin(net.edges[:, 0], S)) or np.any(np.isin(net.edges[:, 1], W)):
        raise ValueError("supply-chain edges must run from warehouses to stores")
    return W, S


def supplychain_lp(net: NetworkProblem, q_target=None, production_target=None) -> LpProblem:
    """Variables ``[f (E), w (W), e_f+ (S), e_f- (S), e_w+ (W), e_w- (W)]``.

    Equality rows ``[store targets (S), production targets (W)]``; inequality
    rows ``[store capacity (S), warehouse inventory (W), production capacity (W)]``.
    """
    W, S = _sc_layout(net)
    qt = net.q_target if q_target is None else np.asarray(q_target, dtype=np.float64)
    wt = net.production_target if production_target is None else np.asarray(production_target, dtype=np.float64)
    if qt is None or wt is None:
        raise ValueError("supply-chain policy needs store and production targets")
    if net.storage_capacity is None or net.production_capacity is None:
        raise ValueError("supply-chain policy needs storage and production capacities")
    E, nW, nS = net.n_edges, len(W), len(S)
    out, inc = net.incidence()
    demand = np.zeros(net.n_nodes) if net.demand is None else net.demand
    transit = np.zeros(net.n_nodes) if net.in_transit is None else net.in_transit
    nv = E + nW + 2 * nS + 2 * nW
    iw, iep, iem = E, E + nW, E + nW + nS
    iwp, iwm = E + nW + 2 * nS, E + nW + 2 * nS + nW

    A_eq = np.zeros((nS + nW, nv))
    b_eq = np.zeros(nS + nW)
    for r, s in enumerate(S):
        A_eq[r, :E] = inc[s]
        A_eq[r, iep + r] = -1.0
        A_eq[r, iem + r] = 1.0
        b_eq[r] = qt[s]
    for r, w in enumerate(W):
        A_eq[nS + r, iw + r] = 1.0
        A_eq[nS + r, iwp + r] = -1.0
        A_eq[nS + r, iwm + r] = 1.0
        b_eq[nS + r] = wt[w]

    A_ub = np.zeros((nS + 2 * nW, nv))
    b_ub = np.zeros(nS + 2 * nW)
    for r, s in enumerate(S):
        A_ub[r, :E] = inc[s]
        remaining = net.q[s] - min(demand[s], net.q[s])
        b_ub[r] = net.storage_capacity[s] - remaining - transit[s]
    for r, w in enumerate(W):
        A_ub[nS + r, :E] = out[w]
        b_ub[nS + r] = net.q[w]
        A_ub[nS + nW + r, :E] = -out[w]
        A_ub[nS + nW + r, iw + r] = 1.0
        b_ub[nS + nW + r] = net.production_capacity[w] - net.q[w] - transit[w]

    c = np.zeros(nv)
    c[iep:] = 1.0
    return LpProblem(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq)


def supplychain_policy(net: NetworkProblem) -> FlowDecision:
    """Shipments and production closest in L1 to the desired inflows and production."""
    W, S = _sc_layout(net)
    sol = _check(solve_lp(supplychain_lp(net)), "supply-chain")
    E, nW = net.n_edges, len(W)
    f = np.clip(sol.x[:E], 0.0, None)
    prod = np.zeros(net.n_nodes)
    prod[W] = np.clip(sol.x[E:E + nW], 0.0, None)
    return FlowDecision(flows=f, production=prod, objective=sol.objective_value,
                        flow_cost=float(net.cost @ f), solution=sol)


# ---------------------------------------------------------------------------
# inverses


def _check_flows(net: NetworkProblem, flows) -> np.ndarray:
    f = np.asarray(flows, dtype=np.float64).reshape(-1)
    if f.size != net.n_edges:
        raise ValueError(f"expected {net.n_edges} flows, got {f.size}")
    if np.any(f < -FLOW_TOL):
        raise FlowExceedsInventory("flows must be nonnegative")
    out, _ = net.incidence()
    outflow = out @ f
    bad = np.flatnonzero(outflow > net.q + 1e-7)
    if bad.size:
        i = int(bad[0])
        raise FlowExceedsInventory(f"node {i} ships {outflow[i]:g} but holds {net.q[i]:g}")
    return np.clip(f, 0.0, None)


def flow_balance_targets(net: NetworkProblem, flows) -> np.ndarray:
    """Targets in units implied by flow conservation.

    Rebalancing (no warehouses): ``q_hat = q + inflow - outflow`` per node.
    Supply chain: ``q_hat = inflow`` per store (warehouse entries are 0).
    """
    f = _check_flows(net, flows)
    out, inc = net.incidence()
    if not net.warehouses:
        return net.q + inc @ f - out @ f
    q_hat = inc @ f
    q_hat[list(net.warehouses)] = 0.0
    return q_hat


def flow_balance_inverse(net: NetworkProblem, flows, production=None) -> HighAction:
    """Direct inverse of the forward LP from observed flows.

    Rebalancing returns a ``Distribution`` (targets divided by the fleet
    size). Supply chain returns ``MixedProductionDistribution`` values
    ``[production per warehouse, inflow per store]``; ``production`` defaults
    to zero when not logged.
    """
    q_hat = flow_balance_targets(net, flows)
    if not net.warehouses:
        total = q_hat.sum()
        if total <= 0:
            raise FlowExceedsInventory("network holds no units to distribute")
        return HighAction(q_hat / total, HighActionKind.DISTRIBUTION)
    W = list(net.warehouses)
    prod = np.zeros(len(W)) if production is None else np.asarray(production, dtype=np.float64).reshape(-1)
    if prod.size == net.n_nodes:
        prod = prod[W]
    vals = np.concatenate([prod, q_hat[list(net.stores)]])
    return HighAction(np.clip(vals, 0.0, None), HighActionKind.MIXED)


@dataclass(frozen=True)
class DualityInverse:
    """Reconstructed right-hand side and the duality gap ``epsilon`` it leaves."""

    b_ub: np.ndarray
    b_eq: np.ndarray
    epsilon: float
    z: np.ndarray
    q_hat: np.ndarray
    production: Optional[np.ndarray] = None


def _gap_lp(c_x, c_z, A_x, A_z, b, free, x_star, lam, eq, const=0.0):
    """LP in (b_free, z, eps) with duals held fixed.

    Constraints: ``A_x x* + A_z z <= b`` (or ``==`` when ``eq``), with fixed
    rows keeping their given value, and
    ``eps = c_x x* + c_z z - b @ lam + const``, where ``const`` carries the
    dual contribution of rows left out of ``A_x``. Minimizes ``eps``.
    """
    m, nz = A_z.shape
    free = np.flatnonzero(free)
    fixed = np.setdiff1d(np.arange(m), free)
    nf = free.size
    # variable layout: [b_free (nf), z (nz), eps]
    nv = nf + nz + 1
    Ax = A_x @ x_star
    rows, rhs = [], []
    for k, r in enumerate(free):
        row = np.zeros(nv)
        row[nf:nf + nz] = A_z[r]
        row[k] = -1.0
        rows.append(row)
        rhs.append(-Ax[r])
    for r in fixed:
        row = np.zeros(nv)
        row[nf:nf + nz] = A_z[r]
        rows.append(row)
        rhs.append(b[r] - Ax[r])
    gap_row = np.zeros(nv)
    gap_row[:nf] = lam[free]
    gap_row[nf:nf + nz] = -c_z
    gap_row[-1] = 1.0
    gap_rhs = float(c_x @ x_star) - float(b[fixed] @ lam[fixed]) + const
    cobj = np.zeros(nv)
    cobj[-1] = 1.0
    lo = np.concatenate([np.full(nf, -np.inf), np.zeros(nz + 1)])
    if eq:
        A_eq = np.vstack(rows + [gap_row])
        b_eq = np.array(rhs + [gap_rhs])
        prob = LpProblem(c=cobj, A_eq=A_eq, b_eq=b_eq, lo=lo)
    else:
        prob = LpProblem(c=cobj, A_ub=np.array(rows).reshape(-1, nv), b_ub=np.array(rhs),
                         A_eq=gap_row[None, :], b_eq=[gap_rhs], lo=lo)
    return prob, free, nf, nz


def duality_inverse(net: NetworkProblem, flows, free_rhs_mask=None, production=None) -> DualityInverse:
    """Right-hand side that makes the observed decision closest to optimal.

    The reconstruction follows the strong-duality gap ``epsilon = c x* + p z - b lam``.
    Duals ``lam`` are taken from the forward LP solved at the flow-balance
    targets and then held fixed, which turns the bilinear problem into an LP
    over the free right-hand sides, the slacks and ``epsilon``. Free rows
    whose dual is zero are set tight at the observed decision.
    """
    f = _check_flows(net, flows)
    if not net.warehouses:
        return _duality_rebalancing(net, f, free_rhs_mask)
    return _duality_supplychain(net, f, free_rhs_mask, production)


def _duality_rebalancing(net, f, free_rhs_mask):
    N, E = net.n_nodes, net.n_edges
    b0 = net.q - flow_balance_targets(net, f)
    start = replace(net, q_target=net.q - b0)
    base = rebalancing_lp(start)
    sol = _check(solve_lp(base), "rebalancing")
    lam = sol.duals
    free = np.zeros(2 * N, dtype=bool)
    free[:N] = True
    if free_rhs_mask is not None:
        free = np.asarray(free_rhs_mask, dtype=bool).reshape(2 * N)
    A_x, A_z = base.A_ub[:, :E], base.A_ub[:, E:]
    prob, free_idx, nf, nz = _gap_lp(net.cost, base.c[E:], A_x, A_z, base.b_ub, free, f, lam, eq=False)
    res = solve_lp(prob)
    if res.status is not Status.OPTIMAL:
        raise InfeasibleReconstruction("observed flows are infeasible for every admissible right-hand side")
    b = base.b_ub.copy()
    z = np.clip(res.x[nf:nf + nz], 0.0, None)
    b[free_idx] = res.x[:nf]
    tight = A_x @ f + A_z @ z
    zero_dual = free_idx[np.abs(lam[free_idx]) <= 1e-12]
    b[zero_dual] = tight[zero_dual]
    eps = max(float(res.x[-1]), 0.0)
    return DualityInverse(b_ub=b, b_eq=np.zeros(0), epsilon=eps, z=z, q_hat=net.q - b[:N])


def _duality_supplychain(net, f, free_rhs_mask, production):
    W, S = _sc_layout(net)
    E, nW, nS = net.n_edges, len(W), len(S)
    prod = np.zeros(nW) if production is None else np.asarray(production, dtype=np.float64).reshape(-1)
    if prod.size == net.n_nodes:
        prod = prod[W]
    q_hat = flow_balance_targets(net, f)
    w_full = np.zeros(net.n_nodes)
    w_full[W] = prod
    base = supplychain_lp(net, q_target=q_hat, production_target=w_full)
    sol = _check(solve_lp(base), "supply-chain")
    x_star = np.concatenate([f, prod])
    nx = E + nW
    # inequality rows are fixed; equality (target) rows are free by default
    free_eq = np.ones(nS + nW, dtype=bool)
    if free_rhs_mask is not None:
        free_eq = np.asarray(free_rhs_mask, dtype=bool).reshape(nS + nW)
    ub_viol = base.A_ub[:, :nx] @ x_star - base.b_ub
    if np.any(ub_viol > 1e-7):
        raise InfeasibleReconstruction("observed decision violates a capacity or inventory row")
    prob, free_idx, nf, nz = _gap_lp(base.c[:nx], base.c[nx:], base.A_eq[:, :nx], base.A_eq[:, nx:],
                                     base.b_eq, free_eq, x_star, sol.duals_eq, eq=True,
                                     const=-float(base.b_ub @ sol.duals))
    res = solve_lp(prob)
    if res.status is not Status.OPTIMAL:
        raise InfeasibleReconstruction("observed decision is infeasible for every admissible target")
    b = base.b_eq.copy()
    b[free_idx] = res.x[:nf]
    z = np.clip(res.x[nf:nf + nz], 0.0, None)
    q_out = np.zeros(net.n_nodes)
    q_out[S] = b[:nS]
    prod_out = np.zeros(net.n_nodes)
    prod_out[W] = b[nS:]
    return DualityInverse(b_ub=base.b_ub, b_eq=b, epsilon=max(float(res.x[-1]), 0.0), z=z,
                          q_hat=q_out, production=prod_out)


def distribution_to_counts(dist, total: int) -> np.ndarray:
    """Largest-remainder rounding of ``total * dist`` to integers summing to ``total``."""
    dist = np.asarray(dist, dtype=np.float64)
    raw = dist * total
    counts = np.floor(raw + 1e-12).astype(int)
    short = int(total) - int(counts.sum())
    if short > 0:
        rem = raw - counts
        order = np.lexsort((np.arange(rem.size), -rem))
        counts[order[:short]] += 1
    return counts


def round_flows(net: NetworkProblem, flows) -> np.ndarray:
    """Integer flows from LP flows, largest remainder per source node.

    Each source ships ``round(total outflow)`` units, capped at its integer
    inventory, split across its edges by largest remainder.
    """
    f = np.clip(np.asarray(flows, dtype=np.float64), 0.0, None)
    out = np.zeros(f.size, dtype=int)
    for i in range(net.n_nodes):
        idx = np.flatnonzero(net.edges[:, 0] == i)
        if idx.size == 0:
            continue
        total = min(int(np.floor(f[idx].sum() + 0.5)), int(np.floor(net.q[i] + 1e-9)))
        if total <= 0:
            continue
        share = f[idx] / f[idx].sum()
        out[idx] = distribution_to_counts(share, total)
    return out
