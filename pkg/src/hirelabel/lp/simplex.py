"""Dense two-phase primal simplex for small LPs.

Problem form::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lo <= x <= hi        (lo defaults to 0, hi to +inf)

Bounds are removed by shifting, reflecting or splitting variables; finite
upper bounds become extra ``<=`` rows. Pivoting follows Bland's rule
(smallest eligible index enters, ties in the ratio test go to the smallest
basic index), so results are deterministic and cycling cannot occur.

Dual sign convention: for ``A_ub x <= b_ub`` the reported multipliers are
``<= 0`` and satisfy ``A_ub^T lam + A_eq^T mu + r = c`` with ``r`` the reduced
costs, so that ``c @ x == b_ub @ lam + b_eq @ mu`` whenever every variable
bound is ``[0, inf)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import NumericalBreakdown

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpProblem:
    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        n = c.size
        if not np.all(np.isfinite(c)):
            raise ValueError("objective coefficients must be finite")

        def rows(A, b, name):
            if A is None:
                return np.zeros((0, n)), np.zeros(0)
            A = np.asarray(A, dtype=np.float64).reshape(-1, n)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if A.shape[0] != b.size:
                raise ValueError(f"{name}: {A.shape[0]} rows but {b.size} right-hand sides")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                raise ValueError(f"{name} has non-finite entries")
            return A, b

        A_ub, b_ub = rows(self.A_ub, self.b_ub, "A_ub")
        A_eq, b_eq = rows(self.A_eq, self.b_eq, "A_eq")
        lo = np.zeros(n) if self.lo is None else np.broadcast_to(
            np.asarray(self.lo, dtype=np.float64), (n,)).copy()
        hi = np.full(n, np.inf) if self.hi is None else np.broadcast_to(
            np.asarray(self.hi, dtype=np.float64), (n,)).copy()
        if np.any(lo == np.inf) or np.any(hi == -np.inf) or np.any(lo > hi):
            raise ValueError("inconsistent variable bounds")
        for name, val in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq),
                          ("b_eq", b_eq), ("lo", lo), ("hi", hi)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class LpSolution:
    status: Status
    x: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    duals: Optional[np.ndarray] = None
    duals_eq: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    # Unbounded: improving ray in x-space. Infeasible: phase-one row multipliers.
    certificate: Optional[np.ndarray] = None
    iterations: int = 0


def _standard_form(p: LpProblem):
    """Map x to y >= 0 via x = offset + M @ y and build equality rows with slacks."""
    n = p.n
    cols = []  # (orig index, sign)
    offset = np.zeros(n)
    bound_rows = []  # (std column, upper limit)
    for j in range(n):
        lo, hi = p.lo[j], p.hi[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    M = np.zeros((n, ns))
    for k, (j, sgn) in enumerate(cols):
        M[j, k] = sgn
    c_std = p.c @ M
    ub_A = p.A_ub @ M
    ub_b = p.b_ub - p.A_ub @ offset
    if bound_rows:
        extra = np.zeros((len(bound_rows), ns))
        for r, (k, lim) in enumerate(bound_rows):
            extra[r, k] = 1.0
        ub_A = np.vstack([ub_A, extra])
        ub_b = np.concatenate([ub_b, [lim for _, lim in bound_rows]])
    eq_A = p.A_eq @ M
    eq_b = p.b_eq - p.A_eq @ offset
    n_ub, n_eq = ub_A.shape[0], eq_A.shape[0]
    m = n_ub + n_eq
    A = np.zeros((m, ns + n_ub))
    A[:n_ub, :ns] = ub_A
    A[:n_ub, ns:] = np.eye(n_ub)
    A[n_ub:, :ns] = eq_A
    b = np.concatenate([ub_b, eq_b])
    c = np.concatenate([c_std, np.zeros(n_ub)])
    return A, b, c, M, offset, ns, n_ub


def _pivot(T, rhs, row, col):
    piv = T[row, col]
    T[row] /= piv
    rhs[row] /= piv
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    rhs -= factors * rhs[row]
    T[:, col] = 0.0
    T[row, col] = 1.0


def _iterate(T, rhs, basis, c, allowed, max_iter, counter):
    """Bland-rule pivoting until optimal (returns None) or unbounded (returns column)."""
    while True:
        if counter[0] >= max_iter:
            raise NumericalBreakdown(f"simplex did not terminate within {max_iter} pivots")
        r = c - c[basis] @ T
        entering = None
        for j in allowed:
            if r[j] < -PIVOT_TOL:
                entering = j
                break
        if entering is None:
            return None
        col = T[:, entering]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return entering
        ratios = rhs[pos] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = ties[np.argmin(np.asarray(basis)[ties])]
        _pivot(T, rhs, row, entering)
        basis[row] = entering
        counter[0] += 1


def solve_lp(problem: LpProblem, max_iter: Optional[int] = None) -> LpSolution:
    """Solve ``problem`` with the two-phase simplex method."""
    A, b, c, M, offset, ns, n_ub = _standard_form(problem)
    m, nv = A.shape
    flip = np.where(b < 0, -1.0, 1.0)
    A = A * flip[:, None]
    b = b * flip
    if max_iter is None:
        max_iter = 50 * (m + nv) + 1000
    counter = [0]

    # initial basis: slacks of unflipped <= rows, artificials elsewhere
    art_rows = [i for i in range(m) if not (i < n_ub and flip[i] > 0)]
    n_art = len(art_rows)
    basis = [ns + i if (i < n_ub and flip[i] > 0) else -1 for i in range(m)]
    T = np.hstack([A, np.zeros((m, n_art))])
    for k, i in enumerate(art_rows):
        T[i, nv + k] = 1.0
        basis[i] = nv + k
    rhs = b.copy()
    rows_alive = np.arange(m)

    if n_art:
        c1 = np.concatenate([np.zeros(nv), np.ones(n_art)])
        _iterate(T, rhs, basis, c1, range(nv + n_art), max_iter, counter)
        infeas = float(c1[basis] @ rhs)
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            B1 = np.hstack([A, np.eye(m)[:, art_rows]])[:, basis]
            y1 = np.linalg.lstsq(B1.T, c1[basis], rcond=None)[0]
            return LpSolution(Status.INFEASIBLE, certificate=_rows_to_original(y1 * flip, problem, n_ub),
                              iterations=counter[0])
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= nv:
                cand = np.flatnonzero(np.abs(T[i, :nv]) > PIVOT_TOL)
                if cand.size:
                    _pivot(T, rhs, i, cand[0])
                    basis[i] = int(cand[0])
                    keep.append(i)
            else:
                keep.append(i)
        keep = np.array(keep, dtype=int)
        T = T[keep][:, :nv]
        rhs = rhs[keep]
        basis = [basis[i] for i in keep]
        rows_alive = rows_alive[keep]
    else:
        T = T[:, :nv]

    unbounded = _iterate(T, rhs, basis, c, range(nv), max_iter, counter)
    if unbounded is not None:
        d = np.zeros(nv)
        d[unbounded] = 1.0
        d[basis] = -T[:, unbounded]
        ray = M @ d[:ns]
        return LpSolution(Status.UNBOUNDED, certificate=ray, iterations=counter[0])

    y_std = np.zeros(nv)
    y_std[basis] = rhs
    x = offset + M @ y_std[:ns]
    # duals from B^T pi = c_B on the surviving rows, mapped back through the row flips
    B = A[rows_alive][:, basis]
    pi_alive = np.linalg.solve(B.T, c[basis]) if B.size else np.zeros(0)
    pi = np.zeros(m)
    pi[rows_alive] = pi_alive
    pi *= flip
    n_orig_ub = problem.A_ub.shape[0]
    lam = pi[:n_orig_ub]
    mu = pi[n_ub:]
    reduced = problem.c - problem.A_ub.T @ lam - problem.A_eq.T @ mu
    return LpSolution(
        Status.OPTIMAL,
        x=x,
        objective_value=float(problem.c @ x),
        duals=lam,
        duals_eq=mu,
        reduced_costs=reduced,
        iterations=counter[0],
    )


def _rows_to_original(y, problem: LpProblem, n_ub):
    n_orig_ub = problem.A_ub.shape[0]
    return np.concatenate([y[:n_orig_ub], y[n_ub:]])


def primal_residual(problem: LpProblem, x) -> float:
    """Largest violation of any constraint or bound at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    viol = [0.0]
    if problem.A_ub.size:
        viol.append(np.max(problem.A_ub @ x - problem.b_ub, initial=0.0))
    if problem.A_eq.size:
        viol.append(np.max(np.abs(problem.A_eq @ x - problem.b_eq), initial=0.0))
    viol.append(np.max(problem.lo - x, initial=0.0))
    viol.append(np.max(x - problem.hi, initial=0.0))
    return float(max(viol))
