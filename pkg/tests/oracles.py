"""Reference computations written without the package, used to check it.

Each oracle takes the slow, obvious route: explicit inverses, plain loops,
exhaustive enumeration or direct one-dimensional search.
"""
import itertools

import numpy as np


def riccati(A, B, Q, R, T):
    """Backward recursion with explicit inverses. Returns (Ks, Ps) lists indexed by t."""
    A, B, Q, R = (np.atleast_2d(np.asarray(X, dtype=float)) for X in (A, B, Q, R))
    P = Q.copy()
    Ks = [None] * T
    Ps = [None] * (T + 1)
    Ps[T] = P
    for t in reversed(range(T)):
        K = -np.linalg.inv(R + B.T @ P @ B) @ (B.T @ P @ A)
        P = Q + K.T @ R @ K + (A + B @ K).T @ P @ (A + B @ K)
        Ks[t], Ps[t] = K, P
    return Ks, Ps


def tracking_rollout(A, B, Ks, s, target):
    """x_{i+1} = A x_i + B K_i (x_i - target), one step at a time."""
    x = np.asarray(s, dtype=float)
    for K in Ks:
        x = A @ x + B @ (K @ (x - target))
    return x


def vertex_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
    """min c x over x >= 0 by enumerating every basic solution.

    Returns (x, value) or (None, None) when no vertex is feasible.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs = [], []
    n_ub = 0
    if A_ub is not None:
        A_ub = np.atleast_2d(A_ub)
        n_ub = A_ub.shape[0]
        rows.append(np.hstack([A_ub, np.eye(n_ub)]))
        rhs.append(np.asarray(b_ub, dtype=float))
    if A_eq is not None:
        A_eq = np.atleast_2d(A_eq)
        rows.append(np.hstack([A_eq, np.zeros((A_eq.shape[0], n_ub))]))
        rhs.append(np.asarray(b_eq, dtype=float))
    M = np.vstack(rows)
    b = np.concatenate(rhs)
    m, nv = M.shape
    cost = np.concatenate([c, np.zeros(n_ub)])
    best_x, best = None, np.inf
    for basis in itertools.combinations(range(nv), m):
        Bm = M[:, basis]
        if abs(np.linalg.det(Bm)) < 1e-12:
            continue
        y_b = np.linalg.solve(Bm, b)
        if np.any(y_b < -1e-9):
            continue
        y = np.zeros(nv)
        y[list(basis)] = y_b
        val = cost @ y
        if val < best - 1e-12:
            best, best_x = val, y[:n]
    return (best_x, best) if best_x is not None else (None, None)


def integer_rebalancing(q, q_target, edge_cost, max_flow):
    """Cheapest integer flows on a 2-node network, slack-penalized by shortfall.

    Returns (f12, f21, cost) minimizing flow cost plus 100 times the total
    target shortfall.
    """
    best = None
    for f12 in range(max_flow + 1):
        for f21 in range(max_flow + 1):
            if f12 > q[0] or f21 > q[1]:
                continue
            after = (q[0] - f12 + f21, q[1] - f21 + f12)
            short = sum(max(0, t - a) for t, a in zip(q_target, after))
            cost = edge_cost * (f12 + f21) + 100 * short
            if best is None or cost < best[2]:
                best = (f12, f21, cost)
    return best


def expectile(values, tau, lo=None, hi=None, iters=200):
    """Minimizer of sum |tau - 1[x < v]| (x - v)^2 by ternary search (it is convex)."""
    v = np.asarray(values, dtype=float)
    lo = v.min() if lo is None else lo
    hi = v.max() if hi is None else hi

    def f(m):
        d = v - m
        return np.sum(np.where(d < 0, 1 - tau, tau) * d**2)

    for _ in range(iters):
        a = lo + (hi - lo) / 3
        b = hi - (hi - lo) / 3
        if f(a) < f(b):
            hi = b
        else:
            lo = a
    return 0.5 * (lo + hi)


def numeric_grad(f, x, eps=1e-6):
    """Central differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g
