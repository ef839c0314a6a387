"""Linear-quadratic control: Riccati gains, tracking and affine LQG policies,
finite-difference linearization and least-squares dynamics fitting.

Two sign conventions coexist on purpose:

* ``LqrTracker`` is an error-feedback law ``a = K_t (s - u)`` with time-varying
  gains from a finite-horizon Riccati recursion.
* ``LqgPolicy`` is the goal-attracting affine law ``a = K u + k`` obtained by
  maximizing the one-step quadratic objective.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    IndexOutOfHorizon,
    NonFiniteJacobian,
    RankDeficientGain,
    RankDeficientRegressors,
    SingularInnerMatrix,
)

PINV_RCOND = 1e-10
SINGULAR_COND = 1e12


def pinv(X) -> np.ndarray:
    """Moore-Penrose inverse dropping singular values below 1e-10 * sigma_max."""
    return np.linalg.pinv(np.atleast_2d(X), rcond=PINV_RCOND)


def _sym(X):
    return 0.5 * (X + X.T)


@dataclass(frozen=True)
class LinearDynamics:
    """Affine model ``s' ~ N(A s + B a + c, Sigma)``."""

    A: np.ndarray
    B: np.ndarray
    c: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.asarray(self.B, dtype=np.float64)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        c = np.zeros(n) if self.c is None else np.asarray(self.c, dtype=np.float64).reshape(n)
        Sigma = np.zeros((n, n)) if self.Sigma is None else np.asarray(self.Sigma, dtype=np.float64)
        if Sigma.shape != (n, n) or not np.allclose(Sigma, Sigma.T, atol=1e-10):
            raise ValueError("Sigma must be a symmetric n x n matrix")
        if np.linalg.eigvalsh(_sym(Sigma)).min() < -1e-9:
            raise ValueError("Sigma must be positive semidefinite")
        for name, val in (("A", A), ("B", B), ("c", c), ("Sigma", Sigma)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, s, a) -> np.ndarray:
        """Mean next state; ``s`` and ``a`` may carry leading batch axes."""
        return np.asarray(s) @ self.A.T + np.asarray(a) @ self.B.T + self.c


@dataclass(frozen=True)
class CostMatrices:
    """Quadratic weights. ``Q``/``R`` drive the Riccati recursion; ``M``, ``m_vec``
    and ``V`` parameterize the one-step LQG objective."""

    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    m_vec: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("Q", "R", "M", "V"):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.atleast_2d(np.asarray(val, dtype=np.float64))
            if val.shape[0] != val.shape[1] or not np.allclose(val, val.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
            object.__setattr__(self, name, val)
        if self.m_vec is not None:
            object.__setattr__(self, "m_vec", np.asarray(self.m_vec, dtype=np.float64).reshape(-1))

    def scaled(self, state_factor=1.0, control_factor=1.0) -> "CostMatrices":
        return CostMatrices(
            Q=None if self.Q is None else self.Q * state_factor,
            R=None if self.R is None else self.R * control_factor,
            M=self.M,
            m_vec=self.m_vec,
            V=self.V,
        )


@dataclass(frozen=True)
class GainSchedule:
    """Finite-horizon gains ``Ks[t]`` (m x n) and value matrices ``Ps[t]`` (n x n)."""

    Ks: np.ndarray
    Ps: np.ndarray

    @property
    def horizon(self) -> int:
        return self.Ks.shape[0]


@dataclass(frozen=True)
class AffineGains:
    K: np.ndarray
    k: np.ndarray


def riccati_gains(dyn: LinearDynamics, cost: CostMatrices, T: int) -> GainSchedule:
    """Backward Riccati recursion over ``T`` steps with ``P_T = Q``.

    ``K_t = -(R + B^T P_{t+1} B)^{-1} B^T P_{t+1} A`` and
    ``P_t = Q + A^T P_{t+1} (A + B K_t)``.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    A, B = dyn.A, dyn.B
    Q = cost.Q
    R = np.zeros((dyn.m, dyn.m)) if cost.R is None else cost.R
    if Q is None or Q.shape != (dyn.n, dyn.n) or R.shape != (dyn.m, dyn.m):
        raise ValueError("Q must be n x n and R must be m x m")
    Ks = np.empty((T, dyn.m, dyn.n))
    Ps = np.empty((T + 1, dyn.n, dyn.n))
    Ps[T] = Q
    P = Q
    for t in range(T - 1, -1, -1):
        S = _sym(R + B.T @ P @ B)
        rhs = B.T @ P @ A
        if np.linalg.cond(S) > SINGULAR_COND:
            raise SingularInnerMatrix(f"R + B'PB is numerically singular at t={t}")
        try:
            L = np.linalg.cholesky(S)
            K = -np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        except np.linalg.LinAlgError:
            K = -pinv(S) @ rhs
        P = _sym(Q + A.T @ P @ (A + B @ K))
        Ks[t] = K
        Ps[t] = P
    return GainSchedule(Ks=Ks, Ps=Ps)


def lqr_tracking_action(gains: GainSchedule, t: int, s, u) -> np.ndarray:
    """Error-feedback law ``a = K_t (s - u)``."""
    if not 0 <= t < gains.horizon:
        raise IndexOutOfHorizon(f"step {t} outside horizon {gains.horizon}")
    s = np.asarray(s, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return (s - u) @ gains.Ks[t].T


def lqg_affine_gains(dyn: LinearDynamics, cost: CostMatrices, s) -> AffineGains:
    """Maximizer ``a* = K u + k`` of ``-1/2 E[|a - m|_M^2 + |s' - u|_V^2]``."""
    A, B, c = dyn.A, dyn.B, dyn.c
    M = np.zeros((dyn.m, dyn.m)) if cost.M is None else cost.M
    m_vec = np.zeros(dyn.m) if cost.m_vec is None else cost.m_vec
    V = np.eye(dyn.n) if cost.V is None else cost.V
    H = M + B.T @ V @ B
    if np.linalg.matrix_rank(H, tol=PINV_RCOND * max(np.abs(H).max(), 1e-300)) < H.shape[0]:
        warnings.warn("M + B'VB is rank deficient; using its pseudo-inverse", RankDeficientGain)
    Hp = pinv(H)
    K = Hp @ B.T @ V
    k = Hp @ (M @ m_vec - B.T @ V @ (A @ np.asarray(s, dtype=np.float64) + c))
    return AffineGains(K=K, k=k)


class LqrTracker:
    """Finite-horizon goal-tracking controller, usable as a low-level policy.

    Called as ``policy(x, u, i)`` where ``i`` is the step inside the current
    abstraction window. Inputs may be batched along leading axes. With a
    ``goal_map`` G (n x p) the goal ``u`` lives in a p-dimensional space and
    the tracked state is ``G u``; the default is the full state.
    """

    def __init__(self, dyn: LinearDynamics, cost: CostMatrices, horizon: int = 5,
                 action_low=None, action_high=None, goal_map=None):
        self.dyn = dyn
        self.cost = cost
        self.gains = riccati_gains(dyn, cost, horizon)
        self.action_low = action_low
        self.action_high = action_high
        self.goal_map = None if goal_map is None else np.atleast_2d(np.asarray(goal_map, dtype=np.float64))
        if self.goal_map is not None and self.goal_map.shape[0] != dyn.n:
            raise ValueError(f"goal_map needs {dyn.n} rows, got {self.goal_map.shape[0]}")

    @property
    def goal_dim(self) -> int:
        return self.dyn.n if self.goal_map is None else self.goal_map.shape[1]

    def target(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return u if self.goal_map is None else u @ self.goal_map.T

    @property
    def horizon(self) -> int:
        return self.gains.horizon

    def __call__(self, x, u, i=0):
        a = lqr_tracking_action(self.gains, i, x, self.target(u))
        if self.action_low is not None or self.action_high is not None:
            a = np.clip(a, self.action_low, self.action_high)
        return a


class LqgPolicy:
    """One-step affine LQG law ``a* = K(s) u + k(s)``, usable as a low-level policy."""

    def __init__(self, dyn: LinearDynamics, cost: CostMatrices):
        self.dyn = dyn
        self.cost = cost

    def gains(self, s) -> AffineGains:
        return lqg_affine_gains(self.dyn, self.cost, s)

    def __call__(self, x, u, i=0):
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        if x.ndim == 1:
            g = self.gains(x)
            return u @ g.K.T + g.k
        return np.stack([self(xi, ui) for xi, ui in zip(x, np.broadcast_to(u, x.shape[:-1] + u.shape[-1:]))])


def linearize_fd(step_fn: Callable, s0, a0, eps: float = 1e-5) -> LinearDynamics:
    """Central-difference Jacobians of ``step_fn`` at ``(s0, a0)``.

    ``c`` is chosen so the affine model is exact at the expansion point.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    s0 = np.asarray(s0, dtype=np.float64).reshape(-1)
    a0 = np.asarray(a0, dtype=np.float64).reshape(-1)
    f0 = np.asarray(step_fn(s0, a0), dtype=np.float64).reshape(-1)
    n, m = s0.size, a0.size
    A = np.empty((f0.size, n))
    B = np.empty((f0.size, m))
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        A[:, i] = (np.asarray(step_fn(s0 + e, a0)) - np.asarray(step_fn(s0 - e, a0))) / (2 * eps)
    for j in range(m):
        e = np.zeros(m)
        e[j] = eps
        B[:, j] = (np.asarray(step_fn(s0, a0 + e)) - np.asarray(step_fn(s0, a0 - e))) / (2 * eps)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(f0))):
        raise NonFiniteJacobian("finite-difference Jacobian has non-finite entries")
    c = f0 - A @ s0 - B @ a0
    return LinearDynamics(A=A, B=B, c=c)


def fit_linear_dynamics(dataset=None, *, states=None, actions=None, next_states=None,
                        state_dims: Optional[int] = None) -> LinearDynamics:
    """Ordinary least squares for ``s' = A s + B a + c``.

    Accepts a sequence of transitions with actions, or explicit arrays.
    ``state_dims`` restricts the fit to the leading state coordinates.
    ``Sigma`` is the empirical residual covariance.
    """
    if dataset is not None:
        dataset = list(dataset)
        if any(tr.a is None for tr in dataset):
            raise ValueError("every transition needs an observed action")
        states = np.array([tr.s for tr in dataset])
        actions = np.array([tr.a for tr in dataset])
        next_states = np.array([tr.s_next for tr in dataset])
    S = np.atleast_2d(np.asarray(states, dtype=np.float64))
    U = np.asarray(actions, dtype=np.float64).reshape(len(S), -1)
    S1 = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
    if state_dims is not None:
        S, S1 = S[:, :state_dims], S1[:, :state_dims]
    n, m = S.shape[1], U.shape[1]
    if len(S) < n + m + 1:
        raise ValueError(f"need at least {n + m + 1} transitions, got {len(S)}")
    X = np.hstack([S, U, np.ones((len(S), 1))])
    theta, _, rank, _ = np.linalg.lstsq(X, S1, rcond=None)
    if rank < X.shape[1]:
        warnings.warn(f"regressor matrix has rank {rank} < {X.shape[1]}; "
                      "using the minimum-norm solution", RankDeficientRegressors)
    A = theta[:n].T
    B = theta[n:n + m].T
    c = theta[-1]
    resid = S1 - X @ theta
    Sigma = _sym(resid.T @ resid / max(len(S) - 1, 1))
    return LinearDynamics(A=A, B=B, c=c, Sigma=Sigma)


def closed_loop_rollout(dyns: Sequence[LinearDynamics] | LinearDynamics, policy, s, u, steps: int,
                        return_path=False):
    """Deterministic rollout ``x_{i+1} = A_i x_i + B_i policy(x_i, u, i) + c_i``."""
    x = np.asarray(s, dtype=np.float64)
    path = [x]
    for i in range(steps):
        dyn = dyns if isinstance(dyns, LinearDynamics) else dyns[i]
        x = dyn.step(x, policy(x, u, i))
        path.append(x)
    return np.stack(path) if return_path else x
