"""Recover the high-level action that most plausibly produced an observed transition.

Analytic routes invert linear closed-loop maps with a pseudo-inverse; numeric
routes minimize a rollout (or action-matching) loss with Adam on central
finite-difference gradients, or with the cross-entropy method (CEM).

Low-level policies are callables ``policy(x, u, i)`` where ``i`` is the step
inside the abstraction window. Numeric routes call them with a batch of
candidate ``u`` at once, so policies must broadcast over leading axes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .control import AffineGains, GainSchedule, LinearDynamics, pinv
from .core import HighAction, HighActionKind, SeededRng, ensure_rng
from .errors import NonFiniteGradient, NonFiniteLoss

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
CEM_VAR_FLOOR = 1e-6


class InversionMethod(str, enum.Enum):
    ANALYTIC_ONE_STEP = "AnalyticOneStep"
    ANALYTIC_HORIZON = "AnalyticHorizon"
    ANALYTIC_REGULARIZED = "AnalyticRegularized"
    GRADIENT_DESCENT = "GradientDescent"
    CEM = "CEM"

    @property
    def is_analytic(self) -> bool:
        return self.value.startswith("Analytic")


@dataclass
class InversionConfig:
    method: InversionMethod = InversionMethod.ANALYTIC_HORIZON
    horizon: int = 5
    lr: float = 0.01
    max_steps: int = 10000
    early_stop_tol: float = 1e-5
    cem_samples: int = 50
    cem_elite_frac: float = 0.2
    cem_patience: int = 4
    loss_threshold: float = 0.2
    regularizer_weight: float = 0.0
    fd_eps: float = 1e-6
    cem_init_std: float = 1.0
    cem_max_iters: int = 300
    # halve the Adam step after this many steps without a new best loss
    lr_patience: int = 50
    min_lr: float = 1e-7
    cem_fallback: bool = True
    per_step_loss: bool = False
    u_low: Optional[np.ndarray] = None
    u_high: Optional[np.ndarray] = None
    state_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.method = InversionMethod(self.method)
        if not 0 < self.cem_elite_frac <= 1:
            raise ValueError("cem_elite_frac must lie in (0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.regularizer_weight < 0:
            raise ValueError("regularizer_weight must be >= 0")
        if (self.u_low is None) != (self.u_high is None):
            raise ValueError("u_low and u_high must be given together")


@dataclass
class InversionResult:
    u_hat: HighAction
    loss: float
    iterations: int
    converged: bool
    rank_deficient: bool = False
    scaling: Optional[tuple] = None
    history: list = field(default_factory=list, repr=False)

    @property
    def u(self) -> np.ndarray:
        return self.u_hat.values


def _goal(u) -> HighAction:
    return HighAction(np.asarray(u, dtype=np.float64), HighActionKind.GOAL_STATE)


def _as_list(dyns, T) -> list[LinearDynamics]:
    # anything with a batched ``step`` (e.g. a simulator) is used at every step
    if isinstance(dyns, LinearDynamics) or hasattr(dyns, "step"):
        return [dyns] * T
    dyns = list(dyns)
    if len(dyns) != T:
        raise ValueError(f"got {len(dyns)} dynamics for a horizon of {T}")
    return dyns


# ---------------------------------------------------------------------------
# analytic routes


def invert_lqg_analytic(dyn: LinearDynamics, gains: AffineGains, s, s_next) -> InversionResult:
    """``u = (BK)^+ (s' - (A s + c + B k))`` for the affine law ``a = K u + k``."""
    s = np.asarray(s, dtype=np.float64)
    s_next = np.asarray(s_next, dtype=np.float64)
    BK = dyn.B @ gains.K
    resid = s_next - (dyn.A @ s + dyn.c + dyn.B @ gains.k)
    u = pinv(BK) @ resid
    pred = dyn.A @ s + dyn.B @ (gains.K @ u + gains.k) + dyn.c
    loss = float(np.sum((pred - s_next) ** 2))
    rank_def = np.linalg.matrix_rank(BK) < BK.shape[1]
    return InversionResult(_goal(u), loss, 0, True, rank_deficient=bool(rank_def))


def closed_loop_maps(dyns, gains: GainSchedule, s):
    """Sensitivity ``Phi1`` and drift ``Phi2`` with ``x_T = Phi2 - Phi1 u``.

    Valid for the tracking law ``a_l = K_l (x_l - u)``. ``s`` may be a batch
    (N, n), in which case ``Phi2`` is (N, n).
    """
    T = gains.horizon
    dyns = _as_list(dyns, T)
    s = np.asarray(s, dtype=np.float64)
    d0, K0 = dyns[0], gains.Ks[0]
    phi1 = d0.B @ K0
    phi2 = s @ (d0.A + d0.B @ K0).T + d0.c
    for l in range(1, T):
        d, K = dyns[l], gains.Ks[l]
        closed = d.A + d.B @ K
        phi1 = closed @ phi1 + d.B @ K
        phi2 = phi2 @ closed.T + d.c
    return phi1, phi2


def tracking_rollout(dyns, gains: GainSchedule, s, u, goal_map=None):
    """Deterministic T-step rollout of ``a = K_l (x - G u)``; batches broadcast."""
    T = gains.horizon
    dyns = _as_list(dyns, T)
    x = np.asarray(s, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if goal_map is not None:
        u = u @ np.asarray(goal_map, dtype=np.float64).T
    for l in range(T):
        a = (x - u) @ gains.Ks[l].T
        x = dyns[l].step(x, a)
    return x


def _goal_sensitivity(phi1, goal_map):
    return phi1 if goal_map is None else phi1 @ np.asarray(goal_map, dtype=np.float64)


def invert_lqr_horizon_batch(dyns, gains: GainSchedule, S, S_T, goal_map=None):
    """Vectorized horizon inverse. Returns ``(U, losses, rank_deficient)``.

    With a goal map G the sensitivity is ``Phi1 G`` and the inverse is its
    least-squares solution.
    """
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    S_T = np.atleast_2d(np.asarray(S_T, dtype=np.float64))
    phi1, phi2 = closed_loop_maps(dyns, gains, S)
    phi1 = _goal_sensitivity(phi1, goal_map)
    U = -(S_T - phi2) @ pinv(phi1).T
    X_T = tracking_rollout(dyns, gains, S, U, goal_map)
    losses = np.sum((X_T - S_T) ** 2, axis=-1)
    rank_def = np.linalg.matrix_rank(phi1) < phi1.shape[1]
    return U, losses, bool(rank_def)


def invert_lqr_horizon_analytic(dyns, gains: GainSchedule, s, s_T, goal_map=None) -> InversionResult:
    """Closed-form T-step inverse ``u = -Phi1^+ (s_T - Phi2)``."""
    U, losses, rank_def = invert_lqr_horizon_batch(dyns, gains, s, s_T, goal_map)
    return InversionResult(_goal(U[0]), float(losses[0]), 0, True, rank_deficient=rank_def)


def invert_regularized_analytic(dyns, gains: GainSchedule, s, s_T,
                                config: InversionConfig, goal_map=None) -> InversionResult:
    """Early-stopped gradient descent on the closed-form rollout loss, from ``u = 0``.

    The step is ``1 / L`` with ``L = 2 sigma_max(Phi1)^2``, so each iterate's
    norm grows monotonically toward the minimum-norm least-squares solution;
    stopping early keeps the recovered action small when the model cannot
    fit the transition exactly.
    """
    phi1, phi2 = closed_loop_maps(dyns, gains, np.asarray(s, dtype=np.float64))
    phi1 = _goal_sensitivity(phi1, goal_map)
    target = np.asarray(s_T, dtype=np.float64) - phi2
    u = np.zeros(phi1.shape[1])
    sigma = np.linalg.norm(phi1, 2)
    step = 0.0 if sigma == 0 else 1.0 / (2.0 * sigma**2)
    lam = config.regularizer_weight

    def loss_of(u):
        r = -phi1 @ u - target
        return float(r @ r + lam * (u @ u))

    loss = loss_of(u)
    history = [loss]
    converged = False
    it = 0
    for it in range(1, config.max_steps + 1):
        grad = 2.0 * phi1.T @ (phi1 @ u + target) + 2.0 * lam * u
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient("gradient of the rollout loss is not finite")
        u = u - step * grad
        new = loss_of(u)
        history.append(new)
        done = new <= config.early_stop_tol or (loss - new) < config.early_stop_tol
        loss = new
        if done:
            converged = True
            break
    else:
        it = config.max_steps
    x_T = tracking_rollout(dyns, gains, s, u, goal_map)
    final = float(np.sum((x_T - np.asarray(s_T)) ** 2))
    rank_def = np.linalg.matrix_rank(phi1) < phi1.shape[1]
    return InversionResult(_goal(u), final, it, converged, rank_deficient=bool(rank_def),
                           history=history)


# ---------------------------------------------------------------------------
# numeric optimizers


class _Scaler:
    """Affine map between the search variable z in [-1, 1] and u."""

    def __init__(self, low, high, dim):
        if low is None:
            self.mid = np.zeros(dim)
            self.half = np.ones(dim)
            self.active = False
        else:
            low = np.broadcast_to(np.asarray(low, dtype=np.float64), (dim,))
            high = np.broadcast_to(np.asarray(high, dtype=np.float64), (dim,))
            self.mid = 0.5 * (low + high)
            self.half = 0.5 * (high - low)
            if np.any(self.half <= 0):
                raise ValueError("u_high must exceed u_low")
            self.active = True

    def to_u(self, z):
        return self.mid + self.half * z

    def to_z(self, u):
        return (np.asarray(u) - self.mid) / self.half

    def record(self):
        return (self.mid.copy(), self.half.copy()) if self.active else None


def adam_minimize(loss_batch: Callable, z0, config: InversionConfig):
    """Adam on central finite-difference gradients.

    ``loss_batch`` maps an (N, k) array to N losses. Returns
    ``(best_z, best_loss, iterations, converged, history)``; the best point
    seen is returned, so the final loss never exceeds the initial one.
    """
    z = np.array(z0, dtype=np.float64)
    k = z.size
    eps = config.fd_eps
    offsets = np.vstack([np.zeros(k), eps * np.eye(k), -eps * np.eye(k)])
    b1, b2 = ADAM_BETAS
    m = np.zeros(k)
    v = np.zeros(k)
    lr = config.lr
    best_z, best_loss = z.copy(), math.inf
    history = []
    since_best = 0
    converged = False
    it = 0
    for it in range(config.max_steps + 1):
        losses = loss_batch(z + offsets)
        cur = float(losses[0])
        if not math.isfinite(cur):
            if it == 0:
                raise NonFiniteLoss("loss at the initial point is not finite")
            break
        history.append(cur)
        if cur < best_loss:
            best_loss, best_z = cur, z.copy()
            since_best = 0
        else:
            since_best += 1
        if best_loss <= config.early_stop_tol:
            converged = True
            break
        if it == config.max_steps:
            break
        if since_best >= config.lr_patience:
            lr *= 0.5
            since_best = 0
            z = best_z.copy()
            m[:] = 0.0
            v[:] = 0.0
            if lr < config.min_lr:
                break
            continue
        grad = (losses[1:k + 1] - losses[k + 1:]) / (2 * eps)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient("finite-difference gradient is not finite")
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad**2
        t = it + 1
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        z = z - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
    return best_z, best_loss, it, converged, history


def cem_minimize(loss_batch: Callable, mean, std, config: InversionConfig, rng):
    """Cross-entropy method with a diagonal Gaussian.

    The incumbent best sample is re-inserted into every population, so the
    best elite loss never increases. The refit std is floored at the size of
    the last mean shift so the distribution keeps exploring while it moves. Stops after ``cem_patience`` iterations
    without improvement, when the loss drops below ``early_stop_tol``, or at
    ``cem_max_iters``.
    """
    rng = ensure_rng(rng)
    mean = np.array(mean, dtype=np.float64)
    std = np.broadcast_to(np.asarray(std, dtype=np.float64), mean.shape).copy()
    n = max(int(config.cem_samples), 2)
    n_elite = max(1, int(round(config.cem_elite_frac * n)))
    best_z = mean.copy()
    best_loss = float(loss_batch(mean[None, :])[0])
    if not math.isfinite(best_loss):
        raise NonFiniteLoss("loss at the initial mean is not finite")
    history = [best_loss]
    stale = 0
    converged = best_loss <= config.early_stop_tol
    it = 0
    while not converged and it < config.cem_max_iters:
        it += 1
        samples = mean + std * rng.standard_normal((n - 1, mean.size))
        samples = np.vstack([samples, best_z])
        losses = np.asarray(loss_batch(samples), dtype=np.float64)
        losses = np.where(np.isfinite(losses), losses, np.inf)
        order = np.argsort(losses, kind="stable")[:n_elite]
        elites = samples[order]
        if losses[order[0]] < best_loss:
            best_loss, best_z = float(losses[order[0]]), elites[0].copy()
            stale = 0
        else:
            stale += 1
        history.append(best_loss)
        new_mean = elites.mean(axis=0)
        # do not contract below the distance just travelled, otherwise the
        # search stalls short of minima more than ~2.5 initial stds away
        std = np.maximum(np.sqrt(np.maximum(elites.var(axis=0), CEM_VAR_FLOOR)),
                         np.abs(new_mean - mean))
        mean = new_mean
        if best_loss <= config.early_stop_tol:
            converged = True
        elif stale >= config.cem_patience:
            break
    return best_z, best_loss, it, converged, history


def _optimize(loss_u: Callable, u_init, config: InversionConfig, rng, zero_init_cem: bool):
    k = np.asarray(u_init).size
    scaler = _Scaler(config.u_low, config.u_high, k)

    def loss_z(Z):
        return loss_u(scaler.to_u(np.atleast_2d(Z)))

    z0 = scaler.to_z(u_init)
    if config.method is InversionMethod.CEM:
        z, loss, it, conv, hist = cem_minimize(loss_z, z0, config.cem_init_std, config, rng)
    elif config.method is InversionMethod.GRADIENT_DESCENT:
        z, loss, it, conv, hist = adam_minimize(loss_z, z0, config)
        if config.cem_fallback and loss > config.loss_threshold:
            # gradient descent stuck in a poor basin: retry with CEM, keep the better point
            cz, closs, cit, cconv, chist = cem_minimize(loss_z, z0, config.cem_init_std, config, rng)
            it += cit
            hist = hist + chist
            if closs < loss:
                z, loss, conv = cz, closs, cconv
    else:
        raise ValueError(f"{config.method} is not a numeric method")
    return scaler.to_u(z), float(loss), it, conv, scaler.record(), hist


def invert_numeric_state(low_level: Callable, dyn, s, s_T, config: InversionConfig,
                         rng: SeededRng | int | None = None, *, u_init=None,
                         s_path=None) -> InversionResult:
    """Numeric inverse from states only: roll the low level through the model
    for ``config.horizon`` steps and match the terminal state.

    ``u`` starts at the observed target state, projected through the low
    level's ``goal_map`` when it has one. With
    ``config.per_step_loss`` and ``s_path`` (the observed states
    ``s_1..s_T``), every intermediate state is matched too.
    """
    s = np.asarray(s, dtype=np.float64)
    s_T = np.asarray(s_T, dtype=np.float64)
    T = config.horizon
    dyns = _as_list(dyn, T)
    if u_init is None:
        G = getattr(low_level, "goal_map", None)
        u_init = s_T.copy() if G is None else pinv(G) @ s_T
    u_init = np.asarray(u_init, dtype=np.float64)
    scale = 1.0 if config.state_scale is None else np.asarray(config.state_scale, dtype=np.float64)
    lam = config.regularizer_weight
    path = None
    if config.per_step_loss:
        if s_path is None:
            raise ValueError("per-step loss needs the observed intermediate states")
        path = np.asarray(s_path, dtype=np.float64)

    def loss_u(U):
        X = np.broadcast_to(s, (U.shape[0], s.size))
        total = np.zeros(U.shape[0])
        for i in range(T):
            X = dyns[i].step(X, low_level(X, U, i))
            if path is not None and i < T - 1:
                total += np.sum(((X - path[i]) / scale) ** 2, axis=-1)
        total += np.sum(((X - s_T) / scale) ** 2, axis=-1)
        return total + lam * np.sum(U**2, axis=-1)

    u, loss, it, conv, scaling, hist = _optimize(loss_u, u_init, config, rng, zero_init_cem=False)
    return InversionResult(_goal(u), loss, it, conv, scaling=scaling, history=hist)


def invert_numeric_action(low_level: Callable, s_seq, a_seq, config: InversionConfig,
                          rng: SeededRng | int | None = None, *, u_dim=None,
                          u_init=None) -> InversionResult:
    """Numeric inverse from observed low-level actions.

    Minimizes ``sum_i |policy(s_i, u, i) - a_i|^2 + w |u|^2`` starting from
    ``u = 0``.
    """
    S = np.atleast_2d(np.asarray(s_seq, dtype=np.float64))
    A = np.atleast_2d(np.asarray(a_seq, dtype=np.float64))
    if len(S) != len(A):
        raise ValueError("state and action sequences differ in length")
    if u_init is None:
        u_init = np.zeros(S.shape[1] if u_dim is None else u_dim)
    u_init = np.asarray(u_init, dtype=np.float64)
    lam = config.regularizer_weight

    def loss_u(U):
        total = lam * np.sum(U**2, axis=-1)
        for i, (s_i, a_i) in enumerate(zip(S, A)):
            X = np.broadcast_to(s_i, (U.shape[0], s_i.size))
            total = total + np.sum((low_level(X, U, i) - a_i) ** 2, axis=-1)
        return total

    u, loss, it, conv, scaling, hist = _optimize(loss_u, u_init, config, rng, zero_init_cem=True)
    return InversionResult(_goal(u), loss, it, conv, scaling=scaling, history=hist)
