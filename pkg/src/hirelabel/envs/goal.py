"""Goal-reaching simulators: a linear double integrator and a 2-D point mass with drag.

The observation is ``[x, goal]``; goals are full state vectors with zero
velocity. Per-step reward is ``-|x' - goal|^2 - 0.01 |a|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..control import LinearDynamics, linearize_fd
from ..core import HighAction, SeededRng, ensure_rng
from ..errors import ActionOutOfBounds, InvalidConfig

ACTION_PENALTY = 0.01


def double_integrator(dt: float = 0.5) -> LinearDynamics:
    return LinearDynamics(A=[[1.0, dt], [0.0, 1.0]], B=[[dt * dt / 2.0], [dt]])


def planar_double_integrator(dt: float = 0.5) -> LinearDynamics:
    """Two decoupled double integrators; state ``(px, vx, py, vy)``, action ``(ax, ay)``."""
    d = double_integrator(dt)
    A = np.zeros((4, 4))
    B = np.zeros((4, 2))
    A[:2, :2] = A[2:, 2:] = d.A
    B[:2, :1] = B[2:, 1:] = d.B
    return LinearDynamics(A=A, B=B)


@dataclass(frozen=True)
class GoalState:
    x: np.ndarray
    goal: np.ndarray
    t: int
    rng: SeededRng = field(repr=False, compare=False)

    @property
    def observation(self) -> np.ndarray:
        return np.concatenate([self.x, self.goal])


@dataclass(frozen=True)
class StepRecord:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray


class GoalEnv:
    """Shared machinery for the goal-reaching environments."""

    kind = "goal"
    position_dims: tuple = (0,)

    def __init__(self, *, noise_std=0.0, goal_low=-5.0, goal_high=5.0, start_low=-5.0, start_high=5.0,
                 start_speed=0.0, episode_length=40, action_bound=10.0):
        if episode_length < 1:
            raise InvalidConfig("episode_length must be >= 1")
        if noise_std < 0:
            raise InvalidConfig("noise_std must be >= 0")
        if not goal_low < goal_high or not start_low < start_high:
            raise InvalidConfig("empty goal or start box")
        if action_bound <= 0:
            raise InvalidConfig("action_bound must be positive")
        self.noise_std = float(noise_std)
        self.goal_low, self.goal_high = float(goal_low), float(goal_high)
        self.start_low, self.start_high = float(start_low), float(start_high)
        self.start_speed = float(start_speed)
        self.episode_length = int(episode_length)
        self.action_bound = float(action_bound)

    # subclasses provide: n, m, _next_state(x, a)

    @property
    def state_dim(self) -> int:
        return self.n

    @property
    def obs_dim(self) -> int:
        return 2 * self.n

    @property
    def goal_dim(self) -> int:
        return self.n

    @property
    def action_low(self) -> np.ndarray:
        return np.full(self.m, -self.action_bound)

    @property
    def action_high(self) -> np.ndarray:
        return np.full(self.m, self.action_bound)

    def goal_bounds(self):
        """Per-dimension box used to scale goals for numeric inversion."""
        span = 2.0 * max(abs(self.goal_low), abs(self.goal_high), abs(self.start_low), abs(self.start_high))
        return np.full(self.n, -span), np.full(self.n, span)

    def _sample_point(self, rng, low, high, speed):
        x = np.zeros(self.n)
        pos = list(self.position_dims)
        x[pos] = rng.uniform(low, high, size=len(pos))
        vel = [i for i in range(self.n) if i not in self.position_dims]
        if speed > 0:
            x[vel] = rng.uniform(-speed, speed, size=len(vel))
        return x

    def reset(self, rng=None) -> tuple[GoalState, np.ndarray]:
        rng = ensure_rng(rng)
        x = self._sample_point(rng, self.start_low, self.start_high, self.start_speed)
        goal = self._sample_point(rng, self.goal_low, self.goal_high, 0.0)
        state = GoalState(x=x, goal=goal, t=0, rng=rng)
        return state, state.observation

    def reward(self, x_next, goal, a) -> float:
        a = np.asarray(a, dtype=np.float64)
        return float(-np.sum((x_next - goal) ** 2) - ACTION_PENALTY * np.sum(a**2))

    def step(self, state: GoalState, a) -> tuple[GoalState, np.ndarray, float]:
        a = np.asarray(a, dtype=np.float64).reshape(self.m)
        if not np.all(np.isfinite(a)):
            raise ActionOutOfBounds("action has non-finite entries")
        if np.any(np.abs(a) > self.action_bound):
            raise ActionOutOfBounds(f"action {a} outside [-{self.action_bound}, {self.action_bound}]")
        x_next = self._next_state(state.x, a)
        if self.noise_std > 0:
            x_next = x_next + self.noise_std * state.rng.standard_normal(self.n)
        r = self.reward(x_next, state.goal, a)
        new = replace(state, x=x_next, t=state.t + 1)
        return new, new.observation, r

    def done(self, state: GoalState) -> bool:
        return state.t >= self.episode_length

    def step_hierarchical(self, state: GoalState, u, low_level: Callable, T_abs: int = 5,
                          records: Optional[list] = None):
        """Run ``low_level(x, u, i)`` for up to ``T_abs`` steps (stopping at episode end).

        Returns ``(state, observation, summed reward)``. When ``records`` is a
        list, each low-level ``StepRecord`` is appended to it.
        """
        u = u.values if isinstance(u, HighAction) else np.asarray(u, dtype=np.float64)
        total = 0.0
        for i in range(T_abs):
            if self.done(state):
                break
            s = state.observation
            a = np.clip(low_level(state.x, u, i), -self.action_bound, self.action_bound)
            state, obs, r = self.step(state, a)
            total += r
            if records is not None:
                records.append(StepRecord(s=s, a=a, r=r, s_next=obs))
        return state, state.observation, total

    def nominal_dynamics(self, x=None) -> LinearDynamics:
        """Affine model used by low-level controllers and inverses."""
        raise NotImplementedError

    def simulator(self) -> "Simulator":
        """Noise-free batched step function, usable as a model by numeric inverses."""
        return Simulator(self._next_state, self.n, self.m)


@dataclass(frozen=True)
class Simulator:
    step_fn: Callable
    n: int
    m: int

    def step(self, x, a) -> np.ndarray:
        return self.step_fn(x, a)


class LinearEnv(GoalEnv):
    """``x' = A x + B a + c + noise``; defaults to the dt = 0.5 double integrator."""

    def __init__(self, A=None, B=None, c=None, dt: float = 0.5, position_dims=None, **kw):
        super().__init__(**kw)
        if A is None:
            dyn = double_integrator(dt)
            A, B = dyn.A, dyn.B
        try:
            self.dyn = LinearDynamics(A=A, B=B, c=c)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc
        self.n, self.m = self.dyn.n, self.dyn.m
        self.position_dims = tuple(range(0, self.n, 2)) if position_dims is None else tuple(position_dims)

    def _next_state(self, x, a):
        return self.dyn.step(x, a)

    def nominal_dynamics(self, x=None) -> LinearDynamics:
        return self.dyn


class NonlinearEnv(GoalEnv):
    """Planar point mass with velocity-cubed drag.

    Acceleration is ``a - kappa |v|^2 v`` held constant over the step, so
    ``kappa = 0`` gives exactly the planar double integrator.
    """

    position_dims = (0, 2)

    def __init__(self, kappa: float = 0.05, dt: float = 0.5, **kw):
        super().__init__(**kw)
        if kappa < 0 or dt <= 0:
            raise InvalidConfig("need kappa >= 0 and dt > 0")
        self.kappa = float(kappa)
        self.dt = float(dt)
        self.n, self.m = 4, 2

    def _next_state(self, x, a):
        x = np.asarray(x, dtype=np.float64)
        p = x[..., [0, 2]]
        v = x[..., [1, 3]]
        speed2 = np.sum(v * v, axis=-1, keepdims=True)
        acc = np.asarray(a, dtype=np.float64) - self.kappa * speed2 * v
        dt = self.dt
        p_next = p + dt * v + 0.5 * dt * dt * acc
        v_next = v + dt * acc
        out = np.empty(np.broadcast_shapes(x.shape, p_next.shape[:-1] + (4,)))
        out[..., 0], out[..., 2] = p_next[..., 0], p_next[..., 1]
        out[..., 1], out[..., 3] = v_next[..., 0], v_next[..., 1]
        return out

    def nominal_dynamics(self, x=None) -> LinearDynamics:
        """Finite-difference linearization at ``x`` with zero action (rest if ``x`` is None)."""
        x0 = np.zeros(4) if x is None else np.asarray(x, dtype=np.float64)[:4]
        return linearize_fd(self._next_state, x0, np.zeros(2))
