"""Turn raw low-level logs into (s, u, r, s') samples by inverting the low level.

Goal environments: each episode is cut into windows of ``T_abs`` transitions
(non-overlapping and aligned to the episode start unless ``overlap`` is
set; trailing partial windows are dropped). The window's start and end
states are inverted to the goal ``u`` that the low level would have needed.

Network environments: each logged step carries its flows; the forward LP is
rebuilt from the observation and inverted directly.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .control import LinearDynamics, LqgPolicy, LqrTracker, pinv
from .core import HighAction, HighActionKind, RelabeledSample, Transition, ensure_rng, split_episodes
from .errors import EmptyOutput, MissingRewardSource
from .inversion import (
    InversionConfig,
    InversionMethod,
    invert_lqg_analytic,
    invert_lqr_horizon_batch,
    invert_numeric_action,
    invert_numeric_state,
    invert_regularized_analytic,
)
from .lp.network import duality_inverse, flow_balance_inverse


class RewardSource(str, enum.Enum):
    OBSERVED = "Observed"
    MODEL = "Model"


class Baseline(str, enum.Enum):
    OHIO = "OHIO"
    OBSERVED_STATE = "ObservedState"


class NetworkInverse(str, enum.Enum):
    FLOW_BALANCE = "FlowBalance"
    DUALITY = "Duality"


@dataclass
class RelabelConfig:
    inversion: InversionConfig = field(default_factory=InversionConfig)
    T_abs: int = 5
    reward_source: RewardSource = RewardSource.OBSERVED
    loss_threshold: float = 0.2
    baseline: Baseline = Baseline.OHIO
    overlap: bool = False
    # leading observation coordinates that form the controlled state
    state_dims: Optional[int] = None
    # invert from logged actions instead of states (numeric methods only)
    from_actions: bool = False

    def __post_init__(self):
        if isinstance(self.inversion, dict):
            self.inversion = InversionConfig(**self.inversion)
        self.reward_source = RewardSource(self.reward_source)
        self.baseline = Baseline(self.baseline)
        if self.T_abs < 1:
            raise ValueError("T_abs must be >= 1")
        if self.loss_threshold < 0:
            raise ValueError("loss_threshold must be >= 0")


@dataclass
class RelabelReport:
    windows: int
    retained: int
    dropped: int
    mean_loss: float
    max_loss: float
    method: str
    seconds: float
    rank_deficient: int = 0

    @property
    def retention(self) -> float:
        return self.retained / self.windows if self.windows else 0.0

    def as_dict(self) -> dict:
        return {
            "windows": self.windows, "retained": self.retained, "dropped": self.dropped,
            "retention": self.retention, "mean_inv_loss": self.mean_loss, "max_inv_loss": self.max_loss,
            "method": self.method, "seconds": self.seconds, "rank_deficient": self.rank_deficient,
        }


def make_windows(transitions: Sequence[Transition], T_abs: int, overlap: bool = False) -> list[list[Transition]]:
    """Consecutive ``T_abs``-step windows per episode, in (episode, t) order."""
    stride = 1 if overlap else T_abs
    out = []
    for ep in split_episodes(transitions).values():
        for start in range(0, len(ep) - T_abs + 1, stride):
            out.append(ep[start:start + T_abs])
    return out


def window_reward_model(env, dyn, low_level: Callable, T_abs: int, state_dims: int) -> Callable:
    """Reward model for goal environments: roll ``low_level`` through ``dyn``
    from the window's first observation and sum the environment's reward."""

    def model(obs, u):
        obs = np.asarray(obs, dtype=np.float64)
        x, goal = obs[:state_dims], obs[state_dims:2 * state_dims]
        total = 0.0
        for i in range(T_abs):
            a = np.clip(low_level(x, u, i), env.action_low, env.action_high)
            d = dyn if isinstance(dyn, LinearDynamics) or hasattr(dyn, "step") else dyn[i]
            x = d.step(x, a)
            total += env.reward(x, goal, a)
        return total

    return model


def _window_rewards(windows, config: RelabelConfig, reward_model, U) -> np.ndarray:
    if config.reward_source is RewardSource.MODEL:
        if reward_model is None:
            raise MissingRewardSource("reward_source is Model but no reward model was supplied")
        return np.array([float(reward_model(w[0].s, u)) for w, u in zip(windows, U)])
    out = np.empty(len(windows))
    for k, w in enumerate(windows):
        if any(tr.r is None for tr in w):
            if reward_model is None:
                raise MissingRewardSource(
                    f"episode {w[0].episode} t={w[0].t}: reward not logged and no reward model given")
            out[k] = float(reward_model(w[0].s, U[k]))
        else:
            out[k] = float(sum(tr.r for tr in w))
    return out


def _invert_windows(windows, low_level, dyn, config: RelabelConfig, rng, n):
    """Returns ``(U, losses, rank_deficient_count)`` for every window."""
    inv = replace(config.inversion, horizon=config.T_abs)
    method = inv.method
    G = getattr(low_level, "goal_map", None)
    X0 = np.array([w[0].s[:n] for w in windows])
    XT = np.array([w[-1].s_next[:n] for w in windows])
    if method is InversionMethod.ANALYTIC_HORIZON:
        U, losses, rank_def = invert_lqr_horizon_batch(dyn, _gains(low_level, config.T_abs), X0, XT, G)
        return U, losses, int(rank_def) * len(windows)
    U, losses, rank_def = [], [], 0
    rng = ensure_rng(rng)
    for k, w in enumerate(windows):
        if method is InversionMethod.ANALYTIC_ONE_STEP:
            if config.T_abs != 1 or not isinstance(low_level, LqgPolicy):
                raise ValueError("the one-step analytic inverse needs T_abs = 1 and an LQG low level")
            res = invert_lqg_analytic(dyn, low_level.gains(X0[k]), X0[k], XT[k])
        elif method is InversionMethod.ANALYTIC_REGULARIZED:
            res = invert_regularized_analytic(dyn, _gains(low_level, config.T_abs), X0[k], XT[k], inv, G)
        elif config.from_actions:
            if any(tr.a is None for tr in w):
                raise MissingRewardSource("inverting from actions needs logged actions")
            u0 = XT[k] if G is None else pinv(G) @ XT[k]
            res = invert_numeric_action(low_level, [tr.s[:n] for tr in w], [tr.a for tr in w], inv,
                                        rng.child(k), u_init=u0)
        else:
            path = np.array([tr.s_next[:n] for tr in w])
            res = invert_numeric_state(low_level, dyn, X0[k], XT[k], inv, rng.child(k), s_path=path)
        U.append(res.u)
        losses.append(res.loss)
        rank_def += int(res.rank_deficient)
    return np.array(U), np.array(losses), rank_def


def _gains(low_level, T_abs):
    if not isinstance(low_level, LqrTracker):
        raise ValueError("analytic horizon inverses need an LqrTracker low level")
    if low_level.horizon != T_abs:
        raise ValueError(f"tracker horizon {low_level.horizon} differs from T_abs = {T_abs}")
    return low_level.gains


def relabel_dataset(raw: Sequence[Transition], low_level: Callable, dyn, config: RelabelConfig,
                    rng=None, reward_model: Optional[Callable] = None):
    """Invert every window of ``raw``. Returns ``(samples, report)``.

    ``dyn`` is the model the inverse rolls through: a ``LinearDynamics``, a
    per-step list of them, or (numeric methods) any object with a batched
    ``step(x, a)``. Samples whose inversion loss exceeds
    ``config.loss_threshold`` are dropped and counted.
    """
    t0 = time.perf_counter()
    windows = make_windows(raw, config.T_abs, config.overlap)
    if not windows:
        raise EmptyOutput(f"no complete window of {config.T_abs} steps in the data")
    n = windows[0][0].s.size if config.state_dims is None else config.state_dims
    if config.baseline is Baseline.OBSERVED_STATE:
        # the raw future state, read in the low level's goal coordinates
        U = np.array([w[-1].s_next[:n] for w in windows])
        G = getattr(low_level, "goal_map", None)
        if G is not None:
            U = U @ pinv(G).T
        losses = np.zeros(len(windows))
        rank_def = 0
        method = Baseline.OBSERVED_STATE.value
    else:
        U, losses, rank_def = _invert_windows(windows, low_level, dyn, config, rng, n)
        method = config.inversion.method.value
    rewards = _window_rewards(windows, config, reward_model, U)
    samples = []
    kept_losses = []
    for w, u, r, loss in zip(windows, U, rewards, losses):
        if not loss <= config.loss_threshold:
            continue
        samples.append(RelabeledSample(s=w[0].s, u=HighAction(u, HighActionKind.GOAL_STATE), r=float(r),
                                       s_next=w[-1].s_next, inv_loss=max(float(loss), 0.0),
                                       episode=w[0].episode, t=w[0].t))
        kept_losses.append(loss)
    all_losses = np.asarray(losses, dtype=np.float64)
    report = RelabelReport(
        windows=len(windows), retained=len(samples), dropped=len(windows) - len(samples),
        mean_loss=float(np.mean(all_losses)), max_loss=float(np.max(all_losses)), method=method,
        seconds=time.perf_counter() - t0, rank_deficient=rank_def,
    )
    if not samples:
        raise EmptyOutput(f"all {len(windows)} windows exceeded the loss threshold {config.loss_threshold}")
    return samples, report


def split_network_action(env, a):
    """Logged action vector to ``(flows, production or None)``."""
    a = np.asarray(a, dtype=np.float64)
    E = len(env.edges)
    if getattr(env, "warehouses", ()):
        return a[:E], a[E:]
    return a, None


def network_inverse(env, obs, a, method: NetworkInverse = NetworkInverse.FLOW_BALANCE):
    """High-level action behind one logged network decision. Returns ``(u, epsilon)``."""
    method = NetworkInverse(method)
    net = env.network_from_context(env.context_from_observation(obs))
    flows, prod = split_network_action(env, a)
    if method is NetworkInverse.FLOW_BALANCE:
        return flow_balance_inverse(net, flows, prod), 0.0
    res = duality_inverse(net, flows, production=prod)
    if not net.warehouses:
        q = np.clip(res.q_hat, 0.0, None)
        return HighAction(q / q.sum(), HighActionKind.DISTRIBUTION), res.epsilon
    W = list(net.warehouses)
    vals = np.concatenate([res.production[W], res.q_hat[list(net.stores)]])
    return HighAction(np.clip(vals, 0.0, None), HighActionKind.MIXED), res.epsilon


def relabel_network_dataset(raw: Sequence[Transition], env, method: NetworkInverse = NetworkInverse.FLOW_BALANCE):
    """Invert each logged network step; rewards are copied. Returns ``(samples, report)``."""
    t0 = time.perf_counter()
    method = NetworkInverse(method)
    samples, losses = [], []
    for tr in raw:
        if tr.a is None:
            raise MissingRewardSource(f"episode {tr.episode} t={tr.t}: network inverses need logged flows")
        if tr.r is None:
            raise MissingRewardSource(f"episode {tr.episode} t={tr.t}: reward not logged")
        u, eps = network_inverse(env, tr.s, tr.a, method)
        samples.append(RelabeledSample(s=tr.s, u=u, r=float(tr.r), s_next=tr.s_next, inv_loss=eps,
                                       episode=tr.episode, t=tr.t))
        losses.append(eps)
    if not samples:
        raise EmptyOutput("no transitions to relabel")
    losses = np.array(losses)
    report = RelabelReport(windows=len(samples), retained=len(samples), dropped=0, mean_loss=float(losses.mean()),
                           max_loss=float(losses.max()), method=method.value, seconds=time.perf_counter() - t0)
    return samples, report
