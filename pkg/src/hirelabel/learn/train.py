"""Behavior cloning and advantage-weighted regression on relabeled samples."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import HighAction, HighActionKind, RelabeledSample, SeededRng
from ..errors import EmptyDataset, IncompatibleModel
from .mlp import Adam, Mlp, expectile_loss_and_grad

# policy and value networks draw from separate streams of the run seed
POLICY_STREAM = 0x504F4C
VALUE_STREAM = 0x56414C


class Algorithm(str, enum.Enum):
    BC = "BC"
    AWR = "AWR"


@dataclass
class LearnerConfig:
    algorithm: Algorithm = Algorithm.BC
    lr: float = 1e-3
    batch: int = 100
    gamma: float = 0.97
    expectile: float = 0.9
    temperature: float = 3.0
    epochs: int = 100
    weight_clip: float = 100.0
    seed: int = 0
    hidden: tuple = (64, 64)
    value_sweeps: int = 20
    value_epochs: int = 5
    # divide advantages by their standard deviation before exponentiating
    normalize_advantage: bool = True

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 < self.expectile < 1:
            raise ValueError("expectile must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.lr <= 0 or self.batch < 1 or self.epochs < 0:
            raise ValueError("need lr > 0, batch >= 1 and epochs >= 0")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class MlpPolicy:
    """Network plus input/output standardization, mapping observations to high-level actions."""

    net: Mlp
    kind: HighActionKind
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    out_std: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def obs_dim(self) -> int:
        return self.net.sizes[0]

    @property
    def action_dim(self) -> int:
        return self.net.sizes[-1]

    def predict(self, S) -> np.ndarray:
        S = np.atleast_2d(np.asarray(S, dtype=np.float64))
        if S.shape[1] != self.obs_dim:
            raise IncompatibleModel(f"model expects {self.obs_dim} inputs, got {S.shape[1]}")
        Y = self.net.forward((S - self.in_mean) / self.in_std)
        if self.net.head == "linear":
            Y = Y * self.out_std + self.out_mean
        if self.kind is HighActionKind.MIXED:
            Y = np.clip(Y, 0.0, None)
        return Y

    def __call__(self, obs, rng=None) -> HighAction:
        return HighAction(self.predict(obs)[0], self.kind)


def _standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return mean, std


def _arrays(samples: Sequence[RelabeledSample]):
    if not samples:
        raise EmptyDataset("no samples to train on")
    kinds = {s.u.kind for s in samples}
    if len(kinds) != 1:
        raise ValueError(f"mixed high-level action kinds in one dataset: {sorted(k.value for k in kinds)}")
    S = np.array([s.s for s in samples])
    U = np.array([s.u.values for s in samples])
    R = np.array([s.r for s in samples])
    S1 = np.array([s.s_next for s in samples])
    return S, U, R, S1, kinds.pop()


def terminal_flags(samples: Sequence[RelabeledSample]) -> np.ndarray:
    """True for the last sample of each episode (no bootstrapping past it)."""
    last = {}
    for s in samples:
        last[s.episode] = max(last.get(s.episode, -1), s.t)
    return np.array([s.t == last[s.episode] for s in samples])


def _make_policy(S, U, kind, config: LearnerConfig) -> MlpPolicy:
    head = "softmax" if kind is HighActionKind.DISTRIBUTION else "linear"
    net = Mlp((S.shape[1], *config.hidden, U.shape[1]), head, SeededRng(config.seed).child(POLICY_STREAM))
    in_mean, in_std = _standardize(S)
    if head == "linear":
        out_mean, out_std = _standardize(U)
    else:
        out_mean, out_std = np.zeros(0), np.zeros(0)
    return MlpPolicy(net, kind, in_mean, in_std, out_mean, out_std)


def _targets(policy: MlpPolicy, U):
    return U if policy.net.head == "softmax" else (U - policy.out_mean) / policy.out_std


def _fit_policy(policy: MlpPolicy, S, U, weights, config: LearnerConfig, curve: list, extra=None):
    X = (S - policy.in_mean) / policy.in_std
    Y = _targets(policy, U)
    opt = Adam(policy.net.params, config.lr)
    rng = SeededRng(config.seed).child(POLICY_STREAM + 1)
    N = len(X)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        for start in range(0, N, config.batch):
            idx = order[start:start + config.batch]
            _, grads = policy.net.loss_and_grad(X[idx], Y[idx], weights[idx])
            opt.step(policy.net.params, grads)
        loss, _ = policy.net.loss_and_grad(X, Y, weights)
        row = {"epoch": epoch, "loss": loss}
        if extra:
            row.update(extra)
        curve.append(row)


def bc_train(samples: Sequence[RelabeledSample], config: Optional[LearnerConfig] = None):
    """Behavior cloning by mini-batch Adam. Returns ``(policy, curve)``.

    Regression targets (goal states, orders) use squared error on
    standardized outputs; distributions use cross-entropy through a softmax head.
    """
    config = LearnerConfig() if config is None else config
    S, U, _, _, kind = _arrays(samples)
    policy = _make_policy(S, U, kind, config)
    curve: list = []
    _fit_policy(policy, S, U, np.ones(len(S)), config, curve)
    return policy, curve


def fit_value(S, R, S1, done, config: LearnerConfig):
    """Fitted expectile value iteration; returns ``(net, predict)`` on raw observations."""
    in_mean, in_std = _standardize(np.vstack([S, S1]))
    scale = float(np.std(R)) / max(1.0 - config.gamma, 1e-3) if np.std(R) > 0 else 1.0
    net = Mlp((S.shape[1], *config.hidden, 1), "linear", SeededRng(config.seed).child(VALUE_STREAM))
    opt = Adam(net.params, config.lr)
    rng = SeededRng(config.seed).child(VALUE_STREAM + 1)
    X, X1 = (S - in_mean) / in_std, (S1 - in_mean) / in_std
    N = len(X)
    for _ in range(config.value_sweeps):
        y = (R + config.gamma * np.where(done, 0.0, scale * net.forward(X1)[:, 0])) / scale
        for _ in range(config.value_epochs):
            order = rng.permutation(N)
            for start in range(0, N, config.batch):
                idx = order[start:start + config.batch]
                _, grads = expectile_loss_and_grad(net, X[idx], y[idx], config.expectile)
                opt.step(net.params, grads)

    def predict(Z):
        return scale * net.forward((np.atleast_2d(Z) - in_mean) / in_std)[:, 0]

    return net, predict


def awr_weights(R, V_s, V_next, done, config: LearnerConfig) -> np.ndarray:
    """``min(exp(A / beta), clip)`` with ``A = r + gamma V(s') - V(s)``."""
    A = R + config.gamma * np.where(done, 0.0, V_next) - V_s
    if config.normalize_advantage:
        sd = A.std()
        if sd > 1e-12:
            A = A / sd
    return np.minimum(np.exp(np.clip(A / config.temperature, None, 700.0)), config.weight_clip)


def awr_train(samples: Sequence[RelabeledSample], config: Optional[LearnerConfig] = None):
    """Advantage-weighted regression with an expectile value function.

    Returns ``(policy, curve)``; each curve row carries the mean weight.
    """
    config = LearnerConfig(algorithm=Algorithm.AWR) if config is None else config
    S, U, R, S1, kind = _arrays(samples)
    done = terminal_flags(samples)
    _, V = fit_value(S, R, S1, done, config)
    w = awr_weights(R, V(S), V(S1), done, config)
    policy = _make_policy(S, U, kind, config)
    curve: list = []
    _fit_policy(policy, S, U, w, config, curve, {"mean_weight": float(w.mean())})
    return policy, curve


def train(samples: Sequence[RelabeledSample], config: LearnerConfig):
    if config.algorithm is Algorithm.AWR:
        return awr_train(samples, config)
    return bc_train(samples, config)
