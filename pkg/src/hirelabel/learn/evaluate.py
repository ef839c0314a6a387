"""Seeded evaluation and JSON checkpoints."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..core import HighActionKind, normalized_score
from ..envs.goal import GoalEnv
from ..errors import IncompatibleModel
from ..io import config_hash, read_json, write_json
from ..policies import episode_rng, run_goal_episode, run_network_episode
from .mlp import Mlp
from .train import MlpPolicy


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: list
    seed: int
    normalized: Optional[float] = None

    def as_dict(self) -> dict:
        return {"mean_return": self.mean, "std_return": self.std, "normalized_score": self.normalized,
                "episodes": len(self.returns), "seed": self.seed, "returns": list(self.returns)}


def shifted_score(score: float, reference: float, floor: Optional[float] = None) -> float:
    """Normalized score; with a ``floor`` it is ``100 (score - floor) / (reference - floor)``.

    The floor form is needed when returns are negative, where a plain ratio
    would reward doing worse.
    """
    if floor is None:
        return normalized_score(score, reference)
    return normalized_score(score - floor, reference - floor)


def episode_returns(policy: Callable, env, low_level: Optional[Callable] = None, episodes: int = 50,
                    seed: int = 0, T_abs: int = 5) -> list[float]:
    """Return of ``episodes`` seeded episodes; episode ``e`` always sees the same randomness."""
    out = []
    for e in range(episodes):
        rng = episode_rng(seed, e)
        if isinstance(env, GoalEnv):
            if low_level is None:
                raise ValueError("goal environments need a low-level controller")
            _, total = run_goal_episode(env, policy, low_level, rng, T_abs, e)
        else:
            _, total = run_network_episode(env, policy, rng, e)
        out.append(float(total))
    return out


def evaluate_policy(policy: Callable, env, low_level: Optional[Callable] = None, episodes: int = 50,
                    seed: int = 0, T_abs: int = 5, reference: Optional[float] = None,
                    floor: Optional[float] = None) -> EvalResult:
    """Mean and std of episode returns, normalized against ``reference`` when given."""
    returns = episode_returns(policy, env, low_level, episodes, seed, T_abs)
    mean = float(np.mean(returns))
    norm = None if reference is None else shifted_score(mean, reference, floor)
    return EvalResult(mean=mean, std=float(np.std(returns)), returns=returns, seed=seed, normalized=norm)


def save_checkpoint(path, policy: MlpPolicy, config: dict, seed: int) -> None:
    write_json(path, {
        "format": "hirelabel-mlp-1",
        "sizes": list(policy.net.sizes),
        "head": policy.net.head,
        "kind": policy.kind.value,
        "params": policy.net.get_flat(),
        "in_mean": policy.in_mean, "in_std": policy.in_std,
        "out_mean": policy.out_mean, "out_std": policy.out_std,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
    })


def load_checkpoint(path) -> MlpPolicy:
    d = read_json(path)
    if d.get("format") != "hirelabel-mlp-1":
        raise IncompatibleModel(f"{path} is not a policy checkpoint")
    net = Mlp(d["sizes"], d["head"], rng=0)
    net.set_flat(d["params"])
    return MlpPolicy(net, HighActionKind(d["kind"]), np.array(d["in_mean"]), np.array(d["in_std"]),
                     np.array(d["out_mean"]), np.array(d["out_std"]))
