"""Run configuration and the collect / relabel / train / eval stages behind the CLI.

A run configuration is a nested dict with sections ``env``, ``low_level``,
``policy``, ``relabel``, ``learn`` and ``eval`` plus a top-level ``seed``.
Missing keys take the values in :data:`DEFAULTS`.
"""
from __future__ import annotations

import copy
import os
from typing import Optional


from .control import LqrTracker
from .core import Transition
from .envs import ENV_KINDS, GoalEnv, RoutingEnv, SupplyChainEnv, make_env
from .errors import IncompatibleModel, InvalidConfig
from .inversion import InversionConfig, InversionMethod
from .learn import LearnerConfig, MlpPolicy, evaluate_policy, train
from .policies import (
    DispersionPolicy,
    HoldPolicy,
    NoOrderPolicy,
    OrderUpToPolicy,
    PolicyKind,
    ProportionalPolicy,
    UniformGoalPolicy,
    WindowGoalSetter,
    default_cost,
    default_low_level,
    episode_rng,
    random_low_level,
    run_goal_episode,
    run_network_episode,
)
from .relabel import (
    NetworkInverse,
    RelabelConfig,
    RewardSource,
    relabel_dataset,
    relabel_network_dataset,
    window_reward_model,
)

SEED_ENV_VAR = "OHIO_SEED"

DEFAULTS = {
    "seed": 0,
    "env": {"kind": "linear"},
    "low_level": {
        "horizon": 5,
        "q_pos": 1.0,
        "q_vel": 1.0,
        "r": 1000.0,
        "full_state_goals": False,
    },
    "policy": {
        "kind": "HierarchicalExpert",
        "episodes": 250,
        "noise_std": 0.0,
        # the last fraction of episodes is collected with noisy_std instead
        "noisy_fraction": 0.0,
        "noisy_std": 0.0,
        "state_only": False,
        "levels": None,
        "warehouse_level": 25.0,
        # the collecting tracker's costs relative to the nominal low level;
        # relabeling and deployment always assume the nominal one
        "state_scale": 1.0,
        "control_scale": 1.0,
    },
    "relabel": {
        "method": "AnalyticHorizon",
        "network_method": "FlowBalance",
        "T_abs": 5,
        "reward_source": "Observed",
        "loss_threshold": 0.2,
        "baseline": "OHIO",
        "overlap": False,
        "from_actions": False,
        # "nominal" (linear model) or "simulator" (the env's noise-free step)
        "model": "auto",
        "inversion": {},
    },
    "learn": LearnerConfig().as_dict(),
    "eval": {"episodes": 50, "seed": 1000, "reference": None, "floor": None},
}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(cfg: dict, key: str, value) -> None:
    """``set_dotted(cfg, "relabel.method", "CEM")`` sets ``cfg["relabel"]["method"]``."""
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise InvalidConfig(f"{key}: {p} is not a section")
        node = nxt
    node[parts[-1]] = value


def resolve(config: Optional[dict] = None, overrides: Optional[dict] = None) -> dict:
    """Defaults, then the config, then dotted overrides, then ``OHIO_SEED``."""
    cfg = merge(DEFAULTS, config or {})
    for key, value in (overrides or {}).items():
        set_dotted(cfg, key, value)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed not in (None, ""):
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise InvalidConfig(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from None
    if not isinstance(cfg.get("seed"), int) or isinstance(cfg["seed"], bool):
        raise InvalidConfig("seed must be an integer")
    if cfg["env"].get("kind") not in ENV_KINDS:
        raise InvalidConfig(f"env.kind must be one of {ENV_KINDS}")
    return cfg


# ---------------------------------------------------------------------------
# builders


def build_env(cfg: dict):
    params = {k: v for k, v in cfg["env"].items() if k != "kind"}
    return make_env(cfg["env"]["kind"], **params)


def is_goal_env(env) -> bool:
    return isinstance(env, GoalEnv)


def build_low_level(cfg: dict, env, state_scale: float = 1.0, control_scale: float = 1.0) -> Optional[LqrTracker]:
    """Goal-tracking LQR for goal environments; ``None`` for network envs (LP low level)."""
    if not is_goal_env(env):
        return None
    ll = cfg["low_level"]
    cost = default_cost(env, ll["q_pos"], ll["q_vel"], ll["r"]).scaled(state_scale, control_scale)
    return default_low_level(env, cost, ll["horizon"], full_state_goals=ll["full_state_goals"])


def build_policy(cfg: dict, env, noise_std: Optional[float] = None):
    """Behavior policy from ``policy.kind``; returns ``(high_level, low_level)``."""
    pc = cfg["policy"]
    try:
        kind = PolicyKind(pc["kind"])
    except ValueError:
        raise InvalidConfig(f"unknown policy.kind {pc['kind']!r}") from None
    noise = pc["noise_std"] if noise_std is None else noise_std
    if kind is PolicyKind.OBSERVED_STATE_BASELINE:
        raise InvalidConfig("ObservedStateBaseline is a relabeling baseline (relabel.baseline), not a collector")
    if is_goal_env(env):
        low = build_low_level(cfg, env, pc["state_scale"], pc["control_scale"])
        if kind is PolicyKind.HIERARCHICAL_EXPERT:
            return WindowGoalSetter(env, low, cfg["relabel"]["T_abs"], noise), low
        if kind is PolicyKind.RANDOM_LOW_LEVEL:
            return UniformGoalPolicy(env), "random"
        raise InvalidConfig(f"policy {kind.value} does not apply to goal environments")
    if isinstance(env, SupplyChainEnv):
        if kind is PolicyKind.ORDER_UP_TO:
            return OrderUpToPolicy(env, pc["levels"], pc["warehouse_level"], noise), None
        raise InvalidConfig(f"policy {kind.value} does not apply to supply-chain environments")
    if isinstance(env, RoutingEnv):
        if kind is PolicyKind.PROPORTIONAL_HEURISTIC:
            return ProportionalPolicy(env), None
        if kind is PolicyKind.DIRICHLET_DISPERSION:
            return DispersionPolicy(env), None
        raise InvalidConfig(f"policy {kind.value} does not apply to routing environments")
    raise InvalidConfig(f"no policies for {type(env).__name__}")


def reference_policies(cfg: dict, env):
    """``(reference, floor)`` policies used to normalize scores; ``floor`` may be ``None``."""
    if is_goal_env(env):
        low = build_low_level(cfg, env)
        return WindowGoalSetter(env, low, cfg["relabel"]["T_abs"]), HoldPolicy(env, low)
    if isinstance(env, SupplyChainEnv):
        return OrderUpToPolicy(env, cfg["policy"]["levels"], cfg["policy"]["warehouse_level"]), NoOrderPolicy(env)
    return ProportionalPolicy(env), None


# ---------------------------------------------------------------------------
# stages


def collect(cfg: dict) -> list[Transition]:
    """Seeded collection run; episode ``e`` uses the stream ``episode_rng(seed, e)``."""
    env = build_env(cfg)
    pc = cfg["policy"]
    episodes = int(pc["episodes"])
    if episodes < 1:
        raise InvalidConfig("policy.episodes must be >= 1")
    n_noisy = int(round(episodes * float(pc["noisy_fraction"])))
    clean, low = build_policy(cfg, env)
    noisy = build_policy(cfg, env, pc["noisy_std"])[0] if n_noisy else clean
    keep = not pc["state_only"]
    T_abs = cfg["relabel"]["T_abs"]
    out = []
    for e in range(episodes):
        policy = noisy if e >= episodes - n_noisy else clean
        rng = episode_rng(cfg["seed"], e)
        if is_goal_env(env):
            ll = random_low_level(env, rng.child(0x5EED)) if low == "random" else low
            out += run_goal_episode(env, policy, ll, rng, T_abs, e, keep_actions=keep)[0]
        else:
            out += run_network_episode(env, policy, rng, e, keep_actions=keep)[0]
    return out


def relabel_config(cfg: dict, env) -> RelabelConfig:
    rl = cfg["relabel"]
    inv = dict(rl.get("inversion") or {})
    inv.setdefault("method", rl["method"])
    if is_goal_env(env) and not InversionMethod(inv["method"]).is_analytic:
        # numeric search runs in a scaled box wide enough for the expert's goals
        inv.setdefault("u_low", -2000.0)
        inv.setdefault("u_high", 2000.0)
    return RelabelConfig(
        inversion=InversionConfig(**inv), T_abs=rl["T_abs"], reward_source=rl["reward_source"],
        loss_threshold=float(rl["loss_threshold"]), baseline=rl["baseline"], overlap=rl["overlap"],
        state_dims=env.n if is_goal_env(env) else None, from_actions=rl["from_actions"],
    )


def relabel(cfg: dict, raw: list[Transition]):
    """Returns ``(samples, report)``."""
    env = build_env(cfg)
    if not is_goal_env(env):
        return relabel_network_dataset(raw, env, NetworkInverse(cfg["relabel"]["network_method"]))
    low = build_low_level(cfg, env)
    rc = relabel_config(cfg, env)
    model = cfg["relabel"]["model"]
    if model == "auto":
        model = "nominal" if rc.inversion.method.is_analytic else "simulator"
    if model not in ("nominal", "simulator"):
        raise InvalidConfig("relabel.model must be auto, nominal or simulator")
    if model == "simulator" and rc.inversion.method.is_analytic:
        raise InvalidConfig("analytic inverses need the nominal linear model")
    dyn = low.dyn if model == "nominal" else env.simulator()
    reward_model = None
    if rc.reward_source is RewardSource.MODEL or any(tr.r is None for tr in raw):
        reward_model = window_reward_model(env, low.dyn, low, rc.T_abs, env.n)
    return relabel_dataset(raw, low, dyn, rc, rng=cfg["seed"], reward_model=reward_model)


def learner_config(cfg: dict) -> LearnerConfig:
    lc = dict(cfg["learn"])
    lc["seed"] = cfg["seed"]
    try:
        return LearnerConfig(**lc)
    except TypeError as exc:
        raise InvalidConfig(f"bad learn section: {exc}") from exc


def fit(cfg: dict, samples):
    """Returns ``(policy, curve)``."""
    return train(samples, learner_config(cfg))


def reference_scores(cfg: dict, env=None):
    """Mean returns of the reference and floor policies on the evaluation seeds."""
    env = build_env(cfg) if env is None else env
    ev = cfg["eval"]
    ref_pol, floor_pol = reference_policies(cfg, env)
    low = build_low_level(cfg, env)
    T_abs = cfg["relabel"]["T_abs"]
    ref = ev["reference"]
    if ref is None:
        ref = evaluate_policy(ref_pol, env, low, ev["episodes"], ev["seed"], T_abs).mean
    floor = ev["floor"]
    if floor is None and floor_pol is not None:
        floor = evaluate_policy(floor_pol, env, low, ev["episodes"], ev["seed"], T_abs).mean
    return float(ref), None if floor is None else float(floor)


def evaluate(cfg: dict, policy, env=None):
    """Evaluate ``policy`` with the deployment low level; returns an :class:`EvalResult`."""
    env = build_env(cfg) if env is None else env
    ev = cfg["eval"]
    ref, floor = reference_scores(cfg, env)
    if isinstance(policy, MlpPolicy) and policy.obs_dim != env.obs_dim:
        raise IncompatibleModel(f"model expects {policy.obs_dim} observation features, "
                                f"{cfg['env']['kind']} provides {env.obs_dim}")
    return evaluate_policy(policy, env, build_low_level(cfg, env), ev["episodes"], ev["seed"],
                           cfg["relabel"]["T_abs"], reference=ref, floor=floor)
