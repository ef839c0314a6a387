"""Domain types: states, high-level actions, transitions, datasets and seeded randomness.

States and low-level actions are plain float64 numpy vectors; ``as_vector``
validates them. High-level actions carry a kind tag because the three
families (goal states, commodity distributions, mixed production/distribution
orders) are consumed differently by the low-level policies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DimMismatch,
    InvalidHighAction,
    NonConsecutiveTime,
    NonFiniteValue,
    ZeroReference,
)

_MASK64 = (1 << 64) - 1


def as_vector(values, name="vector") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array (a copy, read-only)."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class HighActionKind(str, enum.Enum):
    GOAL_STATE = "GoalState"
    DISTRIBUTION = "Distribution"
    MIXED = "MixedProductionDistribution"


@dataclass(frozen=True)
class HighAction:
    """Output of the upper policy, consumed as a parameter by the low level.

    Distributions within 1e-6 of the simplex are renormalized on
    construction; anything further away is rejected.
    """

    values: np.ndarray
    kind: HighActionKind = HighActionKind.GOAL_STATE

    def __post_init__(self):
        kind = HighActionKind(self.kind)
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if vals.size == 0 or not np.all(np.isfinite(vals)):
            raise InvalidHighAction("high-level action must be a nonempty finite vector")
        if kind is HighActionKind.DISTRIBUTION:
            if np.any(vals < -1e-6):
                raise InvalidHighAction(f"distribution has negative entries: {vals}")
            total = vals.sum()
            if abs(total - 1.0) > 1e-6:
                raise InvalidHighAction(f"distribution sums to {total!r}, not 1")
            vals = np.clip(vals, 0.0, None)
            vals = vals / vals.sum()
        elif kind is HighActionKind.MIXED and np.any(vals < -1e-9):
            raise InvalidHighAction("production/distribution orders must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", kind)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, HighAction):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.kind, self.values.tobytes()))


@dataclass(frozen=True)
class Transition:
    """One logged low-level step. ``a`` and ``r`` are ``None`` when unobserved."""

    episode: int
    t: int
    s: np.ndarray
    s_next: np.ndarray
    a: Optional[np.ndarray] = None
    r: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "s", as_vector(self.s, "s"))
        object.__setattr__(self, "s_next", as_vector(self.s_next, "s_next"))
        if self.a is not None:
            object.__setattr__(self, "a", as_vector(self.a, "a"))
        if self.r is not None:
            r = float(self.r)
            if not math.isfinite(r):
                raise NonFiniteValue("reward is not finite")
            object.__setattr__(self, "r", r)
        if self.s.size != self.s_next.size:
            raise DimMismatch(f"s has dim {self.s.size} but s_next has dim {self.s_next.size}")
        if self.t < 0:
            raise NonConsecutiveTime(f"negative timestep {self.t}")

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented

        def same(x, y):
            if x is None or y is None:
                return x is None and y is None
            return np.array_equal(x, y)

        return (
            self.episode == other.episode
            and self.t == other.t
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.s_next, other.s_next)
            and same(self.a, other.a)
            and self.r == other.r
        )


@dataclass(frozen=True)
class RelabeledSample:
    s: np.ndarray
    u: HighAction
    r: float
    s_next: np.ndarray
    inv_loss: float = 0.0
    episode: int = 0
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "s", as_vector(self.s, "s"))
        object.__setattr__(self, "s_next", as_vector(self.s_next, "s_next"))
        if not math.isfinite(self.r):
            raise NonFiniteValue("relabeled reward is not finite")
        if not (self.inv_loss >= 0.0 and math.isfinite(self.inv_loss)):
            raise NonFiniteValue(f"inversion loss must be finite and >= 0, got {self.inv_loss}")


def validate_trajectory(transitions: Sequence[Transition]) -> list[Transition]:
    """Check a dataset for uniform dimensions, consecutive per-episode time and finite values.

    Returns the transitions as a list when valid. Errors carry the index of
    the first offending record.
    """
    transitions = list(transitions)
    if not transitions:
        raise ValueError("empty trajectory")
    first = transitions[0]
    s_dim = first.s.size
    a_dim = None if first.a is None else first.a.size
    last_t: dict[int, int] = {}
    for i, tr in enumerate(transitions):
        for name, vec in (("s", tr.s), ("s_next", tr.s_next), ("a", tr.a)):
            if vec is not None and not np.all(np.isfinite(vec)):
                raise NonFiniteValue(f"{name} has non-finite entries", i)
        if tr.r is not None and not math.isfinite(tr.r):
            raise NonFiniteValue("reward is not finite", i)
        if tr.s.size != s_dim or tr.s_next.size != s_dim:
            raise DimMismatch(f"state dim {tr.s.size} differs from {s_dim}", i)
        if tr.a is not None and a_dim is not None and tr.a.size != a_dim:
            raise DimMismatch(f"action dim {tr.a.size} differs from {a_dim}", i)
        prev = last_t.get(tr.episode)
        expected = 0 if prev is None else prev + 1
        if prev is not None and tr.t != expected:
            raise NonConsecutiveTime(f"episode {tr.episode} jumps from t={prev} to t={tr.t}", i)
        last_t[tr.episode] = tr.t
    return transitions


def split_episodes(transitions: Iterable[Transition]) -> dict[int, list[Transition]]:
    """Group transitions by episode id, each group sorted by time."""
    episodes: dict[int, list[Transition]] = {}
    for tr in transitions:
        episodes.setdefault(tr.episode, []).append(tr)
    for ep in episodes.values():
        ep.sort(key=lambda tr: tr.t)
    return dict(sorted(episodes.items()))


def normalized_score(score: float, reference: float) -> float:
    """100 * score / reference."""
    if reference == 0:
        raise ZeroReference("reference score is zero")
    return 100.0 * score / reference


@dataclass
class SeededRng:
    """Deterministic random stream backed by numpy's PCG64 bit generator.

    PCG64 produces the same stream on every platform for a given seed. Child
    streams are derived as ``seed XOR stream_id`` so parallel consumers never
    share state.
    """

    seed: int
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed) & _MASK64
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.seed ^ (int(stream_id) & _MASK64))

    def __getattr__(self, name):
        # delegate sampling methods (normal, uniform, gamma, ...) to the generator
        if name == "generator":
            raise AttributeError(name)
        return getattr(self.generator, name)


def ensure_rng(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    if rng is None:
        return SeededRng(0)
    return SeededRng(int(rng))
