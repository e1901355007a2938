"""Effective Markov chains: distributions, target specs, rewards and paths.

A model only has to answer one question: given a state, what is its finite
successor distribution.  Everything else (sampling, exploration, biasing)
is built on top of :meth:`MarkovModel.successors`.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Iterator, Optional, Sequence, Union

from .errors import ModelError, PathError, SpecificationError

Prob = Union[Fraction, float]
StateId = Hashable
LevelFn = Callable[[StateId], int]

FLOAT_SUM_TOL = 1e-12


def to_float(p: Prob) -> float:
    """Round a probability to the nearest binary64."""
    return float(p)


class Distribution:
    """Finite successor distribution ``[(state, prob), ...]``.

    Exact (:class:`~fractions.Fraction`) entries must sum to exactly 1;
    float entries to 1 within ``tol``.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[tuple[StateId, Prob]], *, tol: float = FLOAT_SUM_TOL,
                 check: bool = True):
        self.entries = tuple(entries)
        if check:
            self._validate(tol)

    def _validate(self, tol: float) -> None:
        if not self.entries:
            raise ModelError("empty successor distribution")
        seen = set()
        exact = True
        total: Prob = Fraction(0)
        for state, p in self.entries:
            if not p > 0:
                raise ModelError(f"non-positive probability {p!r} for successor {state!r}")
            if state in seen:
                raise ModelError(f"duplicate successor {state!r}")
            seen.add(state)
            if not isinstance(p, (Fraction, int)):
                exact = False
        if exact:
            total = sum((p for _, p in self.entries), Fraction(0))
            if total != 1:
                raise ModelError(f"exact distribution sums to {total}, not 1")
        else:
            total = math.fsum(float(p) for _, p in self.entries)
            if abs(total - 1.0) > tol:
                raise ModelError(f"distribution sums to {total!r}")

    @property
    def is_exact(self) -> bool:
        return all(isinstance(p, Fraction) for _, p in self.entries)

    def prob(self, state: StateId) -> Prob:
        for s, p in self.entries:
            if s == state:
                return p
        return Fraction(0)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def support(self) -> list:
        return [s for s, _ in self.entries]

    def to_float(self) -> list[tuple[StateId, float]]:
        return [(s, float(p)) for s, p in self.entries]

    def __iter__(self) -> Iterator[tuple[StateId, Prob]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if isinstance(other, Distribution):
            return self.as_dict() == other.as_dict()
        return NotImplemented

    def __repr__(self) -> str:
        inner = ", ".join(f"{s}: {p}" for s, p in self.entries)
        return f"Distribution({{{inner}}})"


class MarkovModel(ABC):
    """Effective, possibly infinite, discrete-time Markov chain.

    Subclasses must be safe for concurrent read-only use: any cache they
    keep may only be filled with values that never change afterwards.
    """

    initial_state: StateId

    @abstractmethod
    def successors(self, s: StateId) -> Distribution:
        """Full successor distribution of ``s`` (deterministic)."""

    def float_successors(self, s: StateId) -> list[tuple[StateId, float]]:
        return self.successors(s).to_float()

    @property
    def is_rational(self) -> bool:
        return True


def successors(model: MarkovModel, s: StateId) -> Distribution:
    return model.successors(s)


class Label(enum.Enum):
    TARGET = "target"
    AVOID = "avoid"
    NEITHER = "neither"


@dataclass(frozen=True)
class TargetSpec:
    is_target: Callable[[StateId], bool]
    is_avoid: Callable[[StateId], bool] = field(default=lambda s: False)

    def classify(self, s: StateId) -> Label:
        t = self.is_target(s)
        a = self.is_avoid(s)
        if t and a:
            raise SpecificationError(f"state {s!r} is declared both target and avoid")
        if t:
            return Label.TARGET
        if a:
            return Label.AVOID
        return Label.NEITHER


def classify(spec: TargetSpec, s: StateId) -> Label:
    return spec.classify(s)


def check_absorbing_target(model: MarkovModel, s: StateId) -> None:
    """Raise unless the target state ``s`` is absorbing in ``model``."""
    dist = model.successors(s)
    if len(dist) != 1 or dist.entries[0][0] != s:
        raise SpecificationError(f"target state {s!r} is not absorbing")


@dataclass(frozen=True)
class RewardFn:
    """Path reward ``L`` together with its declared bound ``B``.

    Rewards given as ``start_factor(s0) * prod edge_factor(s, s')`` are
    monoidal, which lets the numeric engine merge paths ending in the same
    state.  ``evaluate`` must agree with the factors when both are given.
    """

    evaluate: Callable[[Sequence[StateId]], float]
    bound: float
    edge_factor: Optional[Callable[[StateId, StateId], float]] = None
    start_factor: Optional[Callable[[StateId], float]] = None
    constant: Optional[float] = None

    def __post_init__(self):
        if not self.bound > 0:
            raise SpecificationError("reward bound must be positive")

    @property
    def monoidal(self) -> bool:
        return self.edge_factor is not None or self.constant is not None

    def checked(self, path: Sequence[StateId]) -> float:
        v = self.evaluate(path)
        if not 0 <= v <= self.bound * (1 + 1e-12):
            raise SpecificationError(f"reward {v!r} outside [0, {self.bound}]")
        return v


def constant_reward(c: float = 1.0) -> RewardFn:
    return RewardFn(evaluate=lambda path: c, bound=c, constant=c)


def product_reward(edge_factor: Callable[[StateId, StateId], float], bound: float,
                   start_factor: Optional[Callable[[StateId], float]] = None) -> RewardFn:
    """Monoidal reward: product of per-edge factors along the path."""
    def evaluate(path):
        v = start_factor(path[0]) if start_factor else 1.0
        for a, b in zip(path, path[1:]):
            v *= edge_factor(a, b)
        return v
    return RewardFn(evaluate=evaluate, bound=bound, edge_factor=edge_factor,
                    start_factor=start_factor)


@dataclass(frozen=True)
class FinitePath:
    """Nonempty state sequence with its probability.

    Rational models carry the exact product in ``prob``; float models carry
    ``log_prob`` instead so long paths do not underflow.
    """

    states: tuple
    prob: Optional[Fraction] = Fraction(1)
    log_prob: Optional[float] = None

    def __post_init__(self):
        if not self.states:
            raise PathError("a path needs at least one state")

    @property
    def first(self):
        return self.states[0]

    @property
    def last(self):
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states) - 1


def make_path(model: MarkovModel, states: Sequence[StateId]) -> FinitePath:
    states = tuple(states)
    if model.is_rational:
        return FinitePath(states, prob=path_probability(model, states))
    logp = 0.0
    for a, b in zip(states, states[1:]):
        p = float(model.successors(a).prob(b))
        if p <= 0:
            raise PathError(f"no edge {a!r} -> {b!r}")
        logp += math.log(p)
    return FinitePath(states, prob=None, log_prob=logp)


def path_probability(model: MarkovModel, path: Union[FinitePath, Sequence[StateId]]) -> Prob:
    """Product of transition probabilities along ``path``."""
    states = path.states if isinstance(path, FinitePath) else tuple(path)
    if not states:
        raise PathError("empty path")
    acc: Prob = Fraction(1)
    for a, b in zip(states, states[1:]):
        p = model.successors(a).prob(b)
        if not p > 0:
            raise PathError(f"no edge {a!r} -> {b!r}")
        acc = acc * p
    return acc
