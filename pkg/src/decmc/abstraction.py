"""Random-walk abstraction and the biased chain it induces.

Above level ``n0`` the abstraction is a birth-death walk that goes up with
probability ``p``; its probability of ever falling back to ``[0, n0]`` from
level ``m`` is ``mu(m) = kappa**max(0, m - n0)`` with ``kappa = (1-p)/p``.
The biased chain reweights each edge by the ratio of ``mu`` values and
sends the missing mass to an absorbing sink.  On every path that reaches
the target the likelihood ratio then collapses to ``mu(level(s0))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from typing import Optional, Union

from .chain import Distribution, LevelFn, MarkovModel, StateId, TargetSpec
from .errors import AbstractionError, InternalError, SpecificationError
from .ppda import as_fraction

SINK_TOL = 1e-12
MONOTONY_TOL = 1e-9


class _Sink:
    """The absorbing sink state of every biased chain."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "s-"

    def __reduce__(self):
        return (_Sink, ())

    def __lt__(self, other) -> bool:
        return False

    def __gt__(self, other) -> bool:
        return other is not self


SINK = _Sink()


@dataclass(frozen=True)
class RandomWalkAbs:
    p: Fraction
    n0: int

    def __init__(self, p, n0: int = 0):
        pf = as_fraction(p)
        if not Fraction(1, 2) < pf < 1:
            raise SpecificationError(f"random-walk parameter p must lie in (1/2, 1), got {p}")
        if n0 < 0:
            raise SpecificationError("n0 must be a natural number")
        object.__setattr__(self, "p", pf)
        object.__setattr__(self, "n0", int(n0))

    @property
    def kappa(self) -> Fraction:
        return (1 - self.p) / self.p

    @property
    def kappa_float(self) -> float:
        return float(self.kappa)

    def excess(self, m: int) -> int:
        return max(0, m - self.n0)

    def mu(self, m: int) -> Fraction:
        return self.kappa ** self.excess(m)

    def mu_float(self, m: int) -> float:
        """``mu(m)`` as a float; 0.0 only if it truly underflows binary64."""
        d = self.excess(m)
        if d < 700:
            return float(self.kappa ** d)
        return math.exp(d * math.log(self.kappa_float))

    def log_mu(self, m: int) -> float:
        return self.excess(m) * math.log(self.kappa_float)

    def ratio(self, m_from: int, m_to: int, exact: bool = False) -> Union[Fraction, float]:
        """``mu(m_to) / mu(m_from)`` without forming either power."""
        e = self.excess(m_to) - self.excess(m_from)
        r = self.kappa ** e
        return r if exact else float(r)


def rw_reach_prob(abs_: RandomWalkAbs, m: int, exact: bool = False) -> Union[Fraction, float]:
    """Probability that the abstract walk started at ``m`` ever enters ``[0, n0]``."""
    return abs_.mu(m) if exact else abs_.mu_float(m)


class BiasedChain(MarkovModel):
    """Lazily built biased chain over ``base``.

    Edges into declared avoid states are dropped, the rest are scaled by
    ``mu(level(s')) / mu(level(s))`` and the shortfall ``1 - h(s)`` goes to
    :data:`SINK`.  With ``exact=True`` (the default when the base model is
    rational) all probabilities are fractions.
    """

    def __init__(self, base: MarkovModel, spec: TargetSpec, level: LevelFn, abs_: RandomWalkAbs,
                 exact: Optional[bool] = None):
        self.base = base
        self.spec = spec
        self.level = level
        self.abs = abs_
        self.exact = base.is_rational if exact is None else exact
        self.initial_state = base.initial_state
        if spec.is_avoid(self.initial_state):
            raise SpecificationError("initial state is in the avoid set")
        self.float_moves = lru_cache(maxsize=1 << 16)(self._float_moves)
        self._ratios: dict = {}

    def _float_ratio(self, lam: int, lt: int) -> float:
        e = self.abs.excess(lt) - self.abs.excess(lam)
        r = self._ratios.get(e)
        if r is None:
            r = self._ratios[e] = float(self.abs.kappa ** e)
        return r

    def _float_moves(self, s):
        """``((s', P, P'), ...)`` as floats plus the sink probability."""
        kept, h = self._moves(s)
        return tuple((t, float(p), float(q)) for t, p, q in kept), max(0.0, float(1 - h))

    def float_successors(self, s) -> list:
        if s is SINK or self.spec.is_target(s):
            return [(s, 1.0)]
        moves, sink = self.float_moves(s)
        out = [(t, q) for t, _, q in moves]
        if sink >= SINK_TOL or not out:
            out.append((SINK, sink))
        return out

    @property
    def is_rational(self) -> bool:
        return self.exact

    def target_spec(self) -> TargetSpec:
        """Target spec for the biased chain: the sink joins the avoid set."""
        base = self.spec
        return TargetSpec(is_target=lambda s: s is not SINK and base.is_target(s),
                          is_avoid=lambda s: s is SINK or base.is_avoid(s))

    def _moves(self, s):
        """Kept successors ``[(s', P(s,s'), P'(s,s'))]`` and ``h(s)``."""
        if s is SINK:
            raise SpecificationError("the sink has no decreasing ratio")
        if self.spec.is_avoid(s):
            raise SpecificationError(f"bias is undefined on avoid state {s!r}")
        lam = self.level(s)
        kept = []
        h = Fraction(0) if self.exact else 0.0
        row = self.base.successors(s) if self.exact else self.base.float_successors(s)
        for t, pr in row:
            if self.spec.is_avoid(t):
                continue
            lt = self.level(t)
            if lam - lt > 1:
                raise AbstractionError(f"edge {s!r} -> {t!r} drops {lam - lt} levels", witness=s)
            if self.exact:
                q = Fraction(pr) * self.abs.ratio(lam, lt, exact=True)
            else:
                q = pr * self._float_ratio(lam, lt)
            kept.append((t, pr, q))
            h += q
        limit = 1 if self.exact else 1 + MONOTONY_TOL
        if h > limit:
            raise AbstractionError(
                f"decreasing ratio {float(h):.12g} > 1 at {s!r}: the model is not "
                f"({self.abs.p}, {self.abs.n0})-divergent there", witness=s)
        return kept, h

    def successors(self, s) -> Distribution:
        if s is SINK:
            return Distribution([(SINK, Fraction(1))])
        if self.spec.is_target(s):
            return Distribution([(s, Fraction(1))])
        kept, h = self._moves(s)
        entries = [(t, q) for t, _, q in kept]
        rest = 1 - h
        # exact rows keep even tiny sink mass so they still sum to exactly 1
        if rest > 0 and (self.exact or rest >= SINK_TOL):
            entries.append((SINK, rest))
        if not entries:
            raise InternalError(f"empty biased row at {s!r}")
        return Distribution(entries, tol=MONOTONY_TOL)


def decreasing_ratio(chain: BiasedChain, s: StateId) -> Union[Fraction, float]:
    """``h(s)``: the mu-weighted share of one-step mass that stays out of the avoid set."""
    return chain._moves(s)[1]


def bias_successors(chain: BiasedChain, s: StateId) -> Distribution:
    return chain.successors(s)


def likelihood_step(gamma, base_p, biased_p, next_is_sink: bool):
    """Update the running likelihood ``Pr(path) / Pr'(path)`` by one edge."""
    if next_is_sink:
        return 0.0 if isinstance(gamma, float) else Fraction(0)
    if not biased_p > 0:
        raise InternalError("biased edge probability is zero on a base edge")
    return gamma * base_p / biased_p


def likelihood_reward(chain: BiasedChain):
    """Monoidal reward computing the likelihood ``gamma`` of a biased path.

    The factor of an edge depends only on the two levels, so merged
    frontier entries always carry the same value.
    """
    from .chain import product_reward

    abs_, level = chain.abs, chain.level
    s0 = chain.initial_state

    ratio = chain._float_ratio

    def edge(a, b):
        if b is SINK:
            return 0.0
        return ratio(level(b), level(a))

    return product_reward(edge, bound=max(abs_.mu_float(level(s0)), 5e-324))
