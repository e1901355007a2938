"""Built-in denumerable chains used as references throughout the test-suite."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Optional

from .chain import Distribution, LevelFn, MarkovModel, TargetSpec
from .errors import ModelError, NotFoundError


class BuiltinState(NamedTuple):
    tag: str
    index: int

    def __str__(self) -> str:
        return f"{self.tag}{self.index}"


class WiredModel(NamedTuple):
    model: MarkovModel
    spec: TargetSpec
    level: LevelFn


_F = Fraction


class Fig1Chain(MarkovModel):
    """Two-row layered chain ``p_n`` / ``q_n`` with target ``q_0``.

    ``p_n`` moves to ``p_{n+1}`` (0.3), ``q_{n+1}`` (0.4) or ``p_{n-1}`` (0.3);
    ``q_n`` moves to ``p_{n+1}`` (0.4), ``q_{n+1}`` (0.4) or ``q_{n-1}`` (0.2).
    ``p_0`` cannot reach ``q_0`` and is the avoid set.  The reachability
    probability of ``q_0`` from ``p_1`` is about 0.0258657.

    With ``max_level`` set, states on that level become absorbing dead ends
    (declared avoid), which yields a finite chain for linear-algebra checks.
    """

    P_ROW = ((_F(3, 10), "p", +1), (_F(4, 10), "q", +1), (_F(3, 10), "p", -1))
    Q_ROW = ((_F(4, 10), "p", +1), (_F(4, 10), "q", +1), (_F(2, 10), "q", -1))

    def __init__(self, initial: BuiltinState = BuiltinState("p", 1), max_level: Optional[int] = None):
        self.initial_state = BuiltinState(*initial)
        self.max_level = max_level
        self._check(self.initial_state)

    def _check(self, s) -> None:
        if not (isinstance(s, tuple) and len(s) == 2 and s[0] in ("p", "q")
                and isinstance(s[1], int) and s[1] >= 0):
            raise ModelError(f"not a fig1 state: {s!r}")
        if self.max_level is not None and s[1] > self.max_level:
            raise ModelError(f"state {s!r} above truncation level {self.max_level}")

    def successors(self, s) -> Distribution:
        return self._successors(BuiltinState(*s) if isinstance(s, tuple) else s)

    @lru_cache(maxsize=None)
    def _successors(self, s) -> Distribution:
        self._check(s)
        tag, n = s
        if n == 0 or (self.max_level is not None and n == self.max_level):
            return Distribution([(s, _F(1))])
        row = self.P_ROW if tag == "p" else self.Q_ROW
        return Distribution([(BuiltinState(t, n + d), pr) for pr, t, d in row])

    @staticmethod
    def level(s) -> int:
        return s[1]

    def is_avoid(self, s) -> bool:
        if s == ("p", 0):
            return True
        return self.max_level is not None and s[1] == self.max_level

    @staticmethod
    def is_target(s) -> bool:
        return s == ("q", 0)

    def spec(self) -> TargetSpec:
        return TargetSpec(is_target=self.is_target, is_avoid=self.is_avoid)

    def to_ppda(self):
        """Equivalent pPDA (controls p/q, one stack letter per level)."""
        if self.max_level is not None:
            raise ModelError("truncated fig1 chain has no pPDA encoding")
        from .ppda import Configuration, load_bundled
        model = load_bundled("fig1")
        tag, n = self.initial_state
        return model.with_initial(Configuration(tag, "X" * n))

    def __hash__(self):
        return hash((type(self), self.initial_state, self.max_level))

    def __eq__(self, other):
        return (type(other) is type(self) and other.initial_state == self.initial_state
                and other.max_level == self.max_level)


class IrrationalChain(MarkovModel):
    """Chain on the naturals where ``n`` jumps to 0 w.p. ``1/(n(n+1))``.

    State 0 is the absorbing target; otherwise ``n`` moves to ``n+1``.  The
    probability of ever reaching 0 from 1 is ``1 + cos(sqrt(5)*pi/2)/pi``,
    an irrational number, and the chain is not decisive.
    """

    def __init__(self, initial: int = 1):
        self.initial_state = BuiltinState("n", initial)

    def successors(self, s) -> Distribution:
        if not (isinstance(s, tuple) and len(s) == 2 and s[0] == "n" and isinstance(s[1], int)
                and s[1] >= 0):
            raise ModelError(f"not a state of the irrational chain: {s!r}")
        n = s[1]
        if n == 0:
            return Distribution([(BuiltinState("n", 0), _F(1))])
        down = _F(1, n * (n + 1))
        return Distribution([(BuiltinState("n", 0), down), (BuiltinState("n", n + 1), 1 - down)])

    @staticmethod
    def level(s) -> int:
        return s[1]

    def spec(self) -> TargetSpec:
        return TargetSpec(is_target=lambda s: s[1] == 0, is_avoid=lambda s: False)


BUILTIN_NAMES = ("fig1", "appendix-irrational")


def builtin_model(name: str) -> WiredModel:
    """Fully wired built-in model: ``(model, spec, level)``."""
    if name == "fig1":
        m = Fig1Chain()
        return WiredModel(m, m.spec(), Fig1Chain.level)
    if name == "appendix-irrational":
        m = IrrationalChain()
        return WiredModel(m, m.spec(), IrrationalChain.level)
    raise NotFoundError(f"unknown built-in model {name!r} (known: {', '.join(BUILTIN_NAMES)})")
