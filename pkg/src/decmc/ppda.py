"""Probabilistic pushdown automata with polynomial rule weights.

Model files are line oriented::

    ppda
    states: q
    alphabet: A B C
    initial: q A
    rule: q A -> q C [1]
    rule: q A -> q BB [n]
    rule: q B -> q eps [5]
    rule: q B -> q AA [n]
    rule: q C -> q C [1]
    target: empty_stack
    avoid: contains C

Stack letters are single characters.  A stack is written bottom first, so
the top is the last character; a rule ``(q, a) -> (q', u)`` pops ``a`` and
appends ``u`` as written.  The weight variable ``n`` is the stack height
*before* the rewrite.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from itertools import product
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

from .chain import Distribution, MarkovModel, TargetSpec
from .errors import ModelError, ParseError, SpecificationError

log = logging.getLogger(__name__)

EPS = "eps"


def as_fraction(x) -> Fraction:
    """Exact value of a probability parameter.

    Floats are read through their shortest decimal repr, so ``0.6`` means
    3/5 rather than the nearest binary64.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in the stack height with nonnegative integer coefficients."""

    coeffs: tuple

    def __post_init__(self):
        cs = tuple(int(c) for c in self.coeffs)
        if any(c < 0 for c in cs):
            raise ValueError("coefficients must be nonnegative")
        while len(cs) > 1 and cs[-1] == 0:
            cs = cs[:-1]
        object.__setattr__(self, "coeffs", cs or (0,))

    def __call__(self, n: int) -> int:
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * n + c
        return acc

    @property
    def is_zero(self) -> bool:
        return self.coeffs == (0,)

    @property
    def degree(self) -> int:
        return -1 if self.is_zero else len(self.coeffs) - 1

    @property
    def leading(self) -> int:
        return self.coeffs[-1]

    def __add__(self, other: "Polynomial") -> "Polynomial":
        k = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (k - len(self.coeffs))
        b = other.coeffs + (0,) * (k - len(other.coeffs))
        return Polynomial(tuple(x + y for x, y in zip(a, b)))

    @classmethod
    def parse(cls, text: str) -> "Polynomial":
        terms = [t.strip() for t in text.split("+")]
        coeffs: dict[int, int] = {}
        for t in terms:
            m = _TERM.fullmatch(t)
            if not m:
                raise ValueError(f"bad polynomial term {t!r}")
            c, var, k = m.group("c"), m.group("var"), m.group("k")
            if var is None:
                if c is None or k is not None:
                    raise ValueError(f"bad polynomial term {t!r}")
                deg, coef = 0, int(c)
            else:
                deg = int(k) if k is not None else 1
                coef = int(c) if c is not None else 1
            coeffs[deg] = coeffs.get(deg, 0) + coef
        top = max(coeffs)
        return cls(tuple(coeffs.get(i, 0) for i in range(top + 1)))

    def __str__(self) -> str:
        parts = []
        for deg, c in enumerate(self.coeffs):
            if c == 0:
                continue
            if deg == 0:
                parts.append(str(c))
            else:
                var = "n" if deg == 1 else f"n^{deg}"
                parts.append(var if c == 1 else f"{c}*{var}")
        return "+".join(parts) if parts else "0"


_TERM = re.compile(r"\s*(?:(?P<c>\d+)\s*(?:\*\s*)?)?(?:(?P<var>n)\s*(?:\^\s*(?P<k>\d+))?)?\s*")


@dataclass(frozen=True)
class Rule:
    from_state: str
    read: str
    to_state: str
    push: str
    weight: Polynomial

    @property
    def delta(self) -> int:
        """Change of stack height caused by the rule."""
        return len(self.push) - 1

    def __str__(self) -> str:
        word = self.push or EPS
        return f"rule: {self.from_state} {self.read} -> {self.to_state} {word} [{self.weight}]"


class Configuration(NamedTuple):
    control: str
    stack: str

    @property
    def level(self) -> int:
        return len(self.stack)

    def __str__(self) -> str:
        return f"({self.control}, {self.stack or EPS})"


def level(c: Configuration) -> int:
    return len(c.stack)


@dataclass(frozen=True)
class Avoid:
    """One avoid descriptor: ``contains X``, ``absent X`` or ``empty_stack q...``."""

    kind: str
    letter: Optional[str] = None
    controls: Optional[frozenset] = None

    def matches(self, c: Configuration) -> bool:
        if self.kind == "contains":
            return self.letter in c.stack
        if self.kind == "absent":
            return bool(c.stack) and self.letter not in c.stack
        if self.kind == "empty_stack":
            return not c.stack and (self.controls is None or c.control in self.controls)
        raise SpecificationError(f"unsupported avoid descriptor {self.kind!r}")

    def __str__(self) -> str:
        if self.kind == "empty_stack":
            return "empty_stack" + ("" if self.controls is None else " " + " ".join(sorted(self.controls)))
        return f"{self.kind} {self.letter}"


@dataclass(frozen=True)
class Target:
    kind: str = "empty_stack"
    controls: Optional[frozenset] = None

    def matches(self, c: Configuration) -> bool:
        if self.kind != "empty_stack":
            raise SpecificationError(f"unsupported target descriptor {self.kind!r}")
        return not c.stack and (self.controls is None or c.control in self.controls)

    def __str__(self) -> str:
        return "empty_stack" + ("" if self.controls is None else " " + " ".join(sorted(self.controls)))


class PpdaModel(MarkovModel):
    """Immutable pPDA; its configurations form a layered Markov chain."""

    def __init__(self, states: Sequence[str], alphabet: Sequence[str], rules: Sequence[Rule],
                 initial: Configuration, target: Target = Target(), avoid: Sequence[Avoid] = (),
                 name: str = "ppda"):
        self.states = tuple(states)
        self.alphabet = tuple(alphabet)
        self.rules = tuple(rules)
        self.initial_state = Configuration(*initial)
        self.target = target
        self.avoid = tuple(avoid)
        self.name = name
        by_class: dict = {}
        for r in self.rules:
            by_class.setdefault((r.from_state, r.read), []).append(r)
        self.rules_by_class = {k: tuple(v) for k, v in by_class.items()}
        self._float_cache: dict = {}

    def with_initial(self, c: Configuration) -> "PpdaModel":
        return PpdaModel(self.states, self.alphabet, self.rules, c, self.target, self.avoid, self.name)

    # -- semantics -----------------------------------------------------

    def is_target(self, c: Configuration) -> bool:
        return self.target.matches(c)

    def is_avoid(self, c: Configuration) -> bool:
        return any(a.matches(c) for a in self.avoid)

    def _check(self, c) -> None:
        if not (isinstance(c, tuple) and len(c) == 2 and c[0] in self.states
                and isinstance(c[1], str) and all(x in self.alphabet for x in c[1])):
            raise ModelError(f"not a configuration of {self.name}: {c!r}")

    def is_stuck(self, c: Configuration) -> bool:
        return bool(c.stack) and (c.control, c.stack[-1]) not in self.rules_by_class

    def successors(self, c) -> Distribution:
        return step_distribution(self, c)

    def float_successors(self, c) -> list:
        if not c.stack or self.is_target(c):
            return [(c, 1.0)]
        key = (c.control, c.stack[-1], len(c.stack))
        moves = self._float_cache.get(key)
        if moves is None:
            moves = [(to, push, float(p)) for (to, push), p in _class_step(self, *key)]
            self._float_cache[key] = moves
        base = c.stack[:-1]
        return [(Configuration(to, base + push), p) for to, push, p in moves]

    def __repr__(self) -> str:
        return f"PpdaModel({self.name!r}, {len(self.rules)} rules)"


def _class_step(model: PpdaModel, control: str, letter: str, n: int):
    """Exact merged moves ``[((to, push), prob)]`` for one (control, letter, height)."""
    rules = model.rules_by_class.get((control, letter), ())
    if not rules:
        return []
    ws = [r.weight(n) for r in rules]
    total = sum(ws)
    merged: dict = {}
    for r, w in zip(rules, ws):
        key = (r.to_state, r.push)
        merged[key] = merged.get(key, 0) + w
    return [(k, Fraction(w, total)) for k, w in merged.items()]


def step_distribution(model: PpdaModel, c: Configuration) -> Distribution:
    """One rewrite step from ``c`` as an exact distribution.

    Empty-stack and target configurations are absorbing.  A configuration
    with no applicable rule is also made absorbing and logged.
    """
    model._check(c)
    c = Configuration(*c)
    if not c.stack or model.is_target(c):
        return Distribution([(c, Fraction(1))])
    moves = _class_step(model, c.control, c.stack[-1], len(c.stack))
    if not moves:
        log.debug("no rule applies to %s; treating it as absorbing", c)
        return Distribution([(c, Fraction(1))])
    base = c.stack[:-1]
    return Distribution([(Configuration(to, base + push), p) for (to, push), p in moves])


def target_avoid_predicates(model: PpdaModel) -> TargetSpec:
    for a in model.avoid:
        if a.kind not in ("contains", "absent", "empty_stack"):
            raise SpecificationError(f"unsupported avoid descriptor {a.kind!r}")
    if model.target.kind != "empty_stack":
        raise SpecificationError(f"unsupported target descriptor {model.target.kind!r}")
    return TargetSpec(is_target=model.is_target, is_avoid=model.is_avoid)


# -- parsing -----------------------------------------------------------

_RULE = re.compile(r"(\S+)\s+(\S+)\s*->\s*(\S+)\s+(\S+)\s*\[(.*)\]\s*")


def parse_model(text: str, name: str = "ppda") -> PpdaModel:
    states = alphabet = initial = None
    target: Optional[Target] = None
    avoid: list[Avoid] = []
    saw_none = False
    rules: list[tuple[int, Rule]] = []
    header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        col = raw.index(line[0]) + 1
        if not header:
            if line != "ppda":
                raise ParseError("expected header 'ppda'", lineno, col)
            header = True
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ParseError(f"expected 'key: value', got {line!r}", lineno, col)
        key, rest = key.strip(), rest.strip()
        if key == "states":
            states = rest.split()
            if not states:
                raise ParseError("no control states declared", lineno, col)
        elif key == "alphabet":
            alphabet = rest.split()
            bad = [a for a in alphabet if len(a) != 1]
            if bad:
                raise ParseError(f"stack letters must be single characters: {bad}", lineno, col)
        elif key == "initial":
            parts = rest.split()
            if len(parts) != 2:
                raise ParseError("initial needs '<state> <word>'", lineno, col)
            initial = (parts[0], "" if parts[1] == EPS else parts[1], lineno)
        elif key == "rule":
            m = _RULE.fullmatch(rest)
            if not m:
                raise ParseError("rule needs '<state> <letter> -> <state> <word|eps> [<poly>]'",
                                 lineno, col + len(key) + 1)
            q, a, q2, word, poly = m.groups()
            try:
                weight = Polynomial.parse(poly)
            except (ValueError, KeyError) as exc:
                raise ParseError(str(exc), lineno, raw.index("[") + 2) from None
            rules.append((lineno, Rule(q, a, q2, "" if word == EPS else word, weight)))
        elif key == "target":
            parts = rest.split()
            if not parts or parts[0] != "empty_stack":
                raise ParseError(f"unsupported target {rest!r}", lineno, col, kind="unsupported-target")
            target = Target("empty_stack", frozenset(parts[1:]) if parts[1:] else None)
        elif key == "avoid":
            parts = rest.split()
            if parts == ["none"]:
                saw_none = True
            elif len(parts) == 2 and parts[0] in ("contains", "absent"):
                avoid.append(Avoid(parts[0], parts[1]))
            elif parts and parts[0] == "empty_stack":
                avoid.append(Avoid("empty_stack", controls=frozenset(parts[1:]) if parts[1:] else None))
            else:
                raise ParseError(f"unsupported avoid descriptor {rest!r}", lineno, col,
                                 kind="unsupported-avoid")
        else:
            raise ParseError(f"unknown key {key!r}", lineno, col)
    if not header:
        raise ParseError("empty model (missing 'ppda' header)", 1, 1)
    for what, val in (("states", states), ("alphabet", alphabet), ("initial", initial),
                      ("target", target)):
        if val is None:
            raise ParseError(f"missing '{what}:' declaration", kind="missing-" + what)
    if saw_none and avoid:
        raise ParseError("'avoid: none' combined with other avoid descriptors", kind="conflicting-avoid")
    sset, aset = set(states), set(alphabet)
    for lineno, r in rules:
        for q in (r.from_state, r.to_state):
            if q not in sset:
                raise ParseError(f"unknown state {q!r}", lineno, kind="unknown-state")
        for x in r.read + r.push:
            if x not in aset:
                raise ParseError(f"unknown letter {x!r}", lineno, kind="unknown-letter")
        if len(r.read) != 1:
            raise ParseError(f"rule must read exactly one letter, got {r.read!r}", lineno,
                             kind="unknown-letter")
        if r.weight.is_zero:
            raise ParseError("rule weight is the zero polynomial", lineno, kind="zero-weight")
    for ctl in (target.controls or ()):
        if ctl not in sset:
            raise ParseError(f"unknown state {ctl!r} in target", kind="unknown-state")
    for a in avoid:
        if a.letter is not None and a.letter not in aset:
            raise ParseError(f"unknown letter {a.letter!r} in avoid", kind="unknown-letter")
        for ctl in (a.controls or ()):
            if ctl not in sset:
                raise ParseError(f"unknown state {ctl!r} in avoid", kind="unknown-state")
    q0, w0, ln = initial
    if q0 not in sset:
        raise ParseError(f"unknown initial state {q0!r}", ln, kind="unknown-state")
    for x in w0:
        if x not in aset:
            raise ParseError(f"unknown letter {x!r} in initial stack", ln, kind="unknown-letter")
    model = PpdaModel(states, alphabet, [r for _, r in rules], Configuration(q0, w0), target,
                      avoid, name)
    c0 = model.initial_state
    if c0.stack and not model.is_target(c0) and not model.is_avoid(c0) and model.is_stuck(c0):
        raise ParseError(f"no rule reads the initial top letter {c0.stack[-1]!r} in state {q0!r}",
                         ln, kind="unreachable-initial")
    return model


def render(model: PpdaModel) -> str:
    lines = ["ppda", "states: " + " ".join(model.states), "alphabet: " + " ".join(model.alphabet),
             f"initial: {model.initial_state.control} {model.initial_state.stack or EPS}"]
    lines += [str(r) for r in model.rules]
    lines.append(f"target: {model.target}")
    if model.avoid:
        lines += [f"avoid: {a}" for a in model.avoid]
    else:
        lines.append("avoid: none")
    return "\n".join(lines) + "\n"


def load_model(path) -> PpdaModel:
    p = Path(path)
    return parse_model(p.read_text(encoding="utf-8"), name=p.stem)


BUNDLED = ("pta", "pta7", "fig1")


@lru_cache(maxsize=None)
def load_bundled(name: str) -> PpdaModel:
    """Bundled model files: ``pta`` and ``pta7`` (the two pPDA case studies), ``fig1``."""
    if name not in BUNDLED:
        raise KeyError(name)
    text = resources.files("decmc.data").joinpath(f"{name}.ppda").read_text(encoding="utf-8")
    return parse_model(text, name=name)


# -- divergence --------------------------------------------------------

@dataclass
class ClassSplit:
    """Weights of one (control, letter) class split by height change."""

    control: str
    letter: str
    up: Polynomial
    down: Polynomial
    flat: Polynomial

    @property
    def moving(self) -> Polynomial:
        return self.up + self.down


def class_splits(model: PpdaModel) -> list[ClassSplit]:
    out = []
    for (q, a), rules in sorted(model.rules_by_class.items()):
        up = down = flat = Polynomial((0,))
        for r in rules:
            if r.delta >= 1:
                up = up + r.weight
            elif r.delta == -1:
                down = down + r.weight
            else:
                flat = flat + r.weight
        out.append(ClassSplit(q, a, up, down, flat))
    return out


@dataclass
class DivergenceReport:
    p_plus: Fraction
    n0: int
    verified_up_to: int
    limit_ok: bool
    witnesses: list = field(default_factory=list)
    complete: bool = True
    inf_p_plus_positive: bool = True
    limits: dict = field(default_factory=dict)

    @property
    def divergent(self) -> bool:
        return self.limit_ok and not self.witnesses

    def to_dict(self) -> dict:
        return {
            "p_plus": str(self.p_plus), "n0": self.n0, "divergent": self.divergent,
            "verified_up_to": self.verified_up_to, "limit_ok": self.limit_ok,
            "complete": self.complete, "inf_p_plus_positive": self.inf_p_plus_positive,
            "witnesses": [{"state": q, "letter": a, "n": n, "ratio": str(r)}
                          for q, a, n, r in self.witnesses],
            "limits": {f"{q} {a}": str(v) for (q, a), v in self.limits.items()},
        }


def _root_bound(coeffs: list[int]) -> int:
    """Integer beyond which a nonzero polynomial has the sign of its leading coefficient."""
    while coeffs and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    if len(coeffs) <= 1:
        return 0
    lead = abs(coeffs[-1])
    m = max(abs(c) for c in coeffs[:-1])
    return 1 + -(-m // lead)


def _limit_ratio(up: Polynomial, moving: Polynomial) -> Fraction:
    if up.degree < moving.degree:
        return Fraction(0)
    return Fraction(up.leading, moving.leading)


def check_divergence(model: PpdaModel, p_plus, n0: int, n_check: int = 100_000,
                     max_witnesses: int = 8) -> DivergenceReport:
    """Semi-decide (p+, N0)-divergence of the pPDA's layered chain.

    Every class is checked at each height from ``n0`` up to the point where
    the sign of ``(1-p)W+(n) - p W-(n)`` is settled by its leading
    coefficient (capped at ``n_check``).  Height ``n0`` itself is included,
    one level more than strictly needed; heights where no rule changes the
    level are skipped.
    """
    p = as_fraction(p_plus)
    if not Fraction(1, 2) < p <= 1:
        raise SpecificationError(f"p+ must lie in (1/2, 1], got {p}")
    a, b = p.numerator, p.denominator
    start = n0
    report = DivergenceReport(p_plus=p, n0=n0, verified_up_to=max(start - 1, 0), limit_ok=True)
    for cs in class_splits(model):
        moving = cs.moving
        total = moving + cs.flat
        if not total.is_zero and model.is_avoid(Configuration(cs.control, cs.letter)) is False:
            if cs.up.is_zero or cs.up.degree < total.degree:
                report.inf_p_plus_positive = False
        if moving.is_zero:
            continue
        lim = _limit_ratio(cs.up, moving)
        report.limits[(cs.control, cs.letter)] = lim
        if lim < p:
            report.limit_ok = False
        k = max(len(cs.up.coeffs), len(cs.down.coeffs))
        up = cs.up.coeffs + (0,) * (k - len(cs.up.coeffs))
        dn = cs.down.coeffs + (0,) * (k - len(cs.down.coeffs))
        g = [(b - a) * u - a * d for u, d in zip(up, dn)]
        settled = max(start, _root_bound(g) + 1)
        stop = min(settled, n_check)
        if settled > n_check:
            report.complete = False
        found = 0
        for n in range(start, stop + 1):
            wu, wd = cs.up(n), cs.down(n)
            if wu + wd and b * wu < a * (wu + wd):
                report.witnesses.append((cs.control, cs.letter, n, Fraction(wu, wu + wd)))
                found += 1
                if found >= max_witnesses:
                    break
        report.verified_up_to = max(report.verified_up_to, stop)
    return report


def min_n0_for_p(model: PpdaModel, p, n_max: int = 10_000, n_check: int = 100_000) -> Optional[int]:
    """Smallest N0 <= n_max for which the model is (p, N0)-divergent."""
    for n0 in range(n_max + 1):
        if check_divergence(model, p, n0, n_check=max(n_check, n0 + 1)).divergent:
            return n0
    return None


# -- avoid-set validation ------------------------------------------------

@dataclass
class AvoidDiagnostics:
    witness: Optional[list]
    samples: int
    explored: int
    exhausted_budget: bool = False

    @property
    def refuted(self) -> bool:
        return self.witness is not None


def validate_avoid(model: PpdaModel, depth: int, sample_size: int = 64,
                   state_budget: int = 200_000) -> AvoidDiagnostics:
    """Bounded search for a path from a declared-avoid configuration to the target.

    A witness proves the declaration wrong; finding none proves nothing.
    """
    if not model.avoid:
        return AvoidDiagnostics(None, 0, 0)
    samples: list[Configuration] = []
    seen = {model.initial_state}
    frontier = deque([(model.initial_state, 0)])
    while frontier and len(samples) < sample_size and len(seen) < state_budget:
        c, d = frontier.popleft()
        if model.is_avoid(c):
            samples.append(c)
            continue
        if d >= depth or model.is_target(c):
            continue
        for nxt, _ in model.successors(c):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    for q in model.states:
        for k in range(0, 3):
            for word in product(model.alphabet, repeat=k):
                c = Configuration(q, "".join(word))
                if len(samples) < sample_size and c not in samples and model.is_avoid(c):
                    samples.append(c)
    explored = 0
    exhausted = False
    for src in samples:
        parent = {src: None}
        frontier = deque([(src, 0)])
        while frontier:
            c, d = frontier.popleft()
            explored += 1
            if model.is_target(c):
                path = []
                while c is not None:
                    path.append(c)
                    c = parent[c]
                return AvoidDiagnostics(path[::-1], len(samples), explored)
            if d >= depth:
                continue
            if len(parent) >= state_budget:
                exhausted = True
                break
            for nxt, _ in model.successors(c):
                if nxt not in parent:
                    parent[nxt] = c
                    frontier.append((nxt, d + 1))
    return AvoidDiagnostics(None, len(samples), explored, exhausted)
