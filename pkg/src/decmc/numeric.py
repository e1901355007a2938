"""Deterministic certified evaluation by frontier exploration.

Starting from ``(s0, w=1, Lbar=1)`` the engine repeatedly pops a frontier
entry and pushes its probability mass one step forward.  Mass that reaches
the target is added to ``p_succ`` (and ``w * L`` to ``e``), mass that hits
the avoid set or the sink to ``p_fail``, and the rest is merged into the
frontier by state.  Once ``residual = 1 - p_succ - p_fail`` is at most
``eps / (2B)`` the value lies in ``[e, e + residual * B]``.

The three global sums live in :class:`ExactAccumulator` tables.  Frontier
weights are floats; the few ulps lost when a weight is split over its
successors or two weights are merged are computed exactly and parked in a
fourth table (``dust``).  Dust is never resolved, so it stays inside the
residual and the upper bound remains sound, and the conservation identity
``p_succ + p_fail + dust + frontier = 1`` holds with no rounding at all.
"""

from __future__ import annotations

import logging
import math
import time
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from ._accel import ExactAccumulator, UpdatableHeap, exact_residual
from .abstraction import BiasedChain, RandomWalkAbs, likelihood_reward
from .chain import Label, LevelFn, MarkovModel, RewardFn, TargetSpec, check_absorbing_target, constant_reward
from .errors import ConfigurationError, DomainError, SpecificationError

log = logging.getLogger(__name__)

HEAP, FIFO = "heap", "fifo"
POLICIES = (HEAP, FIFO)
DEFAULT_BUDGET = 50_000_000
CHECKPOINT_EVERY = 10_000
CONSERVATION_TOL = 2.0 ** -50
ONE_NUMER = 1 << 511
GUARD_SLACK = 1e-9


@dataclass
class CertifiedInterval:
    lo: float
    hi: float
    p_succ: float
    p_fail: float
    residual: float
    states_expanded: int
    merges: int
    wall_time: float
    certified: bool
    status: str = "ok"
    epsilon: float = 0.0
    bound: float = 1.0
    policy: str = HEAP
    e: float = 0.0
    dust: float = 0.0
    frontier_size: int = 0
    max_frontier: int = 0
    underflow_count: int = 0
    checkpoints: list = field(default_factory=list)

    @property
    def midpoint(self) -> float:
        return (self.lo + self.hi) / 2

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def max_conservation_error(self) -> float:
        return max((c[1] for c in self.checkpoints), default=0.0)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __str__(self) -> str:
        return f"{self.midpoint:.10g} +- {self.half_width:.3g} [{self.lo:.10g}, {self.hi:.10g}]"


def _dyadic(x: float) -> tuple[int, int]:
    n, d = x.as_integer_ratio()
    return n, d.bit_length() - 1


def _dyadic_sum(plus: list, minus: list) -> tuple[int, int]:
    """``sum(plus) - sum(minus)`` exactly, as ``(numer, k)`` meaning ``numer * 2**-k``."""
    p = [_dyadic(x) for x in plus]
    m = [_dyadic(x) for x in minus]
    k = max(kx for _, kx in p + m)
    total = 0
    for n, kx in p:
        total += n << (k - kx)
    for n, kx in m:
        total -= n << (k - kx)
    return total, k


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


class _Engine:
    def __init__(self, model: MarkovModel, spec: TargetSpec, L: RewardFn, epsilon: float,
                 policy: str, budget: Optional[int], timeout: Optional[float],
                 checkpoint_every: int, on_checkpoint: Optional[Callable]):
        if not epsilon > 0:
            raise DomainError("epsilon must be positive")
        if policy not in POLICIES:
            raise ConfigurationError(f"unknown frontier policy {policy!r}")
        if not L.monoidal and policy == HEAP:
            raise ConfigurationError("a non-monoidal reward cannot be merged; use the FIFO policy")
        self.model, self.spec, self.L = model, spec, L
        self.B = float(L.bound)
        self.epsilon = float(epsilon)
        self.policy = policy
        self.budget = budget
        self.timeout = timeout
        self.checkpoint_every = checkpoint_every
        self.on_checkpoint = on_checkpoint
        self.threshold = self.epsilon / (2 * self.B)
        self.succ = ExactAccumulator()
        self.fail = ExactAccumulator()
        self.dust = ExactAccumulator()
        self.e_acc = ExactAccumulator(max(0, math.ceil(math.log2(self.B))) if self.B > 1 else 0)
        self.approx_resolved = 0.0
        self.expanded = 0
        self.merges = 0
        self.max_frontier = 0
        self.checkpoints: list = []
        self._absorbing_checked: set = set()

    # routing -------------------------------------------------------------

    def _target(self, t, c: float, reward: float) -> None:
        if t not in self._absorbing_checked:
            check_absorbing_target(self.model, t)
            self._absorbing_checked.add(t)
        if not 0.0 <= reward <= self.B * (1 + 1e-12):
            raise SpecificationError(f"reward {reward!r} at {t!r} outside [0, {self.B}]")
        self.succ.add(c)
        self.e_acc.add(min(c * reward, math.ldexp(1.0, self.e_acc.scale_exp)))
        self.approx_resolved += c

    def _fail(self, c: float) -> None:
        self.fail.add(c)
        self.approx_resolved += c

    def _split(self, s, w: float) -> list:
        """Successor masses of ``s`` whose sum never exceeds ``w``; the gap goes to dust."""
        row = self.model.float_successors(s)
        masses = [w * p for _, p in row]
        while True:
            rem, k = _dyadic_sum([w], masses)
            if rem >= 0:
                break
            i = max(range(len(masses)), key=masses.__getitem__)
            masses[i] = math.nextafter(masses[i], 0.0)
        if rem:
            self.dust.add_dyadic(rem, k)
        return [(t, c) for (t, _), c in zip(row, masses) if c > 0.0]

    def _merge_weight(self, w0: float, c: float) -> float:
        s, err = _two_sum(w0, c)
        if err < 0:
            s = math.nextafter(s, 0.0)
            self.dust.add_dyadic(*_dyadic_sum([w0, c], [s]))
        elif err > 0:
            self.dust.add(err)
        self.merges += 1
        return s

    # bookkeeping ---------------------------------------------------------

    def residual(self) -> float:
        return exact_residual(self.succ, self.fail)

    def _checkpoint(self, frontier_weights) -> None:
        acc = ExactAccumulator()
        for w in frontier_weights:
            acc.add(w)
        total = self.succ.numerator() + self.fail.numerator() + self.dust.numerator() + acc.numerator()
        err = abs(total - ONE_NUMER) / ONE_NUMER
        resolved = abs(self.succ.numerator() + self.fail.numerator() + acc.numerator() - ONE_NUMER) / ONE_NUMER
        self.checkpoints.append((self.expanded, err, resolved))
        if self.on_checkpoint is not None:
            self.on_checkpoint(self.expanded, err, self.residual())
        if err > CONSERVATION_TOL:
            log.warning("mass conservation off by %.3g after %d expansions", err, self.expanded)

    def _should_stop(self, t_start: float) -> Optional[str]:
        if self.budget is not None and self.expanded >= self.budget:
            return "budget"
        if self.timeout is not None and self.expanded % 256 == 0 and time.perf_counter() - t_start > self.timeout:
            return "timeout"
        return None

    def _guard_met(self) -> bool:
        # The float running sum is off by far less than GUARD_SLACK, so the
        # exact residual is only consulted near the threshold.
        if 1.0 - self.approx_resolved > self.threshold + GUARD_SLACK and self.expanded % 4096:
            return False
        return self.residual() <= self.threshold

    # main loops ----------------------------------------------------------

    def run(self) -> CertifiedInterval:
        t0 = time.perf_counter()
        s0 = self.model.initial_state
        label = self.spec.classify(s0)
        if label is Label.AVOID:
            raise SpecificationError("initial state is in the avoid set")
        L = self.L
        l0 = L.constant if L.constant is not None else (L.start_factor(s0) if L.start_factor else 1.0)
        if label is Label.TARGET:
            reward = L.checked((s0,))
            self._target(s0, 1.0, reward)
            return self._result(t0, "ok", 0, lambda: ())
        if L.monoidal:
            return self._run_merged(t0, s0, l0)
        return self._run_paths(t0, s0)

    def _run_merged(self, t0: float, s0, l0: float) -> CertifiedInterval:
        spec, L = self.spec, self.L
        constant = L.constant
        edge = L.edge_factor
        heap = self.policy == HEAP
        if heap:
            front = UpdatableHeap()
            front.insert(s0, 1.0, l0)
            pop = front.pop_max
            get = front.get
            weights = front.weights
        else:
            front = OrderedDict()
            front[s0] = (1.0, l0)

            def pop():
                s, (w, lb) = front.popitem(last=False)
                return s, w, lb

            get = front.get

            def weights():
                return [w for w, _ in front.values()]

        status = "ok"
        every = self.checkpoint_every
        while len(front):
            if self._guard_met():
                break
            stop = self._should_stop(t0)
            if stop:
                status = stop
                break
            s, w, lb = pop()
            self.expanded += 1
            for t, c in self._split(s, w):
                lt = lb if constant is not None else lb * edge(s, t)
                label = spec.classify(t)
                if label is Label.TARGET:
                    self._target(t, c, lt)
                elif label is Label.AVOID:
                    self._fail(c)
                else:
                    old = get(t)
                    if old is None:
                        if heap:
                            front.insert(t, c, lt)
                        else:
                            front[t] = (c, lt)
                    else:
                        w0, l0 = old
                        nw = self._merge_weight(w0, c)
                        nl = lt if constant is not None else (w0 * l0 + c * lt) / nw
                        if heap:
                            front.update(t, nw, nl)
                        else:
                            front[t] = (nw, nl)
            n = len(front)
            if n > self.max_frontier:
                self.max_frontier = n
            if every and self.expanded % every == 0:
                self._checkpoint(weights())
        return self._result(t0, status, len(front), weights)

    def _run_paths(self, t0: float, s0) -> CertifiedInterval:
        """FIFO exploration without merging for rewards that need the whole path."""
        spec, L = self.spec, self.L
        front = deque([((s0,), 1.0)])
        status = "ok"
        every = self.checkpoint_every
        while front:
            if self._guard_met():
                break
            stop = self._should_stop(t0)
            if stop:
                status = stop
                break
            path, w = front.popleft()
            self.expanded += 1
            for t, c in self._split(path[-1], w):
                label = spec.classify(t)
                if label is Label.TARGET:
                    self._target(t, c, L.checked(path + (t,)))
                elif label is Label.AVOID:
                    self._fail(c)
                else:
                    front.append((path + (t,), c))
            self.max_frontier = max(self.max_frontier, len(front))
            if every and self.expanded % every == 0:
                self._checkpoint([w for _, w in front])
        return self._result(t0, status, len(front), lambda: [w for _, w in front])

    def _result(self, t0: float, status: str, n_front: int, weights) -> CertifiedInterval:
        self._checkpoint(weights())
        residual = self.residual()
        e = self.e_acc.total()
        lo = math.nextafter(e, -math.inf) if e > 0 else 0.0
        hi = math.nextafter(e + residual * self.B, math.inf) if residual > 0 else e
        certified = residual <= self.threshold
        if status == "ok" and not certified:
            status = "exhausted"
        return CertifiedInterval(
            lo=lo, hi=hi, p_succ=self.succ.total(), p_fail=self.fail.total(), residual=residual,
            states_expanded=self.expanded, merges=self.merges, wall_time=time.perf_counter() - t0,
            certified=certified and status == "ok", status=status, epsilon=self.epsilon,
            bound=self.B, policy=self.policy, e=e, dust=self.dust.total(), frontier_size=n_front,
            max_frontier=self.max_frontier,
            underflow_count=self.succ.underflow_count + self.fail.underflow_count + self.e_acc.underflow_count,
            checkpoints=self.checkpoints)


def evaluate_reward(model: MarkovModel, spec: TargetSpec, L: RewardFn, epsilon: float,
                    policy: str = HEAP, budget: Optional[int] = DEFAULT_BUDGET,
                    timeout: Optional[float] = None, checkpoint_every: int = CHECKPOINT_EVERY,
                    on_checkpoint: Optional[Callable] = None) -> CertifiedInterval:
    """Certified interval of width at most ``epsilon`` around ``E[L; reach target]``.

    ``status`` is ``"ok"`` on success, ``"budget"`` or ``"timeout"`` when the
    run was cut short (the interval is then still sound but wider than
    ``epsilon`` and ``certified`` is false).
    """
    eng = _Engine(model, spec, L, epsilon, policy, budget, timeout, checkpoint_every, on_checkpoint)
    return eng.run()


def evaluate(model: MarkovModel, spec: TargetSpec, B: float = 1.0, epsilon: float = 1e-6,
             policy: str = HEAP, **kw) -> CertifiedInterval:
    """Reachability probability (constant reward ``B``) as a certified interval."""
    return evaluate_reward(model, spec, constant_reward(B), epsilon, policy, **kw)


def evaluate_importance(base: MarkovModel, spec: TargetSpec, level: LevelFn, abs_: RandomWalkAbs,
                        epsilon: float, policy: str = HEAP, **kw) -> CertifiedInterval:
    """Evaluate on the biased chain, weighting target mass by its likelihood ratio.

    The reward on every accepted path equals ``mu(level(s0))``, which is
    also the bound ``B``; the interval bounds the base-chain probability.
    """
    chain = base if isinstance(base, BiasedChain) else BiasedChain(base, spec, level, abs_, exact=False)
    return evaluate_reward(chain, chain.target_spec(), likelihood_reward(chain), epsilon, policy, **kw)


__all__ = ["CertifiedInterval", "DEFAULT_BUDGET", "FIFO", "HEAP", "POLICIES", "evaluate",
           "evaluate_importance", "evaluate_reward"]
