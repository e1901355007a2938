"""Statistical model checking with Hoeffding-sized samples.

``estimate`` samples the base chain, ``estimate_importance`` samples a
biased chain and reweights each accepted path by its likelihood.  pPDA
models (and chains that can be encoded as one) with constant rewards run
in the compiled sampler; everything else goes through a generic Python
path sampler.  Either way path ``i`` draws from its own counter-based
stream, so results do not depend on the number of workers.
"""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
import time
from array import array
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import NamedTuple, Optional

from ._accel import BACKEND, ExactAccumulator, sample_ppda
from .abstraction import SINK, BiasedChain, RandomWalkAbs, likelihood_step
from .chain import Label, MarkovModel, RewardFn, TargetSpec, constant_reward
from .errors import AbstractionError, ConfigurationError, SpecificationError
from .ppda import Configuration, PpdaModel
from .ppda import level as ppda_level
from .rng import PathStream, normalize_seed

log = logging.getLogger(__name__)

MAX_SAMPLES = (1 << 63) - 1
DEFAULT_STEP_CAP = 10**7
TIMED_CHUNK = 1 << 12
CHUNK_SECONDS = 0.1


def _dec(x) -> Decimal:
    if isinstance(x, Fraction):
        return Decimal(x.numerator) / Decimal(x.denominator)
    return Decimal(x)


def sample_count(B, epsilon, delta) -> int:
    """``ceil(8 B^2 / eps^2 * ln(2 / delta))``, evaluated with 50 significant digits."""
    if not B > 0 or not epsilon > 0 or not 0 < delta < 1:
        raise ConfigurationError("need B > 0, epsilon > 0 and 0 < delta < 1")
    with localcontext() as ctx:
        ctx.prec = 50
        b, e, d = _dec(B), _dec(epsilon), _dec(delta)
        n = (8 * b * b / (e * e)) * (Decimal(2) / d).ln()
        count = int(n.to_integral_value(rounding="ROUND_CEILING"))
    if count > MAX_SAMPLES:
        raise ConfigurationError(f"required sample count {count} overflows a 64-bit counter")
    return max(count, 1)


@dataclass
class SmcConfig:
    epsilon: float
    delta: float = 0.01
    seed: int = 0
    step_cap: Optional[int] = DEFAULT_STEP_CAP
    workers: int = 1
    timeout: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        self.seed = normalize_seed(self.seed)
        if self.step_cap is not None and self.step_cap < 1:
            raise ConfigurationError("step_cap must be at least 1 (or None for no cap)")
        if self.workers < 1:
            raise ConfigurationError("workers must be positive")


@dataclass
class ConfidenceInterval:
    lo: float
    hi: float
    midpoint: float
    n_samples: int
    hits: int
    avoids: int
    capped: int
    mean_path_length: float
    wall_time: float
    certified: bool
    bound: float
    method: str
    sinks: int = 0
    planned_samples: int = 0
    status: str = "ok"
    backend: str = BACKEND

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


class Outcome(NamedTuple):
    kind: str  # "hit", "avoid", "sink" or "capped"
    reward: float
    length: int


# -- compiled tables ---------------------------------------------------------

class KernelTables:
    """Flat integer/float arrays describing a pPDA (and optional bias) for the sampler."""

    def __init__(self, model: PpdaModel, abs_: Optional[RandomWalkAbs] = None):
        ctrl = {q: i for i, q in enumerate(model.states)}
        let = {a: i for i, a in enumerate(model.alphabet)}
        if len(let) > 255:
            raise ConfigurationError("the compiled sampler supports at most 255 stack letters")
        self.n_ctrl, self.n_let = len(ctrl), len(let)
        self.cls_start = array("q")
        self.r_to, self.r_delta = array("q"), array("q")
        self.r_push_off, self.r_push_len, self.push = array("q"), array("q"), array("q", [0])
        self.r_coef_off, self.r_coef_len, self.coef = array("q"), array("q"), array("d")
        self.r_pushcnt = array("q")
        self.max_rules = 1
        max_delta = 0
        for q in model.states:
            for a in model.alphabet:
                self.cls_start.append(len(self.r_to))
                rules = model.rules_by_class.get((q, a), ())
                self.max_rules = max(self.max_rules, len(rules))
                for r in rules:
                    self.r_to.append(ctrl[r.to_state])
                    self.r_delta.append(r.delta)
                    max_delta = max(max_delta, r.delta)
                    self.r_push_off.append(len(self.push))
                    self.r_push_len.append(len(r.push))
                    self.push.extend(let[x] for x in r.push)
                    self.r_coef_off.append(len(self.coef))
                    self.r_coef_len.append(len(r.weight.coeffs))
                    self.coef.extend(float(c) for c in r.weight.coeffs)
                    self.r_pushcnt.extend(r.push.count(x) for x in model.alphabet)
        self.cls_start.append(len(self.r_to))
        self.tgt_empty = array("q", (int(model.is_target(Configuration(q, ""))) for q in model.states))
        self.av_empty = array("q", (int(model.is_avoid(Configuration(q, ""))) for q in model.states))
        self.av_contains = array("q", [0] * self.n_let)
        self.av_absent = array("q", [0] * self.n_let)
        for d in model.avoid:
            if d.kind == "contains":
                self.av_contains[let[d.letter]] = 1
            elif d.kind == "absent":
                self.av_absent[let[d.letter]] = 1
        c0 = model.initial_state
        self.init_ctrl = ctrl[c0.control]
        self.init_stack = array("q", [let[x] for x in c0.stack] or [0])[: len(c0.stack)]
        self.biased = int(abs_ is not None)
        self.n0 = abs_.n0 if abs_ else 0
        # kappa ** e for e in -1 .. max_delta, each rounded once from the exact power
        kappa = abs_.kappa if abs_ else Fraction(1)
        self.kpow = array("d", (float(kappa ** e) for e in range(-1, max_delta + 1)))
        self.letters = tuple(model.alphabet)
        self.controls = tuple(model.states)


# -- parallel plumbing -----------------------------------------------------

_JOB = None  # set before forking workers; read by _run_chunk


def _run_chunk(args):
    start, count, deadline = args
    return _JOB(start, count, deadline)


def _chunks(n: int, size: int):
    return [(s, min(size, n - s)) for s in range(0, n, size)]


@dataclass
class Tally:
    hits: int = 0
    avoids: int = 0
    sinks: int = 0
    capped: int = 0
    steps: int = 0
    reward: Optional[ExactAccumulator] = None
    error: Optional[tuple] = None

    @property
    def done(self) -> int:
        return self.hits + self.avoids + self.sinks + self.capped

    def merge(self, other: "Tally") -> None:
        self.hits += other.hits
        self.avoids += other.avoids
        self.sinks += other.sinks
        self.capped += other.capped
        self.steps += other.steps
        if other.reward is not None:
            if self.reward is None:
                self.reward = ExactAccumulator(other.reward.scale_exp)
            self.reward.merge(other.reward)
        if self.error is None:
            self.error = other.error


def _drive(job, n: int, workers: int, timeout: Optional[float], chunk: int) -> tuple[Tally, bool]:
    """Run ``job`` over path indices ``0..n-1``; returns the merged tally and a timeout flag."""
    global _JOB
    t0 = time.monotonic()
    # jobs see an absolute monotonic deadline, 0.0 for none; a job that hits
    # it returns fewer paths than asked for
    deadline = 0.0 if timeout is None else t0 + timeout
    total = Tally()
    timed_out = False
    if workers == 1 or n <= chunk:
        # with a deadline, chunks start small and grow toward CHUNK_SECONDS of work
        size = chunk if timeout is None else 16
        start = 0
        while start < n:
            count = min(size, n - start)
            c0 = time.monotonic()
            part = job(start, count, deadline)
            total.merge(part)
            start += count
            if total.error is not None:
                break
            if part.done < count:
                timed_out = True
                break
            if timeout is not None:
                now = time.monotonic()
                if now - t0 > timeout and start < n:
                    timed_out = True
                    break
                grow = CHUNK_SECONDS / (now - c0) if now > c0 else 2.0
                size = max(1, min(chunk, int(count * min(grow, 2.0))))
        return total, timed_out
    if timeout is not None:
        chunk = min(chunk, TIMED_CHUNK)
    chunks = _chunks(n, chunk)
    _JOB = job
    pool = mp.get_context("fork").Pool(workers)
    try:
        pending = [(pool.apply_async(_run_chunk, (c + (deadline,),)), c[1]) for c in chunks]
        for r, count in pending:
            left = None if timeout is None else max(0.0, timeout - (time.monotonic() - t0))
            try:
                part = r.get(timeout=left)
            except mp.TimeoutError:
                timed_out = True
                break
            total.merge(part)
            if total.error is not None:
                break
            if part.done < count:
                timed_out = True
                break
    finally:
        pool.terminate()
        pool.join()
        _JOB = None
    return total, timed_out


def _kernel_job(tables: KernelTables, seed: int, step_cap: Optional[int]):
    cap = step_cap or 0

    def job(start, count, deadline):
        h, a, s, c, st, err = sample_ppda(tables, seed, start, count, cap, deadline)
        return Tally(h, a, s, c, st, error=err)
    return job


# -- generic path sampler --------------------------------------------------

def _pick(row, u: float):
    cum = 0.0
    for t, p in row:
        cum += p
        if u < cum:
            return t
    return row[-1][0]


def run_path(model: MarkovModel, spec: TargetSpec, L: RewardFn, rng: PathStream,
             step_cap: Optional[int] = DEFAULT_STEP_CAP) -> Outcome:
    """Sample one path until it leaves the undecided states or hits ``step_cap``."""
    s = model.initial_state
    label = spec.classify(s)
    if label is Label.AVOID:
        raise SpecificationError("initial state is in the avoid set")
    track = L.constant is None
    path = [s] if track else None
    length = 0
    while label is Label.NEITHER:
        if step_cap is not None and length >= step_cap:
            return Outcome("capped", 0.0, length)
        s = _pick(model.float_successors(s), rng.random())
        length += 1
        if track:
            path.append(s)
        label = spec.classify(s)
    if label is Label.AVOID:
        return Outcome("sink" if s is SINK else "avoid", 0.0, length)
    reward = L.constant if not track else L.checked(path)
    return Outcome("hit", reward, length)


def run_biased_path(chain: BiasedChain, L: RewardFn, rng: PathStream,
                    step_cap: Optional[int] = DEFAULT_STEP_CAP) -> tuple[Outcome, float]:
    """Sample one biased path; returns the outcome (reward ``L * gamma``) and ``gamma``.

    The likelihood is accumulated edge by edge from the base and biased
    probabilities, independently of the closed form it should equal.
    """
    spec = chain.spec
    s = chain.initial_state
    gamma = 1.0
    path = [s]
    length = 0
    while not spec.is_target(s):
        if step_cap is not None and length >= step_cap:
            return Outcome("capped", 0.0, length), gamma
        moves, sink = chain.float_moves(s)
        u = rng.random()
        cum = 0.0
        nxt = None
        for t, p, q in moves:
            cum += q
            if u < cum:
                nxt = (t, p, q)
                break
        length += 1
        if nxt is None:
            if sink >= 1e-12 or not moves:
                return Outcome("sink", 0.0, length), likelihood_step(gamma, 0.0, 0.0, True)
            nxt = moves[-1]
        t, p, q = nxt
        gamma = likelihood_step(gamma, p, q, False)
        s = t
        path.append(s)
    reward = (L.constant if L.constant is not None else L.checked(path)) * gamma
    return Outcome("hit", reward, length), gamma


def _generic_job(sampler, seed: int, scale_exp: int):
    def job(start, count, deadline):
        t = Tally(reward=ExactAccumulator(scale_exp))
        for i in range(start, start + count):
            if deadline and time.monotonic() > deadline:
                break
            out = sampler(PathStream(seed, i))
            t.steps += out.length
            if out.kind == "hit":
                t.hits += 1
                t.reward.add(out.reward)
            elif out.kind == "avoid":
                t.avoids += 1
            elif out.kind == "sink":
                t.sinks += 1
            else:
                t.capped += 1
        return t
    return job


# -- estimators ------------------------------------------------------------

def kernel_model(model: MarkovModel, spec: Optional[TargetSpec]) -> Optional[PpdaModel]:
    """pPDA equivalent of ``model`` usable by the compiled sampler, if any."""
    if isinstance(model, PpdaModel):
        if spec is None or spec == TargetSpec(model.is_target, model.is_avoid):
            return model
        return None
    to_ppda = getattr(model, "to_ppda", None)
    own_spec = getattr(model, "spec", None)
    if to_ppda is None or getattr(model, "max_level", None) is not None:
        return None
    if spec is not None and (own_spec is None or spec != own_spec()):
        return None
    return to_ppda()


def _scale_for(bound: float) -> int:
    return max(0, math.ceil(math.log2(bound))) if bound > 1 else 0


def _finish(t: Tally, n: int, per_hit: Optional[Fraction], bound, cfg: SmcConfig, method: str,
            t0: float, timed_out: bool) -> ConfidenceInterval:
    done = t.done
    if per_hit is not None:
        est = float(Fraction(t.hits) * per_hit / max(done, 1))
    else:
        est = float(t.reward.exact_value() / max(done, 1)) if t.reward is not None else 0.0
    half = cfg.epsilon / 2
    certified = t.capped == 0 and not timed_out and done == n
    status = "timeout" if timed_out else ("capped" if t.capped else "ok")
    return ConfidenceInterval(
        lo=est - half, hi=est + half, midpoint=est, n_samples=done, hits=t.hits,
        avoids=t.avoids + t.sinks, capped=t.capped, sinks=t.sinks,
        mean_path_length=t.steps / done if done else 0.0, wall_time=time.monotonic() - t0,
        certified=certified, bound=float(bound), method=method, planned_samples=n, status=status)


def _chunk_size(n: int, workers: int, compiled: bool) -> int:
    base = (1 << 20) if compiled else (1 << 12)
    if workers > 1:
        base = min(base, max(1, -(-n // (workers * 4))))
    return base


def estimate(model: MarkovModel, spec: TargetSpec, L: Optional[RewardFn], cfg: SmcConfig) -> ConfidenceInterval:
    """Plain Monte Carlo estimate of the expected reward of target-reaching paths."""
    t0 = time.monotonic()
    L = L or constant_reward(1.0)
    n = sample_count(L.bound, cfg.epsilon, cfg.delta)
    km = kernel_model(model, spec) if L.constant is not None else None
    if km is not None:
        if km.is_avoid(km.initial_state):
            raise SpecificationError("initial state is in the avoid set")
        job = _kernel_job(KernelTables(km), cfg.seed, cfg.step_cap)
        t, timed_out = _drive(job, n, cfg.workers, cfg.timeout, _chunk_size(n, cfg.workers, True))
        per_hit = Fraction(L.constant)
    else:
        if spec.classify(model.initial_state) is Label.AVOID:
            raise SpecificationError("initial state is in the avoid set")
        sampler = lambda rng: run_path(model, spec, L, rng, cfg.step_cap)  # noqa: E731
        job = _generic_job(sampler, cfg.seed, _scale_for(L.bound))
        t, timed_out = _drive(job, n, cfg.workers, cfg.timeout, _chunk_size(n, cfg.workers, False))
        per_hit = None
    if t.capped:
        log.warning("%d of %d paths hit the step cap; the interval is not certified", t.capped, t.done)
    return _finish(t, n, per_hit, L.bound, cfg, "smc", t0, timed_out)


def estimate_importance(base: MarkovModel, spec: TargetSpec, chain: BiasedChain, cfg: SmcConfig,
                        L: Optional[RewardFn] = None) -> ConfidenceInterval:
    """Importance-sampling estimate through the biased chain.

    For constant rewards every accepted path carries the same likelihood
    ``mu(level(s0))``, so hits are counted and scaled once at the end and
    the Hoeffding bound uses ``B = c * mu(level(s0))``.
    """
    t0 = time.monotonic()
    L = L or constant_reward(1.0)
    s0 = chain.initial_state
    mu0 = chain.abs.mu(chain.level(s0))
    bound = Fraction(L.bound) * mu0 if L.constant is not None else L.bound * float(mu0)
    n = sample_count(bound, cfg.epsilon, cfg.delta)
    km = kernel_model(base, spec) if L.constant is not None else None
    if km is not None and chain.level not in (ppda_level, getattr(base, "level", None)):
        km = None
    if km is not None:
        job = _kernel_job(KernelTables(km, chain.abs), cfg.seed, cfg.step_cap)
        t, timed_out = _drive(job, n, cfg.workers, cfg.timeout, _chunk_size(n, cfg.workers, True))
        if t.error is not None:
            q, a, h = t.error
            witness = (km.states[q], km.alphabet[a], h)
            raise AbstractionError(f"decreasing ratio above 1 for class {witness}: the model is not "
                                   f"({chain.abs.p}, {chain.abs.n0})-divergent there", witness=witness)
        per_hit = Fraction(L.constant) * mu0
    else:
        def sampler(rng):
            out, _ = run_biased_path(chain, L, rng, cfg.step_cap)
            return out
        job = _generic_job(sampler, cfg.seed, _scale_for(float(bound)))
        t, timed_out = _drive(job, n, cfg.workers, cfg.timeout, _chunk_size(n, cfg.workers, False))
        per_hit = None
    if t.capped:
        log.warning("%d of %d paths hit the step cap; the interval is not certified", t.capped, t.done)
    return _finish(t, n, per_hit, bound, cfg, "smc-is", t0, timed_out)


def trace_likelihoods(chain: BiasedChain, n_paths: int, seed: int = 0,
                      step_cap: Optional[int] = DEFAULT_STEP_CAP) -> list[tuple[str, float, int]]:
    """``(kind, gamma, length)`` for ``n_paths`` biased paths, gamma built edge by edge."""
    one = constant_reward(1.0)
    out = []
    for i in range(n_paths):
        o, g = run_biased_path(chain, one, PathStream(seed, i), step_cap)
        out.append((o.kind, g, o.length))
    return out
