import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decmc.abstraction import RandomWalkAbs
from decmc.chain import Label, RewardFn, TargetSpec
from decmc.errors import ConfigurationError, DomainError, SpecificationError
from decmc.models import BuiltinState as S, Fig1Chain
from decmc.numeric import CONSERVATION_TOL, FIFO, HEAP, evaluate, evaluate_importance, evaluate_reward
from decmc.ppda import level, target_avoid_predicates

from oracles import pta_reach

FIG1_REACH = 0.02586569743
# frozen output of the height recursion in oracles.py
PTA_REACH = 0.31458821824140986


def reach_by_linear_solve(model, spec):
    """Reach probability of a finite chain from a linear system over its reachable states."""
    s0 = model.initial_state
    seen, order, todo = {s0}, [s0], [s0]
    while todo:
        s = todo.pop()
        if spec.classify(s) is not Label.NEITHER:
            continue
        for t, _ in model.successors(s):
            if t not in seen:
                seen.add(t)
                order.append(t)
                todo.append(t)
    inner = [s for s in order if spec.classify(s) is Label.NEITHER]
    idx = {s: i for i, s in enumerate(inner)}
    A = np.eye(len(inner))
    b = np.zeros(len(inner))
    for s in inner:
        for t, p in model.successors(s):
            lab = spec.classify(t)
            if lab is Label.TARGET:
                b[idx[s]] += float(p)
            elif lab is Label.NEITHER:
                A[idx[s], idx[t]] -= float(p)
    return float(np.linalg.solve(A, b)[idx[s0]])


def fig1_is(fig1, epsilon, policy=HEAP, **kw):
    return evaluate_importance(fig1.model, fig1.spec, fig1.level, RandomWalkAbs(0.6, 0), epsilon, policy, **kw)


def test_fig1_importance_interval(fig1):
    r = fig1_is(fig1, 1e-6)
    assert r.certified and r.status == "ok"
    assert r.contains(FIG1_REACH)
    assert r.width <= 1e-6
    assert r.max_conservation_error <= CONSERVATION_TOL
    # every accepted path carries the likelihood mu(1) = 2/3
    assert r.e == pytest.approx(2 / 3 * r.p_succ, rel=1e-9)


def test_heap_and_fifo_agree(fig1):
    a = fig1_is(fig1, 1e-6, HEAP)
    b = fig1_is(fig1, 1e-6, FIFO)
    assert a.certified and b.certified
    assert max(a.lo, b.lo) <= min(a.hi, b.hi)
    assert a.states_expanded < b.states_expanded


def test_width_shrinks_with_budget(fig1):
    widths = []
    for budget in (10, 30, 100, 300, 1000):
        r = fig1_is(fig1, 1e-9, budget=budget)
        assert r.status == "budget" and not r.certified
        assert r.contains(FIG1_REACH)
        widths.append(r.width)
    assert all(x >= y for x, y in zip(widths, widths[1:]))


def test_checkpoints_are_monotone_and_reported(fig1):
    seen = []
    r = fig1_is(fig1, 1e-8, checkpoint_every=200, on_checkpoint=lambda n, err, res: seen.append((n, res)))
    assert [n for n, _ in seen] == sorted(n for n, _ in seen)
    residuals = [res for _, res in seen]
    assert all(x >= y for x, y in zip(residuals, residuals[1:]))
    assert all(c[1] <= CONSERVATION_TOL for c in r.checkpoints)


def test_timeout_gives_sound_partial_result(fig1):
    r = fig1_is(fig1, 1e-12, timeout=0.0)
    assert r.status == "timeout" and not r.certified
    assert r.contains(FIG1_REACH)


def test_initial_state_in_target():
    m = Fig1Chain()
    m.initial_state = S("q", 0)
    r = evaluate(m, m.spec(), epsilon=1e-6)
    assert r.certified and r.contains(1.0) and r.width < 1e-15


def test_initial_state_in_avoid():
    m = Fig1Chain()
    m.initial_state = S("p", 0)
    with pytest.raises(SpecificationError):
        evaluate(m, m.spec(), epsilon=1e-6)


def test_bad_arguments(fig1):
    with pytest.raises(DomainError):
        evaluate(fig1.model, fig1.spec, epsilon=0.0)
    with pytest.raises(ConfigurationError):
        evaluate(fig1.model, fig1.spec, epsilon=1e-3, policy="lifo")


def test_path_rewards_need_fifo():
    m = Fig1Chain(max_level=5)
    L = RewardFn(evaluate=lambda path: 1.0 / len(path), bound=1.0)
    with pytest.raises(ConfigurationError):
        evaluate_reward(m, m.spec(), L, 1e-3, HEAP)
    r = evaluate_reward(m, m.spec(), L, 0.05, FIFO)
    # the reward depends only on the path length, so exact enumeration can
    # merge paths by (state, length); the unexplored mass is the upper slack
    front = {S("p", 1): F(1)}
    got = F(0)
    for n in range(1, 300):
        nxt = {}
        for s, w in front.items():
            for t, p in m.successors(s):
                lab = m.spec().classify(t)
                if lab is Label.TARGET:
                    got += w * p / (n + 1)
                elif lab is Label.NEITHER:
                    nxt[t] = nxt.get(t, F(0)) + w * p
        front = nxt
    slack = sum(front.values(), F(0))
    assert slack < F(1, 10**6)
    assert r.certified and r.width <= 0.05
    assert r.lo <= float(got + slack) and float(got) <= r.hi


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 9), st.sampled_from([1e-3, 1e-6, 1e-9]), st.sampled_from([HEAP, FIFO]))
def test_truncated_chain_matches_linear_solve(max_level, eps, policy):
    m = Fig1Chain(max_level=max_level)
    spec = m.spec()
    want = reach_by_linear_solve(m, spec)
    r = evaluate(m, spec, epsilon=eps, policy=policy)
    assert r.certified and r.width <= eps
    assert r.lo - 1e-12 <= want <= r.hi + 1e-12


def test_height_recursion_oracle_is_frozen():
    assert abs(pta_reach() - PTA_REACH) < 1e-15
    assert abs(pta_reach(H=800) - PTA_REACH) < 1e-15


def test_pta_reach_probability(pta):
    spec = target_avoid_predicates(pta)
    r = evaluate_importance(pta, spec, level, RandomWalkAbs(0.6, 8), 1e-3)
    assert r.certified and r.width <= 1e-3
    assert r.contains(PTA_REACH)


def test_scaled_reward_bound(fig1):
    r = fig1_is(fig1, 1e-6)
    assert r.bound == pytest.approx(2 / 3)
    assert math.isclose(r.hi - r.lo, r.residual * r.bound, rel_tol=1e-6, abs_tol=1e-15)


def test_overlapping_spec_is_reported(fig1):
    spec = TargetSpec(is_target=lambda s: s == S("q", 0) or s == S("p", 2), is_avoid=lambda s: s == S("p", 2))
    with pytest.raises(SpecificationError):
        evaluate(fig1.model, spec, epsilon=1e-3)
