from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decmc.abstraction import (SINK, BiasedChain, RandomWalkAbs, bias_successors, decreasing_ratio,
                               likelihood_reward, likelihood_step, rw_reach_prob)
from decmc.chain import path_probability
from decmc.errors import AbstractionError, SpecificationError
from decmc.models import BuiltinState as S, Fig1Chain, IrrationalChain
from decmc.ppda import Configuration as C, level, target_avoid_predicates
from decmc.smc import trace_likelihoods


def fig1_biased(p=0.6, n0=0, exact=True):
    m = Fig1Chain()
    return BiasedChain(m, m.spec(), m.level, RandomWalkAbs(p, n0), exact=exact)


def test_random_walk_closed_form():
    a = RandomWalkAbs(0.6, 0)
    assert a.kappa == F(2, 3)
    assert rw_reach_prob(a, 3, exact=True) == F(8, 27)
    assert rw_reach_prob(RandomWalkAbs(0.6, 2), 5, exact=True) == F(8, 27)
    assert rw_reach_prob(RandomWalkAbs(0.6, 4), 3) == 1.0
    with pytest.raises(SpecificationError):
        RandomWalkAbs(0.5, 0)


def test_translated_walk_matches_linear_solve():
    # birth-death walk on {0..200} absorbed in [0, 2], reflecting at the top
    p, n0, top = 0.6, 2, 200
    n = top + 1
    A = np.eye(n)
    b = np.zeros(n)
    for m in range(n):
        if m <= n0:
            b[m] = 1.0
            continue
        up = min(m + 1, top)
        A[m, up] -= p
        A[m, m - 1] -= 1 - p
    x = np.linalg.solve(A, b)
    a = RandomWalkAbs(p, n0)
    for m in (3, 5, 10, 30):
        assert abs(x[m] - a.mu_float(m)) < 1e-9


def test_mu_float_large_levels():
    a = RandomWalkAbs(0.6, 0)
    assert 0.0 < a.mu_float(1500) < 1e-260
    assert a.log_mu(10) == pytest.approx(10 * np.log(2 / 3))


def test_fig1_decreasing_ratios():
    ch = fig1_biased()
    assert decreasing_ratio(ch, S("p", 1)) == F(7, 15)
    for n in (2, 3, 10):
        assert decreasing_ratio(ch, S("p", n)) == F(55, 60)
        assert decreasing_ratio(ch, S("q", n)) == F(25, 30)
    assert decreasing_ratio(ch, S("q", 1)) == F(25, 30)


def test_fig1_biased_row_from_p1():
    d = bias_successors(fig1_biased(), S("p", 1))
    assert d.as_dict() == {S("p", 2): F(1, 5), S("q", 2): F(4, 15), SINK: F(8, 15)}


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["p", "q"]), st.integers(1, 60), st.sampled_from([0.55, 0.6, 0.7]))
def test_biased_rows_sum_to_one_and_keep_support(tag, n, p):
    ch = fig1_biased(p, 0)
    s = S(tag, n)
    try:
        d = bias_successors(ch, s)
    except AbstractionError:
        return
    assert sum(q for _, q in d) == 1
    base = Fig1Chain().successors(s)
    for t, _ in base:
        if not Fig1Chain().is_avoid(t):
            assert d.prob(t) > 0


def test_monotony_violation_names_the_state(pta):
    ch = BiasedChain(pta, target_avoid_predicates(pta), level, RandomWalkAbs(0.6, 3))
    with pytest.raises(AbstractionError) as ei:
        for k in range(1, 12):
            decreasing_ratio(ch, C("q", "B" * k))
    assert ei.value.witness is not None


def test_edges_dropping_two_levels_are_rejected():
    m = IrrationalChain()
    ch = BiasedChain(m, m.spec(), m.level, RandomWalkAbs(0.6, 0))
    with pytest.raises(AbstractionError):
        bias_successors(ch, S("n", 3))


def test_absorbing_states_in_biased_chain():
    ch = fig1_biased()
    assert bias_successors(ch, S("q", 0)).as_dict() == {S("q", 0): 1}
    assert bias_successors(ch, SINK).as_dict() == {SINK: 1}


def test_likelihood_step():
    assert likelihood_step(1.0, 0.3, 0.45, False) == pytest.approx(2 / 3)
    assert likelihood_step(0.7, 0.3, 0.45, True) == 0.0
    assert likelihood_step(F(1), F(3, 10), F(9, 20), False) == F(2, 3)


def test_likelihood_along_a_fig1_path():
    ch = fig1_biased()
    path = [S("p", 1), S("q", 2), S("q", 1), S("q", 0)]
    base = path_probability(Fig1Chain(), path)
    biased = path_probability(ch, path)
    assert base / biased == F(2, 3)
    assert likelihood_reward(ch).evaluate(path) == pytest.approx(2 / 3, rel=1e-12)


def test_bias_correction_by_enumeration():
    # every accepted biased path has gamma = 2/3, so the biased mass of the
    # accepted paths times 2/3 must equal their base mass exactly
    ch = fig1_biased(exact=True)
    base = Fig1Chain()
    front = {S("p", 1): (F(1), F(1))}
    got_base = got_biased = F(0)
    for _ in range(14):
        nxt: dict = {}
        for s, (pb, pq) in front.items():
            bdist = base.successors(s).as_dict()
            for t, q in bias_successors(ch, s):
                if t is SINK:
                    continue
                nb, nq = pb * bdist[t], pq * q
                if t == S("q", 0):
                    got_base += nb
                    got_biased += nq
                else:
                    ob, oq = nxt.get(t, (F(0), F(0)))
                    nxt[t] = (ob + nb, oq + nq)
        front = nxt
    assert got_base == F(2, 3) * got_biased
    assert 0.0258 > float(got_base) > 0.02


def test_sampled_likelihoods_are_constant():
    ch = fig1_biased(exact=False)
    hits = [g for kind, g, _ in trace_likelihoods(ch, 2000, seed=3) if kind == "hit"]
    assert hits
    assert all(abs(g - 2 / 3) <= 1e-9 for g in hits)


def test_truncated_reach_below_abstraction_bound():
    # reach probability by exhaustive depth-limited exploration never exceeds mu(level)
    m = Fig1Chain()
    a = RandomWalkAbs(0.6, 0)
    for start in (S("p", 1), S("q", 1), S("q", 3)):
        front = {start: F(1)}
        reached = F(0)
        for _ in range(12):
            nxt: dict = {}
            for s, w in front.items():
                for t, p in m.successors(s):
                    if t == S("q", 0):
                        reached += w * p
                    elif t != S("p", 0):
                        nxt[t] = nxt.get(t, F(0)) + w * p
            front = nxt
        assert reached <= rw_reach_prob(a, start[1], exact=True)
