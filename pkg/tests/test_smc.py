import math
import statistics
import time

import pytest

from decmc.abstraction import BiasedChain, RandomWalkAbs
from decmc.chain import product_reward
from decmc.errors import AbstractionError, ConfigurationError, SpecificationError
from decmc.models import BuiltinState as S, Fig1Chain
from decmc.ppda import level, target_avoid_predicates
from decmc.rng import PathStream
from decmc.smc import SmcConfig, estimate, estimate_importance, run_path, sample_count

FIG1_REACH = 0.02586569743


def fig1_is(fig1, epsilon, delta=0.05, seed=0, **kw):
    ch = BiasedChain(fig1.model, fig1.spec, fig1.level, RandomWalkAbs(0.6, 0), exact=False)
    return estimate_importance(fig1.model, fig1.spec, ch, SmcConfig(epsilon, delta, seed=seed, **kw))


def test_sample_count():
    assert sample_count(1, 0.01, 0.01) == 423866
    assert sample_count(1, 2, 2 / math.e) == 2
    assert sample_count(1, 2, 2 / math.e**2) == 4
    n1, n2 = sample_count(1, 0.01, 0.05), sample_count(2, 0.01, 0.05)
    assert 4 * n1 - 4 <= n2 <= 4 * n1
    for bad in ((0, 0.1, 0.1), (1, 0, 0.1), (1, 0.1, 1.0), (1, 0.1, 0.0)):
        with pytest.raises(ConfigurationError):
            sample_count(*bad)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SmcConfig(0.0)
    with pytest.raises(ConfigurationError):
        SmcConfig(0.1, step_cap=0)
    with pytest.raises(ValueError):
        SmcConfig(0.1, seed=-1)


def test_run_path_outcomes(fig1):
    m, spec = fig1.model, fig1.spec
    one = product_reward(lambda a, b: 1.0, bound=1.0)
    kinds = {run_path(m, spec, one, PathStream(5, i), step_cap=200).kind for i in range(300)}
    assert kinds <= {"hit", "avoid", "capped"} and "avoid" in kinds
    out = run_path(m, spec, one, PathStream(5, 0), step_cap=1)
    assert out.length <= 1


def test_runs_are_deterministic(fig1):
    a = fig1_is(fig1, 0.05, seed=9)
    b = fig1_is(fig1, 0.05, seed=9)
    c = fig1_is(fig1, 0.05, seed=10)
    assert (a.lo, a.hi, a.hits) == (b.lo, b.hi, b.hits)
    assert a.hits != c.hits


def test_result_does_not_depend_on_workers(pta):
    abs_ = RandomWalkAbs(0.6, 8)
    ch = BiasedChain(pta, target_avoid_predicates(pta), level, abs_, exact=False)
    one = estimate_importance(pta, target_avoid_predicates(pta), ch, SmcConfig(0.05, 0.1, seed=3, workers=1))
    two = estimate_importance(pta, target_avoid_predicates(pta), ch, SmcConfig(0.05, 0.1, seed=3, workers=2))
    assert (one.hits, one.avoids, one.midpoint) == (two.hits, two.avoids, two.midpoint)


def test_importance_interval_contains_reference(fig1):
    ci = fig1_is(fig1, 0.01, delta=0.01, seed=1)
    assert ci.certified and ci.capped == 0
    assert ci.contains(FIG1_REACH)
    assert ci.bound == pytest.approx(2 / 3)
    assert ci.hi - ci.lo == pytest.approx(0.01)


def test_coverage_and_unbiasedness(fig1):
    runs = [fig1_is(fig1, 0.02, delta=0.05, seed=s) for s in range(200)]
    covered = sum(r.contains(FIG1_REACH) for r in runs)
    assert covered / len(runs) >= 0.90
    mids = [r.midpoint for r in runs]
    # the spread of the mean of 200 independent estimates
    se = statistics.stdev(mids) / math.sqrt(len(mids))
    assert abs(statistics.fmean(mids) - FIG1_REACH) <= 4 * se + 1e-12


def test_generic_sampler_matches_reference():
    # a truncated chain has no pPDA encoding, so it runs in the Python sampler
    m = Fig1Chain(max_level=40)
    spec = m.spec()
    ch = BiasedChain(m, spec, m.level, RandomWalkAbs(0.6, 0), exact=False)
    ci = estimate_importance(m, spec, ch, SmcConfig(0.02, 0.05, seed=2))
    assert ci.certified and ci.contains(FIG1_REACH)


def test_capped_paths_void_the_certificate(pta7):
    ci = estimate(pta7, target_avoid_predicates(pta7), None, SmcConfig(0.3, 0.1, seed=1, step_cap=50))
    assert ci.capped > 0 and not ci.certified and ci.status == "capped"
    assert ci.n_samples == ci.hits + ci.avoids + ci.capped


def test_timeout_returns_partial_result(pta7):
    ci = estimate(pta7, target_avoid_predicates(pta7), None, SmcConfig(0.001, 0.01, seed=1, timeout=0.0))
    assert ci.status == "timeout" and not ci.certified
    assert ci.n_samples < ci.planned_samples


def test_monotony_violation_is_raised(pta):
    ch = BiasedChain(pta, target_avoid_predicates(pta), level, RandomWalkAbs(0.6, 3), exact=False)
    with pytest.raises(AbstractionError) as ei:
        estimate_importance(pta, target_avoid_predicates(pta), ch, SmcConfig(0.05, 0.1, seed=1))
    control, letter, height = ei.value.witness
    assert control == "q" and letter in ("A", "B") and height >= 1


def test_initial_state_in_avoid_is_rejected():
    m = Fig1Chain()
    m.initial_state = S("p", 0)
    with pytest.raises(SpecificationError):
        estimate(m, m.spec(), None, SmcConfig(0.1, 0.1))


@pytest.mark.parametrize("workers", [1, 2])
def test_timeout_is_respected_on_heavy_tails(pta7, workers):
    t0 = time.monotonic()
    ci = estimate(pta7, target_avoid_predicates(pta7), None,
                  SmcConfig(0.01, 0.01, seed=1, workers=workers, timeout=1.0))
    assert time.monotonic() - t0 < 10.0
    assert ci.status == "timeout" and not ci.certified
