from fractions import Fraction as F
from math import ldexp
import time

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from decmc import _accel
from decmc._accel import _pure
from decmc.abstraction import RandomWalkAbs
from decmc.errors import DomainError, InternalError
from decmc.smc import KernelTables

# the backend fixture is a stateless module, so sharing it across examples is safe
FIXTURE_OK = [HealthCheck.function_scoped_fixture]

# inputs the 512 cells hold exactly: 53-bit mantissas down to 2**-458
floats01 = st.one_of(st.just(0.0), st.floats(min_value=ldexp(1.0, -458), max_value=1.0))
any01 = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_subnormal=True)


def test_backend_selection_is_reported():
    assert _accel.BACKEND in ("cython", "python")
    assert _accel.COMPILED == (_accel.BACKEND == "cython")


def test_random_streams_match_pure(backend):
    for seed in (0, 1, 2**64 - 1):
        for idx in (0, 7, 10**9):
            key = backend.stream_key(seed, idx)
            assert key == _pure.stream_key(seed, idx)
            draws = [backend.uniform(key, k) for k in range(50)]
            assert draws == [_pure.uniform(key, k) for k in range(50)]
            assert all(0.0 <= u < 1.0 for u in draws)


@settings(max_examples=60, deadline=None, suppress_health_check=FIXTURE_OK)
@given(st.lists(floats01, max_size=60))
def test_accumulator_is_exact(backend, xs):
    acc = backend.ExactAccumulator()
    for x in xs:
        acc.add(x)
    want = sum((F(x) for x in xs), F(0))
    assert acc.exact_value() == want
    assert acc.underflow_count == 0
    assert acc.total() == float(want)


@settings(max_examples=40, deadline=None, suppress_health_check=FIXTURE_OK)
@given(st.lists(floats01, max_size=40), st.lists(floats01, max_size=40))
def test_accumulator_merge_is_exact(backend, xs, ys):
    a, b = backend.ExactAccumulator(), backend.ExactAccumulator()
    for x in xs:
        a.add(x)
    for y in ys:
        b.add(y)
    a.merge(b)
    assert a.exact_value() == sum((F(v) for v in xs + ys), F(0))


@settings(max_examples=60, deadline=None, suppress_health_check=FIXTURE_OK)
@given(st.lists(any01, max_size=40))
def test_accumulator_truncation_is_bounded(backend, xs):
    acc = backend.ExactAccumulator()
    for x in xs:
        acc.add(x)
    lost = sum((F(x) for x in xs), F(0)) - acc.exact_value()
    assert 0 <= lost <= acc.underflow_count * F(1, 2**511)


def test_accumulator_twins_agree_cell_for_cell(backend):
    a, b = backend.ExactAccumulator(), _pure.ExactAccumulator()
    vals = [0.1 * k for k in range(1, 10)] + [ldexp(1.0, -300), 1e-5, 0.5]
    for v in vals:
        a.add(v)
        b.add(v)
    a.add_dyadic(12345, 400)
    b.add_dyadic(12345, 400)
    assert a.get_cells() == b.get_cells()
    assert a.total() == b.total()


def test_tiny_masses_are_not_absorbed(backend):
    # one plus a million copies of 2**-300: a float sum would lose them all
    acc = backend.ExactAccumulator()
    acc.add(1.0)
    tiny = ldexp(1.0, -300)
    for _ in range(10**6 if backend is not _pure else 10**4):
        acc.add(tiny)
    n = 10**6 if backend is not _pure else 10**4
    assert acc.exact_value() == 1 + n * F(1, 2**300)


def test_exact_residual(backend):
    succ, fail = backend.ExactAccumulator(), backend.ExactAccumulator()
    succ.add(0.5)
    fail.add(0.5 - ldexp(1.0, -53))
    fail.add_dyadic(2**53 - 1, 400 + 53)
    # 1 - succ - fail = 2**-53 - (2**53 - 1) 2**-453, rounded once
    want = F(1, 2**53) - F(2**53 - 1, 2**453)
    assert backend.exact_residual(succ, fail) == float(want)
    succ2, fail2 = backend.ExactAccumulator(), backend.ExactAccumulator()
    succ2.add(0.5)
    fail2.add(0.5)
    fail2.add_dyadic(0, 0)
    assert backend.exact_residual(succ2, fail2) == 0.0
    s3 = backend.ExactAccumulator()
    s3.add(1.0)
    s3.add_dyadic(1, 400)
    assert backend.exact_residual(s3, backend.ExactAccumulator()) == -ldexp(1.0, -400)


def test_accumulator_rejects_bad_input(backend):
    acc = backend.ExactAccumulator()
    with pytest.raises(DomainError):
        acc.add(-1e-300)
    with pytest.raises(DomainError):
        acc.add(2.0)
    with pytest.raises(DomainError):
        acc.add_dyadic(-1, 3)
    scaled = backend.ExactAccumulator(3)
    scaled.add(8.0)
    assert scaled.exact_value() == 8


def test_accumulator_underflow_is_counted(backend):
    acc = backend.ExactAccumulator()
    acc.add(ldexp(1.0, -600))
    assert acc.underflow_count == 1
    assert acc.exact_value() == 0


@settings(max_examples=60, deadline=None, suppress_health_check=FIXTURE_OK)
@given(st.lists(st.tuples(st.integers(0, 30), st.sampled_from([0.0, 0.25, 0.5, 1.0, 1e-300])), max_size=60))
def test_heap_pops_in_weight_then_state_order(backend, ops):
    h = backend.UpdatableHeap()
    ref: dict = {}
    for s, w in ops:
        if s in h:
            h.update(s, w, 2.0)
        else:
            h.insert(s, w, 2.0)
        ref[s] = w
    assert len(h) == len(ref)
    out = []
    while len(h):
        s, w, lbar = h.pop_max()
        assert lbar == 2.0
        out.append((s, w))
    assert out == sorted(ref.items(), key=lambda kv: (-kv[1], kv[0]))


def test_heap_errors_and_lookup(backend):
    h = backend.UpdatableHeap()
    h.insert("a", 0.5)
    assert h.get("a") == (0.5, 1.0) and h.get("b") is None
    with pytest.raises(InternalError):
        h.insert("a", 0.1)
    with pytest.raises(InternalError):
        h.update("b", 0.1)
    h.pop_max()
    with pytest.raises(IndexError):
        h.pop_max()


def test_heap_tie_break(backend):
    h = backend.UpdatableHeap()
    for s in ("c", "a", "b"):
        h.insert(s, 0.25)
    assert [h.pop_max()[0] for _ in range(3)] == ["a", "b", "c"]


@pytest.mark.parametrize("name,abs_", [("pta", None), ("pta", RandomWalkAbs(0.6, 8)),
                                       ("pta7", RandomWalkAbs(0.55, 3)), ("fig1", RandomWalkAbs(0.6, 0))])
def test_sampler_twins_agree(backend, name, abs_):
    from decmc.ppda import load_bundled

    t = KernelTables(load_bundled(name), abs_)
    got = backend.sample_ppda(t, 11, 100, 300, 10**5)
    want = _pure.sample_ppda(t, 11, 100, 300, 10**5)
    assert got == want
    h, a, s, c, steps, err = got
    assert h + a + s + c == 300 and err is None


def test_sampler_reports_monotony_violation(backend, pta):
    t = KernelTables(pta, RandomWalkAbs(0.6, 3))
    *_, err = backend.sample_ppda(t, 1, 0, 2000, 10**5)
    assert err is not None and err[2] >= 1


def test_sampler_stops_at_deadline(backend, pta7):
    # with a deadline already past, the first path that reaches the clock-check
    # interval is dropped along with everything after it
    t = KernelTables(pta7, None)
    got = backend.sample_ppda(t, 3, 0, 1000, 10**7, time.monotonic())
    h, a, s, c, steps, err = got
    assert err is None and h + a + s + c < 1000
    assert got == _pure.sample_ppda(t, 3, 0, 1000, 10**7, 1.0)
