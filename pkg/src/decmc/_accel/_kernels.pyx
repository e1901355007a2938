# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: counter-based RNG, pPDA path sampler, exact accumulator, updatable heap.

Semantics are defined by the pure twins in ``_pure.py``; every floating
point operation here happens in the same order so results are identical.
"""

from fractions import Fraction

from decmc.errors import DomainError, InternalError
from libc.math cimport frexp, ldexp
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t
from libc.stdlib cimport malloc, realloc, free, calloc
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef int NCELLS = 512
cdef uint64_t MANT_LIMIT = 1ULL << 53
cdef int NCACHE_MAX = 4096
# steps between clock reads inside one path; CLOCK_MONOTONIC is time.monotonic on Linux
cdef long long DEADLINE_MASK = (1 << 16) - 1

cdef enum:
    HIT = 0
    AVOID = 1
    SINK = 2
    CAPPED = 3


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _stream_key(uint64_t seed, uint64_t index) noexcept nogil:
    return _mix64(_mix64(seed) ^ (index * GOLDEN))


cdef inline double _uniform(uint64_t key, uint64_t k) noexcept nogil:
    return <double>(_mix64(key + (k + 1) * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)


def mix64(z):
    return _mix64(<uint64_t>(z & 0xFFFFFFFFFFFFFFFF))


def stream_key(seed, index):
    return _stream_key(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), <uint64_t>(index & 0xFFFFFFFFFFFFFFFF))


def uniform(key, k):
    return _uniform(<uint64_t>(key & 0xFFFFFFFFFFFFFFFF), <uint64_t>k)


# -- exact accumulator ---------------------------------------------------

# a Python int; a shift of the C constant would overflow
_ONE = (<object>1) << 511


cdef class ExactAccumulator:
    """Nonnegative dyadic sum held exactly in 512 integer cells (see the pure twin)."""

    cdef uint64_t cells[512]
    cdef public long long underflow_count
    cdef public int scale_exp

    def __cinit__(self, int scale_exp=0):
        if scale_exp < 0:
            raise ValueError("scale_exp must be nonnegative")
        cdef int i
        for i in range(NCELLS):
            self.cells[i] = 0
        self.underflow_count = 0
        self.scale_exp = scale_exp

    cdef int _add_mant(self, uint64_t mant, long u) except -1:
        cdef uint64_t c
        if mant == 0:
            return 0
        if u < 0:
            raise DomainError("value too large for the accumulator")
        if u >= NCELLS:
            self.underflow_count += 1
            if u - (NCELLS - 1) >= 64:
                return 0
            mant >>= (u - (NCELLS - 1))
            u = NCELLS - 1
            if mant == 0:
                return 0
        c = self.cells[u] + mant
        while c >= MANT_LIMIT and u > 0:
            self.cells[u] = c & 1
            u -= 1
            c = (c >> 1) + self.cells[u]
        if c >= (1ULL << 63):
            raise DomainError("accumulator overflow")
        self.cells[u] = c
        return 0

    cpdef add(self, double x):
        cdef int e
        cdef double m
        if not (0.0 <= x <= ldexp(1.0, self.scale_exp)):
            raise DomainError(f"accumulator input {x!r} outside [0, {2 ** self.scale_exp}]")
        if x == 0.0:
            return
        m = frexp(x, &e)
        self._add_mant(<uint64_t>ldexp(m, 53), 53 - e + self.scale_exp)

    def add_dyadic(self, numer, long k):
        """Add ``numer * 2**-k`` exactly (``numer >= 0``)."""
        if numer < 0:
            raise DomainError("negative dyadic input")
        k += self.scale_exp
        cdef long j = 0
        mask = (1 << 53) - 1
        while numer:
            self._add_mant(<uint64_t>(numer & mask), k - 53 * j)
            numer >>= 53
            j += 1

    def merge(self, ExactAccumulator other):
        if other.scale_exp != self.scale_exp:
            raise ValueError("cannot merge accumulators with different scales")
        cdef int i
        for i in range(NCELLS):
            if other.cells[i]:
                self._add_mant(other.cells[i], i)
        self.underflow_count += other.underflow_count

    def numerator(self):
        cdef int i
        n = 0
        for i in range(NCELLS):
            n = (n << 1) + self.cells[i]
        return n

    def exact_value(self):
        return Fraction(self.numerator() << self.scale_exp, _ONE)

    def total(self):
        return ldexp(self.numerator() / _ONE, self.scale_exp)

    def get_cells(self):
        return [self.cells[i] for i in range(NCELLS)]

    @property
    def cells(self):
        return self.get_cells()

    def is_empty(self):
        cdef int i
        for i in range(NCELLS):
            if self.cells[i]:
                return False
        return True

    def __reduce__(self):
        return (_rebuild_acc, (self.scale_exp, self.get_cells(), self.underflow_count))


def _rebuild_acc(scale_exp, cells, underflow):
    cdef ExactAccumulator a = ExactAccumulator(scale_exp)
    cdef int i
    for i in range(NCELLS):
        a.cells[i] = cells[i]
    a.underflow_count = underflow
    return a


def exact_residual(ExactAccumulator succ, ExactAccumulator fail):
    """``1 - succ - fail`` rounded once, from the exact cell contents."""
    if succ.scale_exp or fail.scale_exp:
        raise ValueError("residual needs unscaled accumulators")
    return (_ONE - succ.numerator() - fail.numerator()) / _ONE


# -- updatable heap -------------------------------------------------------

cdef class UpdatableHeap:
    """Max-heap of ``(state, w, lbar)`` keyed on ``w`` with a state index.

    Equal weights pop in increasing state order.
    """

    cdef list _w
    cdef list _s
    cdef list _l
    cdef dict _pos

    def __cinit__(self):
        self._w = []
        self._s = []
        self._l = []
        self._pos = {}

    def __len__(self):
        return len(self._s)

    def __contains__(self, state):
        return state in self._pos

    cdef inline bint _before(self, Py_ssize_t i, Py_ssize_t j) except -1:
        cdef double wi = self._w[i]
        cdef double wj = self._w[j]
        if wi != wj:
            return wi > wj
        return self._s[i] < self._s[j]

    cdef inline void _swap(self, Py_ssize_t i, Py_ssize_t j):
        w, s, l = self._w, self._s, self._l
        w[i], w[j] = w[j], w[i]
        s[i], s[j] = s[j], s[i]
        l[i], l[j] = l[j], l[i]
        self._pos[s[i]] = i
        self._pos[s[j]] = j

    cdef int _up(self, Py_ssize_t i) except -1:
        cdef Py_ssize_t parent
        while i > 0:
            parent = (i - 1) >> 1
            if not self._before(i, parent):
                break
            self._swap(i, parent)
            i = parent
        return 0

    cdef int _down(self, Py_ssize_t i) except -1:
        cdef Py_ssize_t n = len(self._s)
        cdef Py_ssize_t best, c
        while True:
            best = i
            c = 2 * i + 1
            if c < n and self._before(c, best):
                best = c
            c = 2 * i + 2
            if c < n and self._before(c, best):
                best = c
            if best == i:
                return 0
            self._swap(i, best)
            i = best

    def insert(self, state, double w, double lbar=1.0):
        if state in self._pos:
            raise InternalError(f"state {state!r} already in heap")
        cdef Py_ssize_t i = len(self._s)
        self._w.append(w)
        self._s.append(state)
        self._l.append(lbar)
        self._pos[state] = i
        self._up(i)

    def update(self, state, double w, double lbar=1.0):
        i = self._pos.get(state)
        if i is None:
            raise InternalError(f"state {state!r} not in heap")
        cdef double old = self._w[i]
        self._w[i] = w
        self._l[i] = lbar
        if w > old:
            self._up(i)
        elif w < old:
            self._down(i)

    def get(self, state):
        i = self._pos.get(state)
        if i is None:
            return None
        return self._w[i], self._l[i]

    def pop_max(self):
        if not self._s:
            raise IndexError("pop from empty heap")
        cdef Py_ssize_t last = len(self._s) - 1
        if last:
            self._swap(0, last)
        w = self._w.pop()
        s = self._s.pop()
        l = self._l.pop()
        del self._pos[s]
        if self._s:
            self._down(0)
        return s, w, l

    def weights(self):
        return list(self._w)


# -- pPDA path sampler ------------------------------------------------------

cdef inline int _grow(uint8_t** stack, Py_ssize_t* cap, Py_ssize_t need) noexcept nogil:
    cdef Py_ssize_t c = cap[0]
    cdef uint8_t* p
    if need <= c:
        return 0
    while c < need:
        c *= 2
    p = <uint8_t*>realloc(stack[0], c)
    if p == NULL:
        return -1
    stack[0] = p
    cap[0] = c
    return 0


def sample_ppda(t, uint64_t seed, long long start, long long count, long long step_cap,
                double deadline=0.0):
    """Sample ``count`` paths over compiled tables; see the pure twin for the contract."""
    cdef int n_let = t.n_let
    cdef int n_cls = t.n_ctrl * t.n_let
    cdef const int64_t[::1] cls_start = t.cls_start
    cdef const int64_t[::1] r_to = t.r_to
    cdef const int64_t[::1] r_delta = t.r_delta
    cdef const int64_t[::1] r_push_off = t.r_push_off
    cdef const int64_t[::1] r_push_len = t.r_push_len
    cdef const int64_t[::1] push = t.push
    cdef const int64_t[::1] r_coef_off = t.r_coef_off
    cdef const int64_t[::1] r_coef_len = t.r_coef_len
    cdef const double[::1] coef = t.coef
    cdef const int64_t[::1] r_pushcnt = t.r_pushcnt
    cdef const int64_t[::1] tgt_empty = t.tgt_empty
    cdef const int64_t[::1] av_empty = t.av_empty
    cdef const int64_t[::1] init_stack = t.init_stack
    cdef const double[::1] kpow = t.kpow
    cdef int biased = t.biased
    cdef long long n0 = t.n0
    cdef int init_ctrl = t.init_ctrl
    cdef int maxr = t.max_rules
    cdef int n_contains = 0, n_absent = 0
    cdef int contains[256]
    cdef int absent[256]
    cdef int a
    for a in range(n_let):
        if t.av_contains[a]:
            contains[n_contains] = a
            n_contains += 1
        if t.av_absent[a]:
            absent[n_absent] = a
            n_absent += 1
    cdef bint use_cache = n_absent == 0
    cdef bint track = n_contains + n_absent > 0
    cdef Py_ssize_t n_rules = r_to.shape[0]
    cdef Py_ssize_t maxp = 1
    cdef Py_ssize_t ri, pi
    for ri in range(n_rules):
        if r_push_len[ri] > maxp:
            maxp = r_push_len[ri]
    cdef uint8_t* pushpad = <uint8_t*>calloc(max(1, n_rules) * maxp, 1)
    if pushpad == NULL:
        raise MemoryError()
    for ri in range(n_rules):
        for pi in range(r_push_len[ri]):
            pushpad[ri * maxp + pi] = <uint8_t>push[r_push_off[ri] + pi]
    cdef uint8_t* pb
    cdef long long ncache = NCACHE_MAX
    if n_cls * maxr * ncache > (1 << 22):
        ncache = max(64, (1 << 22) // max(1, n_cls * maxr))

    cdef long long hits = 0, avoids = 0, sinks = 0, capped = 0, steps = 0
    cdef long long err_ctrl = -1, err_top = -1, err_n = -1
    cdef Py_ssize_t cap = 1024
    cdef Py_ssize_t init_len = init_stack.shape[0]
    while cap < init_len + 8:
        cap *= 2
    cdef uint8_t* stack = <uint8_t*>malloc(cap)
    cdef int64_t* cnt = <int64_t*>calloc(n_let, sizeof(int64_t))
    cdef double* ws = <double*>malloc(max(1, maxr) * sizeof(double))
    cdef double* row_cum = <double*>malloc(max(1, maxr) * sizeof(double))
    cdef int32_t* row_rule = <int32_t*>malloc(max(1, maxr) * sizeof(int32_t))
    cdef double* c_cum = NULL
    cdef int32_t* c_rule = NULL
    cdef int32_t* c_len = NULL
    cdef uint8_t* c_state = NULL
    if use_cache:
        c_cum = <double*>malloc(n_cls * ncache * max(1, maxr) * sizeof(double))
        c_rule = <int32_t*>malloc(n_cls * ncache * max(1, maxr) * sizeof(int32_t))
        c_len = <int32_t*>malloc(n_cls * ncache * sizeof(int32_t))
        c_state = <uint8_t*>calloc(n_cls * ncache, 1)
    if stack == NULL or cnt == NULL or ws == NULL or row_cum == NULL or row_rule == NULL or (
            use_cache and (c_cum == NULL or c_rule == NULL or c_len == NULL or c_state == NULL)):
        free(stack); free(cnt); free(ws); free(row_cum); free(row_rule)
        free(c_cum); free(c_rule); free(c_len); free(c_state); free(pushpad)
        raise MemoryError()

    cdef long long idx, length, n, ex, m, e, lo, hi, r, i, o, kc, slot
    cdef uint64_t key, k
    cdef int ctrl, top, outcome, j, rlen, chosen, x, ai, st
    cdef bint bad, sink_open, oom = False, late = False
    cdef timespec ts
    cdef double u, fn, acc, total, cum
    cdef double* cums
    cdef int32_t* rules

    with nogil:
        for idx in range(start, start + count):
            key = _stream_key(seed, <uint64_t>idx)
            k = 0
            ctrl = init_ctrl
            for a in range(n_let):
                cnt[a] = 0
            n = init_len
            for i in range(init_len):
                stack[i] = <uint8_t>init_stack[i]
                cnt[init_stack[i]] += 1
            outcome = -1
            if n == 0:
                if tgt_empty[ctrl]:
                    outcome = HIT
                elif av_empty[ctrl]:
                    outcome = AVOID
                else:
                    outcome = CAPPED
            length = 0
            while outcome < 0:
                if step_cap and length >= step_cap:
                    outcome = CAPPED
                    break
                if deadline > 0.0 and length and (length & DEADLINE_MASK) == 0:
                    clock_gettime(CLOCK_MONOTONIC, &ts)
                    if ts.tv_sec + ts.tv_nsec * 1e-9 > deadline:
                        late = True
                        break
                top = stack[n - 1]
                kc = ctrl * n_let + top
                st = 0
                slot = -1
                if use_cache and n < ncache:
                    slot = kc * ncache + n
                    st = c_state[slot]
                if st == 0:
                    lo = cls_start[kc]
                    hi = cls_start[kc + 1]
                    if lo == hi:
                        outcome = CAPPED
                        break
                u = _uniform(key, k)
                k += 1
                if st:
                    cums = c_cum + slot * maxr
                    rules = c_rule + slot * maxr
                    rlen = c_len[slot]
                    sink_open = st == 2
                else:
                    if slot >= 0:
                        cums = c_cum + slot * maxr
                        rules = c_rule + slot * maxr
                    else:
                        cums = row_cum
                        rules = row_rule
                    fn = <double>n
                    total = 0.0
                    for r in range(lo, hi):
                        acc = 0.0
                        i = r_coef_off[r] + r_coef_len[r] - 1
                        while i >= r_coef_off[r]:
                            acc = acc * fn + coef[i]
                            i -= 1
                        ws[r - lo] = acc
                        total = total + acc
                    rlen = 0
                    cum = 0.0
                    if biased:
                        ex = n - n0 if n > n0 else 0
                        for r in range(lo, hi):
                            m = n + r_delta[r]
                            if m == 0:
                                if av_empty[r_to[r]]:
                                    continue
                            else:
                                bad = False
                                for ai in range(n_contains):
                                    a = contains[ai]
                                    if cnt[a] - (top == a) + r_pushcnt[r * n_let + a] > 0:
                                        bad = True
                                for ai in range(n_absent):
                                    a = absent[ai]
                                    if cnt[a] - (top == a) + r_pushcnt[r * n_let + a] == 0:
                                        bad = True
                                if bad:
                                    continue
                            e = (m - n0 if m > n0 else 0) - ex
                            cum = cum + ws[r - lo] / total * kpow[e + 1]
                            rules[rlen] = <int32_t>r
                            cums[rlen] = cum
                            rlen += 1
                        if cum > 1.0 + 1e-9:
                            err_ctrl = ctrl
                            err_top = top
                            err_n = n
                            break
                        sink_open = (1.0 - cum >= 1e-12) or rlen == 0
                    else:
                        for r in range(lo, hi):
                            cum = cum + ws[r - lo] / total
                            rules[rlen] = <int32_t>r
                            cums[rlen] = cum
                            rlen += 1
                        sink_open = False
                    if slot >= 0:
                        c_len[slot] = rlen
                        c_state[slot] = 2 if sink_open else 1
                # number of cumulative bounds <= u; equals the first j with
                # u < cums[j] because the bounds never decrease
                j = 0
                for i in range(rlen):
                    j += u >= cums[i]
                if j == rlen:
                    if sink_open:
                        outcome = SINK
                        length += 1
                        break
                    j = rlen - 1
                chosen = rules[j]
                n -= 1
                if n + maxp + 1 > cap:
                    if _grow(&stack, &cap, n + maxp + 1) < 0:
                        oom = True
                        break
                pb = pushpad + chosen * maxp
                for i in range(maxp):
                    stack[n + i] = pb[i]
                if track:
                    cnt[top] -= 1
                    for i in range(r_push_len[chosen]):
                        cnt[pb[i]] += 1
                n += r_push_len[chosen]
                ctrl = <int>r_to[chosen]
                length += 1
                if n == 0:
                    if tgt_empty[ctrl]:
                        outcome = HIT
                    elif av_empty[ctrl]:
                        outcome = AVOID
                    else:
                        outcome = CAPPED
                elif track:
                    for ai in range(n_contains):
                        if cnt[contains[ai]] > 0:
                            outcome = AVOID
                    for ai in range(n_absent):
                        if cnt[absent[ai]] == 0:
                            outcome = AVOID
            if err_ctrl >= 0 or oom or late:
                break
            steps += length
            if outcome == HIT:
                hits += 1
            elif outcome == AVOID:
                avoids += 1
            elif outcome == SINK:
                sinks += 1
            else:
                capped += 1

    free(stack); free(cnt); free(ws); free(row_cum); free(row_rule)
    free(c_cum); free(c_rule); free(c_len); free(c_state); free(pushpad)
    if oom:
        raise MemoryError("stack buffer exhausted")
    if err_ctrl >= 0:
        return hits, avoids, sinks, capped, steps, (err_ctrl, err_top, err_n)
    return hits, avoids, sinks, capped, steps, None
