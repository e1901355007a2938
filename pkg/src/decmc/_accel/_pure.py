"""Pure-Python twins of the compiled kernels.

Every function here performs the same binary64 operations in the same
order as its counterpart in ``_kernels.pyx``, so both produce identical
results.  They are used when the extension is missing or ``DECMC_PURE=1``.
"""

from __future__ import annotations

import time
from fractions import Fraction
from math import frexp, ldexp

from ..errors import DomainError, InternalError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
NCELLS = 512
MANT_LIMIT = 1 << 53
NCACHE = 4096
DEADLINE_STEPS = 1 << 16  # steps between clock reads inside one path
DEADLINE_MASK = DEADLINE_STEPS - 1

# sampler outcome codes
HIT, AVOID, SINK, CAPPED = 0, 1, 2, 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, index: int) -> int:
    return mix64(mix64(seed) ^ ((index * GOLDEN) & MASK64))


def uniform(key: int, k: int) -> float:
    """The ``k``-th uniform draw in ``[0, 1)`` of the stream ``key``."""
    return (mix64((key + (k + 1) * GOLDEN) & MASK64) >> 11) * (1.0 / 9007199254740992.0)


class ExactAccumulator:
    """Nonnegative dyadic sum held exactly in 512 integer cells.

    Cell ``i`` stands for ``cells[i] * 2**-i``.  A binary64 ``x`` is split
    into a 53-bit mantissa at its exponent cell; when a cell reaches
    ``2**53`` its high part is carried one cell toward larger values.
    Pieces finer than ``2**-511`` are truncated into the last cell and
    counted in ``underflow_count``.  With ``scale_exp = s`` every input
    is divided by ``2**s`` first, which admits values up to ``2**s``.
    """

    def __init__(self, scale_exp: int = 0):
        if scale_exp < 0:
            raise ValueError("scale_exp must be nonnegative")
        self.cells = [0] * NCELLS
        self.underflow_count = 0
        self.scale_exp = scale_exp

    def _add_mant(self, mant: int, u: int) -> None:
        if mant == 0:
            return
        if u < 0:
            raise DomainError("value too large for the accumulator")
        if u >= NCELLS:
            self.underflow_count += 1
            mant >>= u - (NCELLS - 1)
            u = NCELLS - 1
            if mant == 0:
                return
        cells = self.cells
        c = cells[u] + mant
        while c >= MANT_LIMIT and u > 0:
            cells[u] = c & 1
            u -= 1
            c = (c >> 1) + cells[u]
        if c >= (1 << 63):
            raise DomainError("accumulator overflow")
        cells[u] = c

    def add(self, x: float) -> None:
        if not 0.0 <= x <= ldexp(1.0, self.scale_exp):
            raise DomainError(f"accumulator input {x!r} outside [0, {2 ** self.scale_exp}]")
        if x == 0.0:
            return
        m, e = frexp(x)
        self._add_mant(int(ldexp(m, 53)), 53 - e + self.scale_exp)

    def add_dyadic(self, numer: int, k: int) -> None:
        """Add ``numer * 2**-k`` exactly (``numer >= 0``)."""
        if numer < 0:
            raise DomainError("negative dyadic input")
        k += self.scale_exp
        j = 0
        while numer:
            self._add_mant(numer & (MANT_LIMIT - 1), k - 53 * j)
            numer >>= 53
            j += 1

    def merge(self, other: "ExactAccumulator") -> None:
        if other.scale_exp != self.scale_exp:
            raise ValueError("cannot merge accumulators with different scales")
        for i, c in enumerate(other.cells):
            if c:
                self._add_mant(c, i)
        self.underflow_count += other.underflow_count

    def numerator(self) -> int:
        """Integer ``N`` with value ``N * 2**(scale_exp - 511)``."""
        n = 0
        for c in self.cells:
            n = (n << 1) + c
        return n

    def exact_value(self) -> Fraction:
        return Fraction(self.numerator() << self.scale_exp, 1 << (NCELLS - 1))

    def total(self) -> float:
        return ldexp(self.numerator() / (1 << (NCELLS - 1)), self.scale_exp)

    def get_cells(self) -> list:
        return list(self.cells)

    def is_empty(self) -> bool:
        return not any(self.cells)


def exact_residual(succ: ExactAccumulator, fail: ExactAccumulator) -> float:
    """``1 - succ - fail`` rounded once, from the exact cell contents."""
    if succ.scale_exp or fail.scale_exp:
        raise ValueError("residual needs unscaled accumulators")
    return ((1 << (NCELLS - 1)) - succ.numerator() - fail.numerator()) / (1 << (NCELLS - 1))


class UpdatableHeap:
    """Max-heap of ``(state, w, lbar)`` keyed on ``w`` with a state index.

    Equal weights pop in increasing state order.
    """

    def __init__(self):
        self._w: list = []
        self._s: list = []
        self._l: list = []
        self._pos: dict = {}

    def __len__(self) -> int:
        return len(self._s)

    def __contains__(self, state) -> bool:
        return state in self._pos

    def _before(self, i: int, j: int) -> bool:
        wi, wj = self._w[i], self._w[j]
        if wi != wj:
            return wi > wj
        return self._s[i] < self._s[j]

    def _swap(self, i: int, j: int) -> None:
        w, s, l = self._w, self._s, self._l
        w[i], w[j] = w[j], w[i]
        s[i], s[j] = s[j], s[i]
        l[i], l[j] = l[j], l[i]
        self._pos[s[i]] = i
        self._pos[s[j]] = j

    def _up(self, i: int) -> None:
        while i > 0:
            parent = (i - 1) >> 1
            if not self._before(i, parent):
                break
            self._swap(i, parent)
            i = parent

    def _down(self, i: int) -> None:
        n = len(self._s)
        while True:
            best = i
            for c in (2 * i + 1, 2 * i + 2):
                if c < n and self._before(c, best):
                    best = c
            if best == i:
                return
            self._swap(i, best)
            i = best

    def insert(self, state, w: float, lbar: float = 1.0) -> None:
        if state in self._pos:
            raise InternalError(f"state {state!r} already in heap")
        i = len(self._s)
        self._w.append(w)
        self._s.append(state)
        self._l.append(lbar)
        self._pos[state] = i
        self._up(i)

    def update(self, state, w: float, lbar: float = 1.0) -> None:
        i = self._pos.get(state)
        if i is None:
            raise InternalError(f"state {state!r} not in heap")
        old = self._w[i]
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
        last = len(self._s) - 1
        if last:
            self._swap(0, last)
        w, s, l = self._w.pop(), self._s.pop(), self._l.pop()
        del self._pos[s]
        if self._s:
            self._down(0)
        return s, w, l

    def weights(self) -> list:
        return list(self._w)


def sample_ppda(t, seed: int, start: int, count: int, step_cap: int, deadline: float = 0.0):
    """Sample ``count`` paths (indices ``start..start+count-1``) over compiled tables.

    Returns ``(hits, avoids, sinks, capped, steps, error)`` where ``error``
    is ``None`` or the ``(control, letter, n)`` class whose decreasing
    ratio exceeded one. A nonzero ``deadline`` (a ``time.monotonic`` value)
    is checked every ``DEADLINE_STEPS`` steps; once it passes, the path in
    progress is dropped and the counts cover fewer than ``count`` paths.
    """
    n_let = t.n_let
    cls_start, r_to, r_delta = t.cls_start, t.r_to, t.r_delta
    r_push_off, r_push_len, push = t.r_push_off, t.r_push_len, t.push
    r_coef_off, r_coef_len, coef = t.r_coef_off, t.r_coef_len, t.coef
    r_pushcnt = t.r_pushcnt
    tgt_empty, av_empty = t.tgt_empty, t.av_empty
    contains = [a for a in range(n_let) if t.av_contains[a]]
    absent = [a for a in range(n_let) if t.av_absent[a]]
    biased, n0, kpow = t.biased, t.n0, t.kpow
    use_cache = not absent
    cache: dict = {}
    hits = avoids = sinks = capped = steps = 0
    for idx in range(start, start + count):
        key = stream_key(seed, idx)
        k = 0
        ctrl = t.init_ctrl
        stack = list(t.init_stack)
        cnt = [0] * n_let
        for x in stack:
            cnt[x] += 1
        outcome = -1
        if not stack:
            outcome = HIT if tgt_empty[ctrl] else (AVOID if av_empty[ctrl] else CAPPED)
        length = 0
        while outcome < 0:
            if step_cap and length >= step_cap:
                outcome = CAPPED
                break
            if deadline and not length & DEADLINE_MASK and length and time.monotonic() > deadline:
                return hits, avoids, sinks, capped, steps, None
            n = len(stack)
            top = stack[-1]
            kc = ctrl * n_let + top
            lo, hi = cls_start[kc], cls_start[kc + 1]
            if lo == hi:
                outcome = CAPPED
                break
            u = uniform(key, k)
            k += 1
            ck = (kc, n)
            row = cache.get(ck) if use_cache else None
            if row is None:
                fn = float(n)
                ws = []
                total = 0.0
                for r in range(lo, hi):
                    acc = 0.0
                    for i in range(r_coef_off[r] + r_coef_len[r] - 1, r_coef_off[r] - 1, -1):
                        acc = acc * fn + coef[i]
                    ws.append(acc)
                    total += acc
                rules = []
                cums = []
                cum = 0.0
                if biased:
                    ex = n - n0 if n > n0 else 0
                    for j, r in enumerate(range(lo, hi)):
                        m = n + r_delta[r]
                        if m == 0:
                            if av_empty[r_to[r]]:
                                continue
                        else:
                            bad = False
                            base = r * n_let
                            for a in contains:
                                if cnt[a] - (top == a) + r_pushcnt[base + a] > 0:
                                    bad = True
                            for a in absent:
                                if cnt[a] - (top == a) + r_pushcnt[base + a] == 0:
                                    bad = True
                            if bad:
                                continue
                        e = (m - n0 if m > n0 else 0) - ex
                        cum += ws[j] / total * kpow[e + 1]
                        rules.append(r)
                        cums.append(cum)
                    if cum > 1.0 + 1e-9:
                        return hits, avoids, sinks, capped, steps, (ctrl, top, n)
                    sink_open = 1.0 - cum >= 1e-12 or not rules
                else:
                    for j, r in enumerate(range(lo, hi)):
                        cum += ws[j] / total
                        rules.append(r)
                        cums.append(cum)
                    sink_open = False
                row = (rules, cums, sink_open)
                if use_cache and n < NCACHE:
                    cache[ck] = row
            rules, cums, sink_open = row
            chosen = -1
            for j in range(len(rules)):
                if u < cums[j]:
                    chosen = rules[j]
                    break
            if chosen < 0:
                if sink_open:
                    outcome = SINK
                    length += 1
                    break
                chosen = rules[-1]
            stack.pop()
            cnt[top] -= 1
            o = r_push_off[chosen]
            for i in range(o, o + r_push_len[chosen]):
                x = push[i]
                stack.append(x)
                cnt[x] += 1
            ctrl = r_to[chosen]
            length += 1
            if not stack:
                if tgt_empty[ctrl]:
                    outcome = HIT
                elif av_empty[ctrl]:
                    outcome = AVOID
                else:
                    outcome = CAPPED
            else:
                for a in contains:
                    if cnt[a] > 0:
                        outcome = AVOID
                for a in absent:
                    if cnt[a] == 0:
                        outcome = AVOID
        steps += length
        if outcome == HIT:
            hits += 1
        elif outcome == AVOID:
            avoids += 1
        elif outcome == SINK:
            sinks += 1
        else:
            capped += 1
    return hits, avoids, sinks, capped, steps, None
