"""Independent reference values for the bundled pushdown models.

Each stack letter pushed at height ``n`` is eventually popped with some
probability; these satisfy a recursion over heights that we iterate from
zero (the least fixed point) with letters above height ``H`` never popped.
The cutoff makes every iterate a lower bound, and doubling ``H`` leaves the
result unchanged to double precision.
"""

import numpy as np


def _iterate(step, H: int, tol: float = 1e-16, max_iter: int = 100_000):
    n = np.arange(1, H + 1, dtype=float)
    vals = None
    for _ in range(max_iter):
        new = step(n, vals)
        if vals is not None and max(np.max(np.abs(x - y)) for x, y in zip(new, vals)) < tol:
            return new
        vals = new
    raise RuntimeError("height recursion did not converge")


def _up(x):
    return np.append(x[1:], 0.0)


def pta_reach(H: int = 400) -> float:
    """Probability that the pta model empties its stack from ``A``."""
    def step(n, v):
        a, b = v if v is not None else (np.zeros(len(n)), np.zeros(len(n)))
        b = 5 / (5 + n) + n / (5 + n) * _up(a) * a
        a = n / (1 + n) * _up(b) * b
        return a, b
    return float(_iterate(step, H)[0][0])


def pta7_reach(H: int = 400) -> float:
    """Probability that the pta7 model empties its stack from its initial letter."""
    def step(n, v):
        a, b, c = v if v is not None else (np.zeros(len(n)),) * 3
        b = 10 / (20 + n) + (10 + n) / (20 + n) * _up(a) * a
        c = 10 / (20 + n) * a + (10 + n) / (20 + n) * _up(b) * b
        a = (b + c) / 2
        return a, b, c
    return float(_iterate(step, H)[0][0])
