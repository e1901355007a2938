"""Counter-based random streams.

Path ``i`` of a run seeded with ``seed`` draws from its own stream whose
key is a hash of ``(seed, i)``; draw ``k`` is a hash of ``(key, k)``.  A
path's randomness therefore does not depend on which worker samples it
or in what order.
"""

from __future__ import annotations

from ._accel import mix64, stream_key, uniform

SEED_MASK = (1 << 64) - 1


def normalize_seed(seed: int) -> int:
    if seed < 0 or seed > SEED_MASK:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return int(seed)


class PathStream:
    """Uniform draws for one path; ``random()`` returns a float in ``[0, 1)``."""

    __slots__ = ("key", "count")

    def __init__(self, seed: int, index: int):
        self.key = stream_key(seed, index)
        self.count = 0

    def random(self) -> float:
        u = uniform(self.key, self.count)
        self.count += 1
        return u


__all__ = ["PathStream", "mix64", "normalize_seed", "stream_key", "uniform"]
