"""Compare the compiled kernels with their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Each kernel runs the same workload on both backends; the script checks that
the results are identical and prints the best-of-``repeat`` time and speedup.
"""

from __future__ import annotations

import argparse
import sys
import time
from math import ldexp

from decmc._accel import COMPILED, _pure
from decmc.abstraction import RandomWalkAbs
from decmc.ppda import load_bundled
from decmc.smc import KernelTables


def bench_sampler(mod, n: int):
    t = KernelTables(load_bundled("pta"), RandomWalkAbs(0.6, 8))
    return mod.sample_ppda(t, 1, 0, n, 10**6)


def bench_accumulator(mod, n: int):
    acc = mod.ExactAccumulator()
    x = 0.1
    for i in range(n):
        acc.add(ldexp(x, -(i % 300)))
    return acc.get_cells()


def bench_heap(mod, n: int):
    h = mod.UpdatableHeap()
    for i in range(n):
        h.insert(i, ((i * 7919) % 1000) / 1000.0)
    for i in range(0, n, 3):
        h.update(i, ((i * 104729) % 1000) / 1000.0)
    out = 0
    while len(h):
        out = (out * 31 + h.pop_max()[0]) % 1000003
    return out


def bench_streams(mod, n: int):
    key = mod.stream_key(7, 3)
    return sum(mod.uniform(key, k) for k in range(n))


KERNELS = [("sample_ppda (pta, IS)", bench_sampler, 20_000),
           ("ExactAccumulator.add", bench_accumulator, 200_000),
           ("UpdatableHeap", bench_heap, 50_000),
           ("uniform streams", bench_streams, 500_000)]


def best_time(fn, mod, n: int, repeat: int):
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(mod, n)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply every workload size")
    args = ap.parse_args(argv)
    if not COMPILED:
        print("compiled kernels are not built; run: python3 setup.py build_ext --inplace")
        return 1
    from decmc._accel import _kernels

    print(f"{'kernel':<24}{'n':>10}{'pure s':>10}{'compiled s':>12}{'speedup':>9}")
    for name, fn, n in KERNELS:
        n = max(1, int(n * args.scale))
        tp, rp = best_time(fn, _pure, n, args.repeat)
        tc, rc = best_time(fn, _kernels, n, args.repeat)
        if rp != rc:
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        print(f"{name:<24}{n:>10}{tp:>10.3f}{tc:>12.4f}{tp / tc:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
