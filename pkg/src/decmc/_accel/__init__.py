"""Hot kernels, compiled when possible.

The Cython extension ``_kernels`` is used when it imports; otherwise, or
when the environment variable ``DECMC_PURE=1`` is set, the pure-Python
twins from ``_pure`` are used.  Both produce identical results.
"""

import os

from . import _pure

_impl = _pure
COMPILED = False
if os.environ.get("DECMC_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        COMPILED = True
    except ImportError:  # extension not built
        _impl = _pure

BACKEND = "cython" if COMPILED else "python"

mix64 = _impl.mix64
stream_key = _impl.stream_key
uniform = _impl.uniform
ExactAccumulator = _impl.ExactAccumulator
UpdatableHeap = _impl.UpdatableHeap
exact_residual = _impl.exact_residual
sample_ppda = _impl.sample_ppda

__all__ = ["BACKEND", "COMPILED", "ExactAccumulator", "UpdatableHeap", "exact_residual",
           "mix64", "sample_ppda", "stream_key", "uniform"]
