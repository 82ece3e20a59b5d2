"""Kernel backend selection.

The numba backend is the default; set EHALLOC_DISABLE_NUMBA=1 (or if
numba is not importable) to fall back to the pure-numpy implementations.
Both backends expose the same functions and are interchangeable; see
benchmarks/bench_kernels.py for a speed comparison.
"""

import os

from . import numpy_impl

_flag = os.environ.get("EHALLOC_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes", "on"}

if NUMBA_DISABLED:
    _active = numpy_impl
    USING_NUMBA = False
else:
    try:
        from . import numba_impl as _active
        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _active = numpy_impl
        USING_NUMBA = False

expected_next_value = _active.expected_next_value
backup = _active.backup
belief_successors = _active.belief_successors
noncausal_value = _active.noncausal_value
simulate_steps = _active.simulate_steps

__all__ = [
    "USING_NUMBA",
    "NUMBA_DISABLED",
    "numpy_impl",
    "expected_next_value",
    "backup",
    "belief_successors",
    "noncausal_value",
    "simulate_steps",
]
