"""Numba backend: the loop sources compiled with @njit."""

from numba import njit

from . import _loops

_opts = dict(cache=True, nogil=True)

expected_next_value = njit(**_opts)(_loops.expected_next_value)
backup = njit(**_opts)(_loops.backup)
belief_successors = njit(**_opts)(_loops.belief_successors)
noncausal_value = njit(**_opts)(_loops.noncausal_value)
simulate_steps = njit(**_opts)(_loops.simulate_steps)
