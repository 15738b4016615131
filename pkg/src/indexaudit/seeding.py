"""Deterministic seed derivation for simulation work.

A master seed plus a path of integer indices is hashed into an independent
64-bit stream seed with the splitmix64 finalizer. Deriving rather than
incrementing means scenario k always gets the same generator no matter which
other scenarios run, in what order, or on how many threads, which is what
makes reports byte-identical across --jobs settings.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(state: int) -> int:
    z = (state + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Hash a master seed and an index path into one 64-bit seed."""
    state = master & _MASK
    state = _mix(state)
    for index in indices:
        state = _mix(state ^ (index & _MASK))
    return state


def generator(master: int, *indices: int) -> np.random.Generator:
    """A PCG64 generator seeded from :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *indices)))
