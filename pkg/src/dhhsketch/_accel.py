"""Numba switch.

Set ``DHHSKETCH_DISABLE_NUMBA=1`` to run every kernel as plain Python over
numpy arrays. The kernels are written in the subset of Python that numba
compiles, so both paths execute the same source.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("DHHSKETCH_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False


def maybe_njit(func):
    """Compile ``func`` with numba when enabled; return it untouched otherwise.

    The original Python function stays reachable as ``.py_func`` either way,
    which the parity tests and the benchmark rely on.
    """
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(func)
    func.py_func = func
    return func
