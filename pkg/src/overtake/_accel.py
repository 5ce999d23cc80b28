"""Numba switch.

Hot kernels are compiled with numba when it is importable, unless the
environment variable ``OVERTAKE_DISABLE_NUMBA`` is set to a truthy value, in
which case the vectorised numpy implementations are used instead.  Both paths
implement the same algorithms and are tested against each other.
"""

import os

_FLAG = "OVERTAKE_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    if not HAVE_NUMBA:
        return False
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or an identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda fn: fn
