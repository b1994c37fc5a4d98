"""Optional numba acceleration.

Hot kernels are decorated with :func:`njit`.  When numba is missing, or when
the environment variable ``WTQKD_DISABLE_NUMBA`` is set to a truthy value,
the decorator is a no-op and the same source runs as plain numpy/Python.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("WTQKD_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:
    _numba = None

NUMBA_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)
