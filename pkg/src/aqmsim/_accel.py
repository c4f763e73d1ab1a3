"""numba switch.

Set ``AQMSIM_NUMBA=0`` before import to run every kernel on its pure
numpy/Python path. When numba is not importable the fallback is automatic.
"""
from __future__ import annotations

import os

_flag = os.environ.get("AQMSIM_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "no", "off")

try:
    if not NUMBA_REQUESTED:
        raise ImportError
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise the identity decorator."""
    if NUMBA_ENABLED:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
