"""Kernel backend selection.

Hot loops are written twice: a numba ``@njit`` version and a vectorised
pure-numpy version.  Set ``SURCMM_DISABLE_NUMBA=1`` before import to force
the numpy path (useful for debugging and for platforms without numba).
"""

import os

_flag = os.environ.get("SURCMM_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _flag not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """``numba.njit(cache=True)`` when numba is available, else a no-op.

    The numba-flavoured loop implementations stay importable either way so
    the tests can compare both paths in one process.
    """
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def pick(nb_impl, np_impl):
    return nb_impl if USE_NUMBA else np_impl
