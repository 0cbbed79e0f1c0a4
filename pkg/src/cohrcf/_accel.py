"""Kernel backend selection.

Hot loops come in two flavours: a numba ``@njit`` version and a vectorised
numpy version.  The numba path is used when numba imports and the
``COHRCF_DISABLE_NUMBA`` environment variable is not set to a truthy value.
Both versions stay importable so tests and benchmarks can compare them.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

HAVE_NUMBA = numba is not None
NUMBA_DISABLED = os.environ.get("COHRCF_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}
USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


def njit(func):
    """Compile ``func`` with numba when available, else return it untouched."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
