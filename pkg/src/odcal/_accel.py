"""Numba switch.

Hot kernels are decorated with :func:`jit`. Setting ``ODCAL_DISABLE_NUMBA=1``
in the environment (before import) makes :func:`jit` a no-op so every kernel
runs as plain Python/numpy. The undecorated function of a compiled kernel is
always reachable through its ``py_func`` attribute, which is what the
benchmark and the backend-equivalence tests use.
"""
import os

_FLAG = "ODCAL_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and os.environ.get(_FLAG, "").strip().lower() not in {
    "1",
    "true",
    "yes",
    "on",
}


def jit(fn):
    """Compile ``fn`` in nopython mode when numba is enabled."""
    if not NUMBA_ENABLED:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if NUMBA_ENABLED else "python"
