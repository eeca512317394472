"""Backend selection for the compiled kernels.

Numba is used when it is importable and ``FDAUDIT_DISABLE_NUMBA`` is unset or
``0``. Setting the variable to ``1`` forces the pure-numpy path, which computes
identical results (up to floating point summation order).
"""
import os

_DISABLED = os.environ.get("FDAUDIT_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by FDAUDIT_DISABLE_NUMBA")
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:
    _numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` with numba when available, else return ``None``."""
    if _numba is None:
        return None
    return _numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


def numba_version():
    return None if _numba is None else _numba.__version__
