"""Numba dispatch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when available. Setting ``MUONLAB_DISABLE_NUMBA=1`` (or running
without numba installed) selects the vectorized numpy fallbacks instead.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("MUONLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(func):
    """``numba.njit(cache=True)`` if numba is importable, else identity."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
