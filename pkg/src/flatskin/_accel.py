"""Numba switch.

Set ``FLATSKIN_DISABLE_NUMBA=1`` to force the pure-numpy kernels (useful when
debugging or on platforms without numba). ``FLATSKIN_THREADS`` bounds the
worker pool used by the parameter sweeps.
"""
import os

_disabled = os.environ.get("FLATSKIN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(func=None, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if func is not None:
            return func
        return lambda f: f
    if func is not None:
        return _njit(**kwargs)(func)
    return _njit(**kwargs)


def thread_count():
    try:
        n = int(os.environ.get("FLATSKIN_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def backend():
    return "numba" if USE_NUMBA else "numpy"
