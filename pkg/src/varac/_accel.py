"""Numba switch.

Set ``VARAC_DISABLE_NUMBA=1`` (or ``VARAC_BACKEND=numpy``) to route every hot
loop through the numpy implementation. Without numba installed the numpy
path is used automatically.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_TRUTHY = {"1", "true", "yes", "on"}

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = (
    NUMBA_AVAILABLE
    and os.environ.get("VARAC_DISABLE_NUMBA", "").strip().lower() not in _TRUTHY
    and os.environ.get("VARAC_BACKEND", "numba").strip().lower() != "numpy"
)


def njit(fn):
    if NUMBA_AVAILABLE:
        return numba.njit(cache=True)(fn)
    return fn


def default_backend():
    return "numba" if NUMBA_ENABLED else "numpy"


def resolve_backend(backend=None):
    backend = default_backend() if backend is None else backend
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
