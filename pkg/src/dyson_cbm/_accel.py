"""Backend selection for the hot kernels.

Kernels are written once in numba-compatible Python. With the numba backend
they are compiled with ``@njit``; with the numpy backend callers dispatch to
vectorized equivalents in :mod:`dyson_cbm._fallback`.

The backend is read from ``DYSON_CBM_BACKEND`` (``numba`` or ``numpy``) at
import time and can be switched at runtime with :func:`set_backend`.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_VALID = ("numba", "numpy")


def _initial_backend():
    name = os.environ.get("DYSON_CBM_BACKEND", "numba").strip().lower()
    if name not in _VALID:
        raise ValueError(f"DYSON_CBM_BACKEND must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name


_backend = _initial_backend()


def backend():
    return _backend


def use_numba():
    return _backend == "numba"


def set_backend(name):
    """Switch the kernel backend; returns the previous one."""
    global _backend
    name = name.lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not importable")
    previous, _backend = _backend, name
    return previous


def jit(fn):
    """``njit(cache=True, nogil=True)`` when numba is importable, identity otherwise."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
