"""Determinants and the Hermitian eigensolver behind the backend switch."""

import numpy as np

from . import _accel, _fallback, _kernels
from .errors import EigensolverNoConvergence

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def det(a):
    """Determinant of a square real or complex matrix (partial pivoting)."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("det expects a square matrix")
    if a.shape[0] == 0:
        return 1.0
    dtype = np.complex128 if np.iscomplexobj(a) else np.float64
    a = np.array(a, dtype=dtype, copy=True)
    if _accel.use_numba():
        return _kernels.det_inplace(a)
    return np.linalg.det(a)


def det_batch(mats):
    mats = np.asarray(mats)
    dtype = np.complex128 if np.iscomplexobj(mats) else np.float64
    mats = np.ascontiguousarray(mats, dtype=dtype)
    if _accel.use_numba():
        return _kernels.det_batch(mats)
    return _fallback.det_batch(mats)


def eigvalsh_jacobi(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Ascending eigenvalues of a Hermitian matrix by cyclic Jacobi."""
    a = np.array(a, dtype=np.complex128, copy=True)
    if _accel.use_numba():
        ev, sweeps = _kernels.jacobi_eigvalsh(a, tol, max_sweeps)
    else:
        ev, sweeps = _fallback.jacobi_eigvalsh_batch(a[None], tol, max_sweeps)
        ev = None if ev is None else ev[0]
    if sweeps < 0:
        raise EigensolverNoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    return ev
