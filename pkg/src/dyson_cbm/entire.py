"""The entire functions ``Phi_xi^u`` and the determinantal martingale.

``Phi_xi^u(z)`` is the product over ``x in supp xi, x != u`` of
``1 - (z - u) / (x - u)``: it equals 1 at ``z = u`` and vanishes on the rest
of the support, so ``[Phi^{u_i}(u_j)]`` is the identity and
``det[Phi^{u_i}(z_j)] = h(z) / h(u)`` with ``h`` the Vandermonde product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel, _fallback, _kernels, linalg
from .configuration import Configuration, restrict, vandermonde
from .errors import DimensionMismatch, DivisionGuard, NotInSupport

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class PhiEvaluation:
    value: complex
    log_magnitude: float


@dataclass(frozen=True)
class PhiMatrix:
    entries: np.ndarray
    u: np.ndarray
    z: np.ndarray


def _label_index(xi, u):
    k = xi.index_of(u)
    if k < 0:
        raise NotInSupport(f"{u!r} is not a support point")
    return k


def _sorted_offsets(support, k):
    dx = np.delete(support, k) - support[k]
    return dx[np.argsort(np.abs(dx), kind="stable")]


def phi(xi: Configuration, u, z) -> PhiEvaluation:
    """``Phi_xi^u(z)`` with overflow-safe accumulation."""
    support = xi.array
    k = _label_index(xi, u)
    dx = _sorted_offsets(support, k)
    w = complex(z) - support[k]
    if dx.size == 0 or w == 0:
        return PhiEvaluation(1.0 + 0.0j, 0.0)
    if _accel.use_numba():
        mant, e = _kernels.phi_product(dx, w)
    else:
        with np.errstate(divide="ignore"):
            factors = (dx - w) / dx
        if np.any(factors == 0):
            mant, e = 0j, 0
        else:
            logs = np.log(factors.astype(complex)).sum()
            e = int(math.floor(logs.real / (512 * _LN2)))
            mant = complex(np.exp(logs - e * 512 * _LN2))
    if mant == 0:
        return PhiEvaluation(0j, -math.inf)
    log_mag = math.log(abs(mant)) + 512 * e * _LN2
    with np.errstate(over="ignore"):
        value = mant * np.float64(2.0) ** (512 * e) if e else mant
    return PhiEvaluation(complex(value), log_mag)


def phi_values(support, labels, zs):
    """``Phi^{support[labels[a]]}(zs[b])`` for a finite support, shape ``(len(labels), len(zs))``."""
    support = np.ascontiguousarray(support, dtype=float)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    zs = np.ascontiguousarray(np.ravel(zs), dtype=complex)
    if support.size == 1:
        return np.ones((labels.size, zs.size), dtype=complex)
    if _accel.use_numba():
        return _kernels.phi_values(support, labels, zs)
    return _fallback.phi_values(support, labels, zs)


def phi_matrix(xi: Configuration, z) -> PhiMatrix:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.shape != (xi.n,):
        raise DimensionMismatch(f"expected {xi.n} points, got shape {z.shape}")
    u = xi.array
    return PhiMatrix(phi_values(u, np.arange(xi.n), z), u, z)


def det_martingale(xi: Configuration, z) -> complex:
    m = phi_matrix(xi, z).entries
    if m.shape[0] == 1:
        return complex(m[0, 0])
    return complex(linalg.det(m))


def det_martingale_batch(u, z):
    """``det[Phi^{u_i}(z_j)]`` for a batch ``z`` of shape ``(P, n)``, small ``n``."""
    u = np.ascontiguousarray(u, dtype=float)
    z = np.ascontiguousarray(z, dtype=complex)
    if u.size == 1:
        return np.ones(z.shape[0], dtype=complex)
    if _accel.use_numba():
        return _kernels.det_martingale_batch(u, z)
    return _fallback.det_martingale_batch(u, z)


def vandermonde_ratio(u, z):
    """``h(z) / h(u)`` by direct pairwise products."""
    return vandermonde(np.asarray(z, dtype=complex)) / vandermonde(np.asarray(u, dtype=float))


def phi_truncation_sequence(spec, u, z, L_list):
    """``Phi^u`` of the windows ``spec ∩ [-L, L]`` for increasing ``L``."""
    L_list = list(L_list)
    if any(b <= a for a, b in zip(L_list, L_list[1:])):
        raise ValueError("L_list must be increasing")
    return [phi(restrict(spec, L), u, z).value for L in L_list]


def growth_bound_check(xi: Configuration, a, z, constants):
    """Compare ``|Phi^a(z)|`` with ``C exp{c(|a|^theta + |z|^theta)} |z/a|^{xi({0})} |a/(a-z)|``."""
    c, C, theta = constants
    z = complex(z)
    if abs(a - z) < 1e-12:
        raise DivisionGuard("z coincides with a")
    zero_mass = xi.count_at(0.0)
    lhs = abs(phi(xi, a, z).value)
    rhs = C * math.exp(c * (abs(a) ** theta + abs(z) ** theta))
    # |z/a|^m |a/(a-z)| written without dividing by a: finite at a = 0 when m = 1
    rhs *= abs(z) ** zero_mass * abs(a) ** (1 - zero_mass) / abs(a - z)
    return lhs, rhs, bool(lhs <= rhs)
