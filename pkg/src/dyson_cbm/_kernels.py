"""Compiled inner loops.

Every function here is plain numba-compatible Python decorated with
:func:`dyson_cbm._accel.jit`. Public modules choose between these and the
vectorized versions in :mod:`dyson_cbm._fallback` via the backend flag.
"""

import math

import numpy as np

from ._accel import jit

#: running products are rescaled when their modulus leaves [2**-512, 2**512]
RESCALE_EXP = 512
_BIG = 2.0**RESCALE_EXP
_SMALL = 2.0**-RESCALE_EXP

STATUS_OK = 0
STATUS_BREAKDOWN = 1
STATUS_STACK = 2

_STACK_DEPTH = 64
# adaptive mode refuses steps that shrink any gap below this fraction
SHRINK_LIMIT = 0.5


@jit
def phi_product(dx, w):
    """Product of ``1 - w / dx[k]``, as ``(dx[k] - w) / dx[k]``, with binary rescaling.

    Returns ``(mantissa, e)`` with value ``mantissa * 2**(512 * e)``.
    """
    p = 1.0 + 0.0j
    e = 0
    for k in range(dx.shape[0]):
        p *= (dx[k] - w) / dx[k]
        m = abs(p)
        if m == 0.0:
            return 0.0 + 0.0j, 0
        if m > _BIG:
            p *= _SMALL
            e += 1
        elif m < _SMALL:
            p *= _BIG
            e -= 1
    return p, e


#: above this support size the shared-numerator form is used
FACTORIZED_MIN = 32


@jit
def _rescale(p, e):
    m = abs(p.real) + abs(p.imag)
    while m > _BIG:
        p *= _SMALL
        e += 1
        m *= _SMALL
    while 0.0 < m < _SMALL:
        p *= _BIG
        e -= 1
        m *= _BIG
    return p, e


@jit
def _phi_values_factorized(support, v_index, zs):
    """``Phi^v(z) = P(z) / ((v - z) P'(v))`` with ``P(z) = prod_x (x - z)``.

    ``P`` is shared by all labels, so the cost is ``O(n (nz + nv))``. Pairs
    with ``z == v`` fall back to the direct product.
    """
    nv = v_index.shape[0]
    nz = zs.shape[0]
    n = support.shape[0]
    pm = np.empty(nz, dtype=np.complex128)
    pe = np.empty(nz, dtype=np.int64)
    for b in range(nz):
        p = 1.0 + 0.0j
        e = 0
        for k in range(n):
            p *= support[k] - zs[b]
            if (k & 7) == 7:
                p, e = _rescale(p, e)
        pm[b], pe[b] = _rescale(p, e)
    out = np.empty((nv, nz), dtype=np.complex128)
    for a in range(nv):
        i = v_index[a]
        v = support[i]
        d = 1.0 + 0.0j
        de = 0
        for k in range(n):
            if k != i:
                d *= support[k] - v
                if (k & 7) == 7:
                    d, de = _rescale(d, de)
        d, de = _rescale(d, de)
        for b in range(nz):
            w = v - zs[b]
            if w == 0:
                out[a, b] = 1.0
                continue
            q = pm[b] / (w * d)
            e = pe[b] - de
            out[a, b] = q * 2.0 ** (RESCALE_EXP * e) if e != 0 else q
    return out


@jit
def phi_values(support, v_index, zs):
    """``Phi^{v}(z)`` for every label ``support[v_index[a]]`` and every ``zs[b]``.

    Small supports multiply factors directly in ascending ``|x - v|`` order.
    """
    if support.shape[0] > FACTORIZED_MIN:
        return _phi_values_factorized(support, v_index, zs)
    nv = v_index.shape[0]
    nz = zs.shape[0]
    n = support.shape[0]
    out = np.empty((nv, nz), dtype=np.complex128)
    dx = np.empty(n - 1)
    for a in range(nv):
        i = v_index[a]
        u = support[i]
        # factors sorted by |x - u|: walk outward from i
        lo = i - 1
        hi = i + 1
        k = 0
        while lo >= 0 or hi < n:
            if hi >= n or (lo >= 0 and u - support[lo] <= support[hi] - u):
                dx[k] = support[lo] - u
                lo -= 1
            else:
                dx[k] = support[hi] - u
                hi += 1
            k += 1
        for b in range(nz):
            p, e = phi_product(dx, zs[b] - u)
            if e != 0:
                p = p * 2.0 ** (RESCALE_EXP * e)
            out[a, b] = p
    return out


@jit
def det_inplace(a):
    """Determinant by Gaussian elimination with partial pivoting on modulus.

    Overwrites ``a``.
    """
    n = a.shape[0]
    det = a[0, 0] * 0.0 + 1.0
    for k in range(n):
        piv = k
        best = abs(a[k, k])
        for r in range(k + 1, n):
            m = abs(a[r, k])
            if m > best:
                best = m
                piv = r
        if best == 0.0:
            return det * 0.0
        if piv != k:
            for c in range(n):
                tmp = a[k, c]
                a[k, c] = a[piv, c]
                a[piv, c] = tmp
            det = -det
        pk = a[k, k]
        det = det * pk
        for r in range(k + 1, n):
            f = a[r, k] / pk
            if f != 0.0:
                for c in range(k + 1, n):
                    a[r, c] -= f * a[k, c]
    return det


@jit
def det_batch(mats):
    """Determinants of a stack ``(P, n, n)``; the input is left untouched."""
    P = mats.shape[0]
    out = np.empty(P, dtype=mats.dtype)
    for p in range(P):
        out[p] = det_inplace(mats[p].copy())
    return out


@jit
def _drift(x, out):
    n = x.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            if j != i:
                s += 1.0 / (x[i] - x[j])
        out[i] = s


@jit
def _min_gap(x):
    g = np.inf
    for i in range(x.shape[0] - 1):
        d = x[i + 1] - x[i]
        if d < g:
            g = d
    return g


@jit
def sde_paths(x0, times, h_max, dt_min, adaptive, gap_factor, rng, out, status):
    """Euler-Maruyama for the beta=2 Dyson SDE, one path at a time.

    ``out`` has shape ``(P, K, n)``. In adaptive mode the step is halved while
    ``h > gap_factor * g**2``; a step that breaks the ordering, or shrinks a
    gap below ``SHRINK_LIMIT`` of its size, is split with a Brownian bridge
    (the driving path is unchanged) until it succeeds or the step would fall
    below ``dt_min``. Breakdown paths get ``status = 1`` and
    NaN for the remaining states.
    """
    P = out.shape[0]
    K = times.shape[0]
    n = x0.shape[0]
    x = np.empty(n)
    xn = np.empty(n)
    b = np.empty(n)
    stack_h = np.empty(_STACK_DEPTH)
    stack_dB = np.empty((_STACK_DEPTH, n))
    for p in range(P):
        x[:] = x0
        out[p, 0, :] = x0
        status[p] = STATUS_OK
        t = times[0]
        for k in range(1, K):
            target = times[k]
            eps = 1e-13 * max(1.0, abs(target))
            while target - t > eps and status[p] == STATUS_OK:
                h = min(h_max, target - t)
                if adaptive and n > 1:
                    g = _min_gap(x)
                    while h > gap_factor * g * g and 0.5 * h >= dt_min:
                        h *= 0.5
                sq = math.sqrt(h)
                for i in range(n):
                    stack_dB[0, i] = sq * rng.standard_normal()
                stack_h[0] = h
                top = 1
                while top > 0:
                    top -= 1
                    hh = stack_h[top]
                    _drift(x, b)
                    ordered = True
                    gentle = True
                    for i in range(n):
                        xn[i] = x[i] + b[i] * hh + stack_dB[top, i]
                        if i > 0:
                            if not xn[i] > xn[i - 1]:
                                ordered = False
                            if xn[i] - xn[i - 1] < SHRINK_LIMIT * (x[i] - x[i - 1]):
                                gentle = False
                    floor = 0.5 * hh < dt_min
                    if ordered and (gentle or not adaptive or floor):
                        x[:] = xn
                        continue
                    if not adaptive or floor:
                        status[p] = STATUS_BREAKDOWN
                        break
                    if top + 2 > _STACK_DEPTH:
                        status[p] = STATUS_STACK
                        break
                    qs = 0.5 * math.sqrt(hh)
                    for i in range(n):
                        d1 = 0.5 * stack_dB[top, i] + qs * rng.standard_normal()
                        stack_dB[top + 1, i] = d1
                        stack_dB[top, i] = stack_dB[top, i] - d1
                    stack_h[top] = 0.5 * hh
                    stack_h[top + 1] = 0.5 * hh
                    top += 2
                t += h
            if status[p] != STATUS_OK:
                for kk in range(k, K):
                    out[p, kk, :] = np.nan
                break
            out[p, k, :] = x


@jit
def jacobi_eigvalsh(a, tol, max_sweeps):
    """Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations.

    Overwrites ``a``. Returns ``(sorted eigenvalues, sweeps)``; ``sweeps`` is
    -1 if the off-diagonal Frobenius mass did not drop below ``tol`` in time.
    """
    n = a.shape[0]
    sweeps = 0
    while True:
        off = 0.0
        frob = 0.0
        for i in range(n):
            frob += a[i, i].real ** 2
            for j in range(i + 1, n):
                m = a[i, j].real ** 2 + a[i, j].imag ** 2
                off += 2.0 * m
                frob += 2.0 * m
        if math.sqrt(off) < tol * max(1.0, math.sqrt(frob)):
            break
        if sweeps >= max_sweeps:
            sweeps = -1
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                ph = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                phc = ph.conjugate()
                # V = [[c, s], [-s * conj(ph), c * conj(ph)]] on (p, q); A <- V^H A V
                for r in range(n):
                    if r == p or r == q:
                        continue
                    arp = a[r, p]
                    arq = a[r, q]
                    nrp = c * arp - s * phc * arq
                    nrq = s * arp + c * phc * arq
                    a[r, p] = nrp
                    a[r, q] = nrq
                    a[p, r] = nrp.conjugate()
                    a[q, r] = nrq.conjugate()
                a[p, p] = app - t * mag
                a[q, q] = aqq + t * mag
                a[p, q] = 0.0
                a[q, p] = 0.0
    ev = np.empty(n)
    for i in range(n):
        ev[i] = a[i, i].real
    ev.sort()
    return ev, sweeps


@jit
def gue_paths(u, times, rng, tol, max_sweeps, out):
    """Eigenvalue paths of ``diag(u) + Hermitian BM``; returns -1 on eigensolver failure."""
    P = out.shape[0]
    K = times.shape[0]
    n = u.shape[0]
    h = np.zeros((n, n), dtype=np.complex128)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    worst = 0
    for p in range(P):
        h[:, :] = 0.0
        for i in range(n):
            h[i, i] = u[i]
        out[p, 0, :] = u
        for k in range(1, K):
            sd = math.sqrt(times[k] - times[k - 1])
            for i in range(n):
                h[i, i] += sd * rng.standard_normal()
                for j in range(i + 1, n):
                    re = sd * inv_sqrt2 * rng.standard_normal()
                    im = sd * inv_sqrt2 * rng.standard_normal()
                    h[i, j] += complex(re, im)
                    h[j, i] = h[i, j].conjugate()
            ev, sw = jacobi_eigvalsh(h.copy(), tol, max_sweeps)
            if sw < 0:
                return -1
            if sw > worst:
                worst = sw
            out[p, k, :] = ev
    return worst


@jit
def phi_matrix_batch(u, z):
    """``[Phi^{u_i}(z_j)]`` for a batch of complex vectors ``z`` of shape ``(P, n)``.

    Uses the ratio form ``prod_{k != i} (u_k - z) / (u_k - u_i)``; intended
    for small ``n`` where no rescaling is needed.
    """
    P = z.shape[0]
    n = u.shape[0]
    out = np.empty((P, n, n), dtype=np.complex128)
    for p in range(P):
        for i in range(n):
            for j in range(n):
                acc = 1.0 + 0.0j
                zj = z[p, j]
                for k in range(n):
                    if k != i:
                        acc *= (u[k] - zj) / (u[k] - u[i])
                out[p, i, j] = acc
    return out


@jit
def det_martingale_batch(u, z):
    P = z.shape[0]
    n = u.shape[0]
    out = np.empty(P, dtype=np.complex128)
    m = np.empty((n, n), dtype=np.complex128)
    for p in range(P):
        for i in range(n):
            for j in range(n):
                acc = 1.0 + 0.0j
                zj = z[p, j]
                for k in range(n):
                    if k != i:
                        acc *= (u[k] - zj) / (u[k] - u[i])
                m[i, j] = acc
        out[p] = det_inplace(m)
    return out
