"""Vectorized numpy counterparts of :mod:`dyson_cbm._kernels`.

Same contracts, batched over paths instead of looping. Random draws come
from the same generator but in a different order, so the two backends agree
statistically, not bitwise.
"""

import numpy as np

from ._kernels import FACTORIZED_MIN, SHRINK_LIMIT, STATUS_BREAKDOWN, STATUS_OK, STATUS_STACK, _STACK_DEPTH


def phi_values(support, v_index, zs, chunk=4096):
    support = np.asarray(support, dtype=float)
    zs = np.asarray(zs, dtype=complex)
    if support.size > FACTORIZED_MIN:
        return _phi_values_factorized(support, v_index, zs, chunk)
    out = np.empty((len(v_index), zs.size), dtype=complex)
    for a, i in enumerate(v_index):
        u = support[i]
        dx = np.delete(support, i) - u
        w = zs - u
        logp = np.zeros(zs.size, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for lo in range(0, dx.size, chunk):
                logp += np.log((dx[None, lo : lo + chunk] - w[:, None]) / dx[None, lo : lo + chunk]).sum(axis=1)
            out[a] = np.exp(logp)
        out[a, w == 0] = 1.0
    return out


def _phi_values_factorized(support, v_index, zs, chunk):
    """Log-space version of the shared-numerator form ``P(z) / ((v - z) P'(v))``."""
    log_p = np.zeros(zs.size, dtype=complex)
    with np.errstate(divide="ignore"):
        for lo in range(0, support.size, chunk):
            log_p += np.log(support[None, lo : lo + chunk] - zs[:, None]).sum(axis=1)
    out = np.empty((len(v_index), zs.size), dtype=complex)
    for a, i in enumerate(v_index):
        v = support[i]
        others = np.delete(support, i) - v
        log_d = np.log(np.abs(others)).sum() + 1j * np.pi * np.count_nonzero(others < 0)
        w = v - zs
        hit = w == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out[a] = np.exp(log_p - np.log(w) - log_d)
        out[a, hit] = 1.0
        # z on another support point: P(z) = 0
        out[a, ~hit & np.isneginf(log_p.real)] = 0.0
    return out


def det_batch(mats):
    return np.linalg.det(mats)


def phi_matrix_batch(u, z):
    u = np.asarray(u, dtype=float)
    n = u.size
    out = np.empty(z.shape[:1] + (n, n), dtype=complex)
    for i in range(n):
        others = np.delete(u, i)
        num = others[None, None, :] - z[:, :, None]
        out[:, i, :] = np.prod(num / (others - u[i]), axis=-1)
    return out


def det_martingale_batch(u, z):
    return np.linalg.det(phi_matrix_batch(u, z))


def _drift(x):
    d = x[:, :, None] - x[:, None, :]
    n = x.shape[1]
    d[:, np.arange(n), np.arange(n)] = np.inf
    return (1.0 / d).sum(axis=2)


def sde_paths(x0, times, h_max, dt_min, adaptive, gap_factor, rng, out, status):
    """All paths advance together; each keeps its own clock and step stack."""
    P, K, n = out.shape
    x = np.repeat(np.asarray(x0, dtype=float)[None, :], P, axis=0)
    out[:, 0, :] = x0
    status[:] = STATUS_OK
    t = np.full(P, float(times[0]))
    stack_h = np.zeros((P, _STACK_DEPTH))
    stack_dB = np.zeros((P, _STACK_DEPTH, n))
    top = np.zeros(P, dtype=np.int64)
    pending = np.zeros(P)  # size of the top-level step being worked off
    rows = np.arange(P)
    for k in range(1, K):
        target = float(times[k])
        eps = 1e-13 * max(1.0, abs(target))
        while True:
            alive = status == STATUS_OK
            fresh = alive & (top == 0) & (target - t > eps)
            busy = alive & (top > 0)
            if not (fresh.any() or busy.any()):
                break
            if fresh.any():
                idx = rows[fresh]
                h = np.minimum(h_max, target - t[idx])
                if adaptive and n > 1:
                    g = np.min(np.diff(x[idx], axis=1), axis=1)
                    while True:
                        shrink = (h > gap_factor * g * g) & (0.5 * h >= dt_min)
                        if not shrink.any():
                            break
                        h = np.where(shrink, 0.5 * h, h)
                stack_h[idx, 0] = h
                stack_dB[idx, 0, :] = np.sqrt(h)[:, None] * rng.standard_normal((idx.size, n))
                top[idx] = 1
                pending[idx] = h
            idx = rows[(status == STATUS_OK) & (top > 0)]
            top[idx] -= 1
            ti = top[idx]
            hh = stack_h[idx, ti]
            dB = stack_dB[idx, ti, :]
            xn = x[idx] + _drift(x[idx]) * hh[:, None] + dB
            if n > 1:
                gaps = np.diff(xn, axis=1)
                ordered = np.all(gaps > 0, axis=1)
                gentle = np.all(gaps >= SHRINK_LIMIT * np.diff(x[idx], axis=1), axis=1)
                ok = ordered & (gentle | (not adaptive) | (0.5 * hh < dt_min))
            else:
                ok = np.ones(idx.size, bool)
            acc = idx[ok]
            x[acc] = xn[ok]
            done = acc[top[acc] == 0]
            t[done] += pending[done]
            bad = idx[~ok]
            if bad.size:
                hb = stack_h[bad, top[bad]]
                fail = (not adaptive) | (0.5 * hb < dt_min)
                status[bad[fail]] = STATUS_BREAKDOWN
                over = ~fail & (top[bad] + 2 > _STACK_DEPTH)
                status[bad[over]] = STATUS_STACK
                split = bad[~fail & ~over]
                if split.size:
                    ts = top[split]
                    h0 = stack_h[split, ts]
                    d0 = stack_dB[split, ts, :]
                    d1 = 0.5 * d0 + 0.5 * np.sqrt(h0)[:, None] * rng.standard_normal((split.size, n))
                    stack_dB[split, ts, :] = d0 - d1
                    stack_dB[split, ts + 1, :] = d1
                    stack_h[split, ts] = 0.5 * h0
                    stack_h[split, ts + 1] = 0.5 * h0
                    top[split] = ts + 2
        out[:, k, :] = x
        dead = status != STATUS_OK
        out[dead, k, :] = np.nan


def jacobi_eigvalsh_batch(a, tol, max_sweeps):
    """Batched cyclic Jacobi; returns ``(eigenvalues (P, n), sweeps)``, sweeps -1 on failure."""
    a = np.array(a, dtype=complex, copy=True)
    P, n, _ = a.shape
    sweeps = 0
    iu = np.triu_indices(n, 1)
    while True:
        off = 2.0 * np.sum(np.abs(a[:, iu[0], iu[1]]) ** 2, axis=1)
        frob = np.sum(np.abs(a) ** 2, axis=(1, 2))
        if np.all(np.sqrt(off) < tol * np.maximum(1.0, np.sqrt(frob))):
            break
        if sweeps >= max_sweeps:
            return None, -1
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                mag = np.abs(apq)
                nz = mag > 0
                safe = np.where(nz, mag, 1.0)
                ph = np.where(nz, apq / safe, 1.0)
                app = a[:, p, p].real.copy()
                aqq = a[:, q, q].real.copy()
                tau = (aqq - app) / (2.0 * safe)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(nz, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                phc = np.conj(ph)
                arp = a[:, :, p].copy()
                arq = a[:, :, q].copy()
                nrp = c[:, None] * arp - (s * phc)[:, None] * arq
                nrq = s[:, None] * arp + (c * phc)[:, None] * arq
                a[:, :, p] = nrp
                a[:, :, q] = nrq
                a[:, p, :] = np.conj(nrp)
                a[:, q, :] = np.conj(nrq)
                a[:, p, p] = app - t * mag
                a[:, q, q] = aqq + t * mag
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
    ev = np.sort(np.real(np.diagonal(a, axis1=1, axis2=2)), axis=1)
    return ev, sweeps


def gue_paths(u, times, rng, tol, max_sweeps, out):
    P, K, n = out.shape
    u = np.asarray(u, dtype=float)
    h = np.zeros((P, n, n), dtype=complex)
    h[:, np.arange(n), np.arange(n)] = u
    out[:, 0, :] = u
    iu = np.triu_indices(n, 1)
    worst = 0
    for k in range(1, K):
        sd = np.sqrt(times[k] - times[k - 1])
        h[:, np.arange(n), np.arange(n)] += sd * rng.standard_normal((P, n))
        if iu[0].size:
            m = iu[0].size
            inc = sd / np.sqrt(2.0) * (rng.standard_normal((P, m)) + 1j * rng.standard_normal((P, m)))
            h[:, iu[0], iu[1]] += inc
            h[:, iu[1], iu[0]] = np.conj(h[:, iu[0], iu[1]])
        ev, sw = jacobi_eigvalsh_batch(h, tol, max_sweeps)
        if sw < 0:
            return -1
        worst = max(worst, sw)
        out[:, k, :] = ev
    return worst
