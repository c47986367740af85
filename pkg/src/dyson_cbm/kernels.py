"""Correlation kernel, densities, correlation determinants and the Fredholm MGF.

The kernel is assembled from two ingredients per support label ``v``:
``p_s(v, x)`` and the Gaussian average ``E[Phi^v(y + i W_t)]``, the latter by
Gauss-Hermite quadrature in the probabilists' convention. A second,
independent route evaluates the same kernel as a contour integral around the
support, discretized by the trapezoid rule on a circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from . import linalg
from .configuration import Configuration
from .dyson import heat_kernel
from .entire import phi_values
from .errors import ContourTooClose, ImaginaryResidual, QuadratureOrderTooLow

DEFAULT_Q = 64
DEFAULT_NODES = 200
DEFAULT_CONTOUR_NODES = 256

G_REFINE_RTOL = 1e-8
MGF_REFINE_RTOL = 1e-6
INNER_IMAG_TOL = 1e-10
CONTOUR_IMAG_TOL = 1e-8
CONTOUR_CLEARANCE = 1e-3

#: labels with ``(v - x)^2 / 2s`` above this for every requested ``x`` are dropped
WEIGHT_CUT = 200.0


def gauss_hermite(Q):
    """Nodes and weights for ``E[f(N)]``, ``N`` standard normal; weights sum to 1."""
    nodes, weights = hermegauss(Q)
    return nodes, weights / weights.sum()


@dataclass(frozen=True)
class Contour:
    center: complex
    radius: float
    n_nodes: int = DEFAULT_CONTOUR_NODES

    def nodes(self, n=None):
        n = self.n_nodes if n is None else n
        theta = 2.0 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * theta)


def default_contour(support, n_nodes=DEFAULT_CONTOUR_NODES):
    lo, hi = float(np.min(support)), float(np.max(support))
    half = 0.5 * (hi - lo)
    return Contour(complex(0.5 * (lo + hi), 0.0), 1.5 * half + 1.0, n_nodes)


@dataclass
class KernelContext:
    xi: Configuration
    Q: int = DEFAULT_Q
    contour: Contour | None = None
    horizon: float = math.inf
    check_refinement: bool = False
    gh_nodes: np.ndarray = field(init=False, repr=False)
    gh_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be positive")
        self.gh_nodes, self.gh_weights = gauss_hermite(self.Q)
        if self.contour is None:
            self.contour = default_contour(self.xi.array)
        far = float(np.max(np.abs(self.xi.array - self.contour.center)))
        if not self.contour.radius > far:
            raise ValueError("contour radius must exceed the distance to every support point")

    @property
    def support(self):
        return self.xi.array

    def refined(self):
        return KernelContext(self.xi, 2 * self.Q, self.contour, self.horizon, False)

    def check_time(self, *ts):
        for t in ts:
            t_arr = np.asarray(t, dtype=float)
            if np.any(t_arr <= 0) or np.any(t_arr >= self.horizon):
                raise ValueError(f"times must lie in (0, {self.horizon})")


@dataclass(frozen=True)
class CorrelationRequest:
    times: tuple
    points: tuple  # one sequence of positions per time

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("times must be strictly increasing")
        if len(self.points) != len(ts):
            raise ValueError("one point vector per time is required")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "points", tuple(tuple(float(x) for x in p) for p in self.points))

    def flat(self):
        ts = [t for t, pts in zip(self.times, self.points) for _ in pts]
        xs = [x for pts in self.points for x in pts]
        return np.array(ts), np.array(xs)


def _active_labels(ctx, s, x):
    """Indices of support labels whose Gaussian weight is not negligible at any ``x``."""
    support = ctx.support
    x = np.atleast_1d(np.asarray(x, dtype=float))
    reach = math.sqrt(2.0 * float(np.max(s)) * WEIGHT_CUT)
    lo, hi = float(x.min()) - reach, float(x.max()) + reach
    idx = np.flatnonzero((support >= lo) & (support <= hi))
    return idx


def inner_integral(ctx, t, ys, labels=None, nodes=None, weights=None):
    """``E[Phi^v(y + i W_t)]`` for each label and each ``y``; shape ``(labels, ys)``."""
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if labels is None:
        labels = np.arange(ctx.xi.n)
    if nodes is None:
        nodes, weights = ctx.gh_nodes, ctx.gh_weights
    zs = ys[:, None] + 1j * math.sqrt(t) * nodes[None, :]
    vals = phi_values(ctx.support, labels, zs.ravel()).reshape(len(labels), ys.size, nodes.size)
    res = vals @ weights
    scale = np.abs(vals) @ weights
    bad = np.abs(res.imag) > INNER_IMAG_TOL * np.maximum(1.0, scale)
    if np.any(bad):
        raise ImaginaryResidual(f"inner integral imaginary part {np.max(np.abs(res.imag)):.3g}")
    return res.real


def _g_pairs(ctx, s, t, x, y):
    """Elementwise ``G_{s,t}(x, y)`` for scalar ``s, t`` and equal-shape ``x, y``."""
    labels = _active_labels(ctx, s, x)
    out = np.zeros(x.shape)
    if labels.size == 0:
        return out
    yu, inv = np.unique(y.ravel(), return_inverse=True)
    inner = inner_integral(ctx, t, yu, labels)
    v = ctx.support[labels]
    p = heat_kernel(s, v[:, None], x.ravel()[None, :])
    out.ravel()[:] = np.einsum("lk,lk->k", p, inner[:, inv])
    return out


def _refine_check(value, refined, rtol, what):
    value = np.asarray(value)
    refined = np.asarray(refined)
    scale = np.maximum(np.abs(refined), 1.0)
    delta = float(np.max(np.abs(value - refined) / scale)) if value.size else 0.0
    if delta > rtol:
        raise QuadratureOrderTooLow(f"{what}: doubling the order moved the result by {delta:.3g}")
    return delta


def green_G(ctx: KernelContext, s, t, x, y):
    """``G_{s,t}(x, y) = sum_v p_s(v, x) E[Phi^v(y + i W_t)]``; broadcasts over ``x, y``."""
    ctx.check_time(s, t)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    g = _g_pairs(ctx, float(s), float(t), x, y)
    if ctx.check_refinement:
        _refine_check(g, _g_pairs(ctx.refined(), float(s), float(t), x, y), G_REFINE_RTOL, "green_G")
    return g[()] if g.ndim == 0 else g


def kernel_K(ctx: KernelContext, s, x, t, y):
    """Extended kernel ``G_{s,t}(x, y) - 1(s > t) p_{s-t}(y, x)``."""
    g = green_G(ctx, s, t, x, y)
    if s > t:
        g = g - heat_kernel(s - t, np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    return g


def density(ctx: KernelContext, t, x):
    return green_G(ctx, t, t, x, x)


def kernel_matrix(ctx: KernelContext, row_t, row_x, col_t, col_x):
    """``K(row_t[i], row_x[i]; col_t[j], col_x[j])`` as a dense matrix.

    ``G`` factorizes through the labels, so the matrix is a product of a
    ``rows x labels`` Gaussian table and a ``labels x cols`` inner-integral table.
    """
    row_t = np.asarray(row_t, dtype=float)
    row_x = np.asarray(row_x, dtype=float)
    col_t = np.asarray(col_t, dtype=float)
    col_x = np.asarray(col_x, dtype=float)
    ctx.check_time(row_t, col_t)
    mat = _g_matrix(ctx, row_t, row_x, col_t, col_x)
    if ctx.check_refinement:
        _refine_check(mat, _g_matrix(ctx.refined(), row_t, row_x, col_t, col_x), G_REFINE_RTOL, "kernel_matrix")
    dt = row_t[:, None] - col_t[None, :]
    later = dt > 0
    if np.any(later):
        corr = heat_kernel(np.where(later, dt, 1.0), col_x[None, :], row_x[:, None])
        mat = mat - np.where(later, corr, 0.0)
    return mat


def _g_matrix(ctx, row_t, row_x, col_t, col_x):
    labels = _active_labels(ctx, np.max(row_t), row_x)
    if labels.size == 0:
        return np.zeros((row_x.size, col_x.size))
    v = ctx.support[labels]
    left = heat_kernel(row_t[None, :], v[:, None], row_x[None, :])  # (L, rows)
    right = np.empty((labels.size, col_x.size))
    for t in np.unique(col_t):
        cols = np.flatnonzero(col_t == t)
        yu, inv = np.unique(col_x[cols], return_inverse=True)
        right[:, cols] = inner_integral(ctx, float(t), yu, labels)[:, inv]
    return left.T @ right


def multitime_correlation(ctx: KernelContext, req: CorrelationRequest):
    ts, xs = req.flat()
    if xs.size == 0:
        raise ValueError("at least one point is required")
    return float(linalg.det(kernel_matrix(ctx, ts, xs, ts, xs)))


@dataclass(frozen=True)
class FredholmResult:
    value: float
    refinement_delta: float | None


def _as_chi_list(chi, M):
    if callable(chi):
        return [chi] * M
    chi = list(chi)
    if len(chi) != M:
        raise ValueError("one chi per time is required")
    return chi


def _fredholm(ctx, times, chis, a, b, m):
    nodes, weights = leggauss(m)
    x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    w = 0.5 * (b - a) * weights
    M = len(times)
    ts = np.repeat(np.asarray(times, dtype=float), m)
    xs = np.tile(x, M)
    kern = kernel_matrix(ctx, ts, xs, ts, xs)
    col = np.concatenate([np.asarray(c(x), dtype=float) * w for c in chis])
    A = kern * col[None, :]
    A[np.diag_indices_from(A)] += 1.0
    return float(linalg.det(A))


def fredholm_mgf_result(ctx: KernelContext, times, chi, grid_spec, refine=False) -> FredholmResult:
    a, b, m = grid_spec
    a, b, m = float(a), float(b), int(m)
    if m < 100:
        raise ValueError("at least 100 Nystrom nodes are required")
    if not b > a:
        raise ValueError("grid needs a < b")
    times = [float(t) for t in times]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    chis = _as_chi_list(chi, len(times))
    value = _fredholm(ctx, times, chis, a, b, m)
    delta = None
    if refine:
        fine = _fredholm(ctx, times, chis, a, b, 2 * m)
        delta = abs(value - fine) / max(abs(fine), 1e-300)
        if delta > MGF_REFINE_RTOL:
            raise QuadratureOrderTooLow(f"fredholm_mgf: m -> 2m moved the result by {delta:.3g}")
    return FredholmResult(value, delta)


def fredholm_mgf(ctx: KernelContext, times, chi, grid_spec, refine=False) -> float:
    """``Det[I + K chi]`` by Nystrom discretization on a Gauss-Legendre grid.

    ``chi`` is ``exp(f) - 1`` for the test function ``f``; a callable is used
    for every time, a list gives one callable per time.
    """
    return fredholm_mgf_result(ctx, times, chi, grid_spec, refine).value


def _contour_single(ctx, s, x, t, y, n_nodes):
    # |p_s(z, x)| grows like exp((Im z)^2 / 2s) on the circle while the result
    # stays O(1); extended precision keeps the cancellation below 1e-9
    ld = np.clongdouble
    c = ctx.contour
    theta = 2.0 * np.pi * np.arange(n_nodes, dtype=np.longdouble) / n_nodes
    center = ld(c.center)
    z = center + np.longdouble(c.radius) * np.exp(ld(1j) * theta)  # (N,)
    zeta = y + ld(1j) * np.sqrt(np.longdouble(t)) * ctx.gh_nodes.astype(np.longdouble)  # (Q,)
    support = ctx.support.astype(np.longdouble)
    # prod_x' (x' - zeta) / (x' - z), shape (N, Q)
    num = support[None, :] - zeta[:, None]  # (Q, n)
    den = support[None, :] - z[:, None]  # (N, n)
    ratio = np.ones((z.size, zeta.size), dtype=ld)
    for k in range(support.size):
        ratio *= num[None, :, k] / den[:, None, k]
    diff = zeta[None, :] - z[:, None]
    # the pole at z = zeta is not one of the support points: remove it
    g = (ratio - 1) / diff
    gauss = np.exp(-((z - np.longdouble(x)) ** 2) / (2 * np.longdouble(s))) / np.sqrt(2 * np.pi * np.longdouble(s))
    per_node = (gauss * (z - center))[:, None] * g
    inner = per_node.mean(axis=0)  # (Q,)
    return complex(inner @ ctx.gh_weights.astype(np.longdouble))


def contour_kernel_K(ctx: KernelContext, s, x, t, y):
    """Kernel from the contour-integral representation around ``supp xi``.

    The circle is traversed once counterclockwise with the trapezoid rule.
    For each Hermite node the integrand also has a pole at ``z = y + i w``,
    which is not a support point; it is removed analytically so that only the
    residues at ``supp xi`` contribute.
    """
    ctx.check_time(s, t)
    c = ctx.contour
    clearance = float(np.min(np.abs(np.abs(ctx.support - c.center) - c.radius)))
    if clearance < CONTOUR_CLEARANCE:
        raise ContourTooClose(f"contour passes within {clearance:.3g} of a support point")
    val = _contour_single(ctx, float(s), float(x), float(t), float(y), c.n_nodes)
    if ctx.check_refinement:
        fine = _contour_single(ctx, float(s), float(x), float(t), float(y), 2 * c.n_nodes)
        _refine_check(val.real, fine.real, G_REFINE_RTOL, "contour_kernel_K")
    if abs(val.imag) > CONTOUR_IMAG_TOL * max(1.0, abs(val.real)):
        raise ImaginaryResidual(f"contour kernel imaginary part {val.imag:.3g}")
    out = val.real
    if s > t:
        out -= float(heat_kernel(s - t, y, x))
    return out
