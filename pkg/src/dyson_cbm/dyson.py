"""Three realizations of the beta=2 Dyson model.

* :func:`simulate_sde` integrates ``dX_i = dB_i + sum_{j != i} dt / (X_i - X_j)``
  with gap-adaptive Euler-Maruyama.
* :func:`simulate_gue` follows the ordered eigenvalues of
  ``diag(u) + H(t)`` for a Hermitian Brownian motion ``H`` (diagonal variance
  ``t``, off-diagonal real and imaginary parts of variance ``t / 2`` each).
* :func:`h_transform_density` is the exact transition density: the
  Karlin-McGregor determinant times ``h(x) / h(u)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _accel, _fallback, _kernels, linalg
from .configuration import Configuration, vandermonde
from .errors import CollisionBreakdown, EigensolverNoConvergence
from .paths import RngStream, TimeGrid

DEFAULT_DT_MIN = 1e-12
DEFAULT_MAX_STEP = 1e-3
GAP_FACTOR = 0.1


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (K, n)

    def __post_init__(self):
        s = self.states
        if s.shape[0] != len(self.grid):
            raise ValueError("one state per grid time is required")
        if s.shape[1] > 1 and not np.all(np.diff(s, axis=1) > 0):
            raise ValueError("states must be strictly increasing")


@dataclass(frozen=True)
class Ensemble:
    """``n_paths`` trajectories on a shared grid; broken paths hold NaN."""

    grid: TimeGrid
    states: np.ndarray  # (P, K, n)
    status: np.ndarray  # (P,), 0 = ok

    @property
    def breakdowns(self):
        return int(np.count_nonzero(self.status))

    def trajectory(self, p):
        return Trajectory(self.grid, self.states[p])


def is_hermitian(h, tol=1e-12):
    h = np.asarray(h)
    return h.ndim == 2 and h.shape[0] == h.shape[1] and np.allclose(h, h.conj().T, rtol=0, atol=tol)


def simulate_sde_ensemble(
    xi: Configuration,
    grid: TimeGrid,
    n_paths,
    rng: RngStream,
    dt_min=DEFAULT_DT_MIN,
    max_step=DEFAULT_MAX_STEP,
    adaptive=True,
    gap_factor=GAP_FACTOR,
    raise_on_breakdown=False,
):
    x0 = np.ascontiguousarray(xi.array)
    times = np.ascontiguousarray(grid.array)
    out = np.empty((int(n_paths), times.size, x0.size))
    status = np.zeros(int(n_paths), dtype=np.int64)
    gen = rng.generator()
    kern = _kernels.sde_paths if _accel.use_numba() else _fallback.sde_paths
    kern(x0, times, float(max_step), float(dt_min), bool(adaptive), float(gap_factor), gen, out, status)
    ens = Ensemble(grid, out, status)
    if raise_on_breakdown and ens.breakdowns:
        raise CollisionBreakdown(f"{ens.breakdowns} of {n_paths} paths lost their ordering")
    return ens


def simulate_sde(xi: Configuration, grid: TimeGrid, rng: RngStream, dt_min=DEFAULT_DT_MIN, **kw) -> Trajectory:
    ens = simulate_sde_ensemble(xi, grid, 1, rng, dt_min=dt_min, raise_on_breakdown=True, **kw)
    return ens.trajectory(0)


def simulate_gue_ensemble(xi: Configuration, grid: TimeGrid, n_paths, rng: RngStream):
    u = np.ascontiguousarray(xi.array)
    times = np.ascontiguousarray(grid.array)
    out = np.empty((int(n_paths), times.size, u.size))
    gen = rng.generator()
    if _accel.use_numba():
        worst = _kernels.gue_paths(u, times, gen, linalg.JACOBI_TOL, linalg.JACOBI_MAX_SWEEPS, out)
    else:
        worst = _fallback.gue_paths(u, times, gen, linalg.JACOBI_TOL, linalg.JACOBI_MAX_SWEEPS, out)
    if worst < 0:
        raise EigensolverNoConvergence(f"Jacobi exceeded {linalg.JACOBI_MAX_SWEEPS} sweeps")
    return Ensemble(grid, out, np.zeros(int(n_paths), dtype=np.int64))


def simulate_gue(xi: Configuration, grid: TimeGrid, rng: RngStream) -> Trajectory:
    return simulate_gue_ensemble(xi, grid, 1, rng).trajectory(0)


def heat_kernel(t, x, y):
    """``p_t(x, y) = exp(-(y - x)^2 / 2t) / sqrt(2 pi t)``; complex arguments allowed."""
    d = np.asarray(y) - np.asarray(x)
    t = np.asarray(t, dtype=float)
    return np.exp(-(d * d) / (2.0 * t)) / np.sqrt(2.0 * math.pi * t)


def km_transition_density(u, x, t):
    """``det[p_t(u_i, x_j)]``; ``x`` may carry leading batch axes."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    mats = heat_kernel(t, u[:, None], x[..., None, :])
    if x.ndim == 1:
        return float(linalg.det(mats))
    flat = mats.reshape(-1, u.size, u.size)
    return linalg.det_batch(flat).reshape(x.shape[:-1])


def h_transform_density(xi: Configuration, x, t):
    """Transition density of the Dyson model from ``xi`` to the ordered state ``x`` at time ``t``.

    The expression is symmetric in the entries of ``x``, which quadrature
    code uses to integrate over the full cube instead of the chamber.
    """
    u = xi.array
    x = np.asarray(x, dtype=float)
    return km_transition_density(u, x, t) * vandermonde(x) / vandermonde(u)


def write_trajectories_csv(path, ensemble: Ensemble, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["traj_id", "t", "i", "x_i"])
        P, K, n = ensemble.states.shape
        times = ensemble.grid.times
        for p in range(P):
            for k in range(K):
                for i in range(n):
                    w.writerow([p, repr(times[k]), i, repr(float(ensemble.states[p, k, i]))])
