"""Real and complex Brownian paths on time grids, with reproducible streams.

Stream layout for an ``n``-particle system drawn from base id ``b``: the real
parts use streams ``b + i`` and the imaginary parts ``b + n + i``, so the two
collections are independent of each other and of every other base.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .configuration import Configuration
from .entire import det_martingale
from .errors import DimensionMismatch, GridMismatch

GRID_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    times: tuple

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        if not ts or ts[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", ts)

    @classmethod
    def uniform(cls, T, step):
        k = int(round(T / step))
        if k < 1 or abs(k * step - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"T={T} is not a multiple of step={step}")
        return cls(tuple(np.linspace(0.0, T, k + 1).tolist()))

    @classmethod
    def through(cls, points):
        """Grid ``{0} ∪ points`` sorted and deduplicated."""
        pts = sorted({0.0, *(float(p) for p in points)})
        return cls(tuple(pts))

    @property
    def array(self):
        return np.array(self.times)

    @property
    def max_step(self):
        return float(np.max(np.diff(self.times))) if len(self.times) > 1 else 0.0

    @property
    def T(self):
        return self.times[-1]

    def __len__(self):
        return len(self.times)

    def index_of(self, t):
        arr = self.array
        k = int(np.argmin(np.abs(arr - t)))
        if abs(arr[k] - t) > GRID_TOL * max(1.0, abs(t)):
            raise GridMismatch(f"time {t} is not on the grid")
        return k


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int

    def generator(self, *sub):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *map(int, sub)))
        return np.random.Generator(np.random.PCG64(ss))

    def shifted(self, offset):
        return RngStream(self.seed, self.stream_id + offset)


@dataclass(frozen=True)
class RealPath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != len(self.grid):
            raise DimensionMismatch("path length differs from grid length")


@dataclass(frozen=True)
class ComplexPath:
    grid: TimeGrid
    re: RealPath
    im: RealPath

    def at(self, k):
        return complex(self.re.values[k], self.im.values[k])

    @property
    def values(self):
        return self.re.values + 1j * self.im.values


def _bm_values(v0, grid, gen):
    steps = np.sqrt(np.diff(grid.array))
    vals = np.empty(len(grid))
    vals[0] = v0
    vals[1:] = v0 + np.cumsum(steps * gen.standard_normal(steps.size))
    return vals


def sample_real_bm(v0, grid: TimeGrid, rng: RngStream) -> RealPath:
    return RealPath(grid, _bm_values(float(v0), grid, rng.generator()))


def sample_cbm(v0, grid: TimeGrid, rng: RngStream) -> ComplexPath:
    re = RealPath(grid, _bm_values(float(v0), grid, rng.generator(0)))
    im = RealPath(grid, _bm_values(0.0, grid, rng.generator(1)))
    return ComplexPath(grid, re, im)


def sample_cbm_system(u, grid: TimeGrid, seed, base):
    """One path-system: particle ``i`` uses streams ``base + i`` (real) and ``base + n + i`` (imaginary)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = u.size
    out = []
    for i in range(n):
        re = RealPath(grid, _bm_values(u[i], grid, RngStream(seed, base + i).generator()))
        im = RealPath(grid, _bm_values(0.0, grid, RngStream(seed, base + n + i).generator()))
        out.append(ComplexPath(grid, re, im))
    return out


def sample_cbm_batch(u, times, n_paths, seed, base):
    """``n_paths`` independent systems at once; returns ``(V, W)`` of shape ``(P, K, n)``.

    Same stream layout as :func:`sample_cbm_system`: each stream yields the
    increments of one particle coordinate for the whole batch.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    times = np.asarray(times, dtype=float)
    n = u.size
    K = times.size
    sd = np.sqrt(np.diff(times))
    V = np.empty((n_paths, K, n))
    W = np.empty((n_paths, K, n))
    for i in range(n):
        for arr, start, sid in ((V, u[i], base + i), (W, 0.0, base + n + i)):
            g = RngStream(seed, sid).generator()
            inc = g.standard_normal((n_paths, K - 1)) * sd
            arr[:, 0, i] = start
            arr[:, 1:, i] = start + np.cumsum(inc, axis=1)
    return V, W


def det_martingale_along_path(xi: Configuration, paths, t) -> complex:
    if len(paths) != xi.n:
        raise DimensionMismatch(f"expected {xi.n} paths, got {len(paths)}")
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise GridMismatch("paths live on different grids")
    k = grid.index_of(t)
    return det_martingale(xi, np.array([p.at(k) for p in paths]))


def write_paths_csv(path, systems, header_comment=None):
    """CSV ``path_id, t, re, im``; ``systems`` is a list of ComplexPath lists or ComplexPaths."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["path_id", "t", "re", "im"])
        pid = 0
        for item in systems:
            for p in item if isinstance(item, (list, tuple)) else [item]:
                for t, a, b in zip(p.grid.times, p.re.values, p.im.values):
                    w.writerow([pid, repr(t), repr(float(a)), repr(float(b))])
                pid += 1
