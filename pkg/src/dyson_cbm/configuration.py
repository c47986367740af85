"""Initial configurations, their algebra, and the summability functionals.

A finite configuration is a strictly increasing tuple of support points
(every multiplicity is one). Unbounded configurations are described by a
deterministic window generator; every consumer works on finite windows
``xi ∩ [-L, L]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicatePoint, EmptyRestriction, InvalidAlpha

#: two support points closer than this are treated as one (multiplicity 2)
COINCIDENCE_TOL = 1e-12


@dataclass(frozen=True)
class Configuration:
    points: tuple

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if not pts:
            raise ValueError("configuration must contain at least one point")
        for a, b in zip(pts, pts[1:]):
            if not b - a > COINCIDENCE_TOL:
                if abs(b - a) <= COINCIDENCE_TOL:
                    raise DuplicatePoint(f"points {a!r} and {b!r} coincide")
                raise ValueError("points must be strictly increasing; use new_configuration")
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return len(self.points)

    @property
    def array(self):
        return np.array(self.points, dtype=float)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def index_of(self, u):
        """Index of the support point within ``COINCIDENCE_TOL`` of ``u``, or -1."""
        arr = self.array
        k = int(np.argmin(np.abs(arr - u)))
        return k if abs(arr[k] - u) <= COINCIDENCE_TOL else -1

    def count_at(self, x):
        return 1 if self.index_of(x) >= 0 else 0

    def to_json(self):
        return list(self.points)


@dataclass(frozen=True)
class Lattice:
    """The lattice ``spacing * Z + offset``."""

    spacing: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("lattice spacing must be positive")

    def window(self, L):
        lo = math.ceil((-L - self.offset) / self.spacing - 1e-12)
        hi = math.floor((L - self.offset) / self.spacing + 1e-12)
        if hi < lo:
            return np.empty(0)
        return np.arange(lo, hi + 1, dtype=float) * self.spacing + self.offset


@dataclass(frozen=True)
class InfiniteConfigSpec:
    generator: Lattice = field(default_factory=Lattice)
    window: float | None = None

    def points_in(self, L=None):
        L = self.window if L is None else L
        if L is None or not L > 0:
            raise ValueError("a positive window L is required")
        return self.generator.window(L)

    def to_json(self):
        out = {"lattice": {"spacing": self.generator.spacing, "offset": self.generator.offset}}
        if self.window is not None:
            out["window"] = self.window
        return out


INTEGER_LATTICE = InfiniteConfigSpec(Lattice(1.0, 0.0))


@dataclass
class ConditionParams:
    C0: float
    alpha: float
    C1: float
    beta: float
    C2: float


@dataclass
class ConditionReport:
    M_values: list
    M_alpha: float
    alpha: float
    c2ii_values: list
    satisfied_C1: bool
    satisfied_C2: bool
    constants: tuple
    L_grid: list
    satisfied_C2i: bool = True
    satisfied_C2ii: bool = True
    worst_c2ii_ratio: float = 0.0

    def to_json(self, max_c2ii=50):
        c2 = self.c2ii_values
        if len(c2) > max_c2ii:
            idx = np.unique(np.linspace(0, len(c2) - 1, max_c2ii).astype(int))
            c2 = [c2[i] for i in idx]
        C0, C1, C2, beta = self.constants
        return {
            "L_grid": list(self.L_grid),
            "M_values": [[L, m] for L, m in self.M_values],
            "M_alpha": self.M_alpha,
            "alpha": self.alpha,
            "c2ii_values_sample": [[a, v] for a, v in c2],
            "c2ii_count": len(self.c2ii_values),
            "worst_c2ii_ratio": self.worst_c2ii_ratio,
            "satisfied_C1": self.satisfied_C1,
            "satisfied_C2": self.satisfied_C2,
            "satisfied_C2i": self.satisfied_C2i,
            "satisfied_C2ii": self.satisfied_C2ii,
            "constants": {"C0": C0, "C1": C1, "C2": C2, "beta": beta},
        }


def new_configuration(points):
    pts = sorted(float(p) for p in points)
    if not pts:
        raise ValueError("points must be nonempty")
    for a, b in zip(pts, pts[1:]):
        if b - a <= COINCIDENCE_TOL:
            raise DuplicatePoint(f"points {a!r} and {b!r} coincide")
    return Configuration(tuple(pts))


def _support(xi, L=None):
    if isinstance(xi, InfiniteConfigSpec):
        return xi.points_in(L)
    arr = xi.array if isinstance(xi, Configuration) else np.asarray(xi, dtype=float)
    if L is not None:
        arr = arr[np.abs(arr) <= L]
    return arr


def restrict(xi, L):
    """``xi ∩ [-L, L]`` as a finite :class:`Configuration`."""
    if not L > 0:
        raise ValueError("L must be positive")
    pts = _support(xi, L)
    if pts.size == 0:
        raise EmptyRestriction(f"no support points in [-{L}, {L}]")
    return Configuration(tuple(pts.tolist()))


def shift_and_square(xi, u):
    """Points of ``tau_u xi^<2>`` (square, then shift), as a sorted multiset."""
    return np.sort(_support(xi) ** 2 + u)


def moment_M(xi, L):
    # correctly rounded per-sign sums, so mirror-symmetric supports give exactly 0
    pts = _support(xi, L)
    pos = math.fsum(1.0 / pts[pts > 0])
    neg = math.fsum(1.0 / -pts[pts < 0])
    return pos - neg


def moment_M_alpha(xi, alpha, L):
    if not 1.0 < alpha < 2.0:
        raise InvalidAlpha(f"alpha must lie in (1, 2), got {alpha}")
    pts = _support(xi, L)
    pts = pts[pts != 0.0]
    return float(np.sum(np.abs(pts) ** -alpha) ** (1.0 / alpha))


def moment_M1_multiset(values):
    """``M_1`` of a multiset over the whole line: sum of ``1/|x|`` for ``x != 0``."""
    v = np.asarray(values, dtype=float)
    v = v[np.abs(v) > COINCIDENCE_TOL]
    return float(np.sum(1.0 / np.abs(v)))


def _c2ii_sums(pts, chunk=512):
    sq = pts**2
    out = np.empty(pts.size)
    for lo in range(0, pts.size, chunk):
        a2 = sq[lo : lo + chunk, None]
        d = np.abs(sq[None, :] - a2)
        with np.errstate(divide="ignore"):
            inv = np.where(d > COINCIDENCE_TOL, 1.0 / d, 0.0)
        out[lo : lo + chunk] = inv.sum(axis=1)
    return out


def check_conditions(xi, params, L_grid):
    """Evaluate (C.1) and (C.2) on a finite grid of windows.

    Passing is evidence over the tested grid, not a certificate for all L.
    """
    L_grid = [float(L) for L in L_grid]
    if not L_grid:
        raise ValueError("L_grid must be nonempty")
    if any(b <= a for a, b in zip(L_grid, L_grid[1:])):
        raise ValueError("L_grid must be increasing")
    L_max = L_grid[-1]

    M_values = [(L, moment_M(xi, L)) for L in L_grid]
    ok1 = all(abs(m) < params.C0 for _, m in M_values)

    M_alpha = moment_M_alpha(xi, params.alpha, L_max)
    ok2i = M_alpha <= params.C1

    pts = _support(xi, L_max)
    sums = _c2ii_sums(pts)
    bounds = params.C2 * np.maximum(np.abs(pts), 1.0) ** (-params.beta)
    ok2ii = bool(np.all(sums <= bounds))
    worst = float(np.max(sums / bounds)) if pts.size else 0.0

    return ConditionReport(
        M_values=M_values,
        M_alpha=M_alpha,
        alpha=params.alpha,
        c2ii_values=list(zip(pts.tolist(), sums.tolist())),
        satisfied_C1=bool(ok1),
        satisfied_C2=bool(ok2i and ok2ii),
        constants=(params.C0, params.C1, params.C2, params.beta),
        L_grid=L_grid,
        satisfied_C2i=bool(ok2i),
        satisfied_C2ii=ok2ii,
        worst_c2ii_ratio=worst,
    )


def vandermonde(x):
    """``prod_{i<j} (x_j - x_i)`` over the last axis; real or complex input."""
    x = np.asarray(x)
    n = x.shape[-1]
    out = np.ones(x.shape[:-1], dtype=np.result_type(x.dtype, float))
    for i in range(n):
        for j in range(i + 1, n):
            out = out * (x[..., j] - x[..., i])
    return out[()] if out.ndim == 0 else out


def config_from_json(obj):
    """Parse a JSON array of numbers or ``{"lattice": {...}}``."""
    if isinstance(obj, dict):
        if "lattice" not in obj:
            raise ValueError("infinite configuration must have a 'lattice' key")
        lat = obj["lattice"] or {}
        return InfiniteConfigSpec(
            Lattice(float(lat.get("spacing", 1.0)), float(lat.get("offset", 0.0))),
            obj.get("window"),
        )
    if isinstance(obj, (list, tuple)):
        return new_configuration(obj)
    raise ValueError("configuration must be an array of numbers or a lattice object")
