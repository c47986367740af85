"""Block-structured Monte Carlo with worker-count independent results.

Paths are cut into fixed-size blocks; block ``b`` owns a fixed range of
stream ids, so its output does not depend on which worker ran it. Per-block
``(count, sum, sum of squares)`` accumulators are merged in block order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK = 8192
DEFAULT_SEED = 0xD75054


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int

    def to_json(self):
        return {"mean": self.mean, "stderr": self.stderr, "n_paths": self.n_paths}


@dataclass
class Moments:
    """Sums of a (possibly vector-valued) sample."""

    count: int
    s1: np.ndarray
    s2: np.ndarray

    @classmethod
    def of(cls, samples):
        samples = np.asarray(samples, dtype=float)
        return cls(samples.shape[0], samples.sum(axis=0), (samples * samples).sum(axis=0))

    def merge(self, other):
        return Moments(self.count + other.count, self.s1 + other.s1, self.s2 + other.s2)

    def estimate(self, index=None):
        s1, s2 = (self.s1, self.s2) if index is None else (self.s1[index], self.s2[index])
        return estimate_from_sums(self.count, float(s1), float(s2))


def estimate_from_sums(n, s1, s2):
    if n < 2:
        raise ValueError("need at least two paths for a standard error")
    mean = s1 / n
    var = max(s2 - n * mean * mean, 0.0) / (n - 1)
    return MCEstimate(float(mean), math.sqrt(var / n), int(n))


def estimate(samples):
    samples = np.asarray(samples, dtype=float)
    m = Moments.of(samples.reshape(samples.shape[0], -1))
    return m.estimate(0)


def default_workers():
    env = os.environ.get("DYSON_CBM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def block_sizes(n_paths, block_size=DEFAULT_BLOCK):
    full, rest = divmod(int(n_paths), int(block_size))
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(task, n_paths, block_size=DEFAULT_BLOCK, workers=None):
    """Run ``task(block_index, size)`` over all blocks; results in block order."""
    sizes = block_sizes(n_paths, block_size)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(sizes) == 1:
        return [task(b, s) for b, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(len(sizes)), sizes))


def reduce_moments(parts):
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    return total


def z_score(lhs, rhs):
    """``(lhs - rhs) / combined stderr``; either side may be an exact float."""
    def split(x):
        return (x.mean, x.stderr) if isinstance(x, MCEstimate) else (float(x), 0.0)

    a, sa = split(lhs)
    b, sb = split(rhs)
    se = math.hypot(sa, sb)
    if se == 0.0:
        return 0.0 if a == b else math.copysign(math.inf, a - b)
    return (a - b) / se
