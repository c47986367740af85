"""Time the hot kernels under each backend.

Each backend runs in its own interpreter, selected through DYSON_CBM_BACKEND,
so the flag is exercised exactly as a user would set it.

    python benchmarks/bench_backends.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys

CASES = r"""
import json, sys, time
import numpy as np
from dyson_cbm import RngStream, TimeGrid, backend, new_configuration, simulate_gue_ensemble, simulate_sde_ensemble
from dyson_cbm.entire import det_martingale_batch, phi_values

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
xi3 = new_configuration([-1.0, 0.0, 2.0])
grid = TimeGrid.uniform(1.0, 0.05)
big = np.arange(-100.0, 101.0)
zs = rng.normal(size=2000) + 1j * rng.normal(size=2000)
zb = rng.normal(size=(20_000, 3)) + 1j * rng.normal(size=(20_000, 3))

cases = {
    "sde 3 particles, 2000 paths, T=1": lambda: simulate_sde_ensemble(xi3, grid, 2000, RngStream(1, 0)),
    "gue 3 particles, 2000 paths, 20 steps": lambda: simulate_gue_ensemble(xi3, grid, 2000, RngStream(1, 0)),
    "phi_values n=3, 2000 points": lambda: phi_values(xi3.array, np.arange(3), zs),
    "phi_values n=201, 2000 points": lambda: phi_values(big, np.arange(201), zs),
    "det_martingale_batch n=3, 20000 rows": lambda: det_martingale_batch(xi3.array, zb),
}
out = {"backend": backend(), "seconds": {}}
for name, fn in cases.items():
    fn()  # compile / warm caches
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out["seconds"][name] = best
print(json.dumps(out))
"""


def run(backend, repeat):
    env = dict(os.environ, DYSON_CBM_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", CASES, str(repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args()
    fast, slow = run("numba", args.repeat), run("numpy", args.repeat)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    width = max(len(k) for k in fast["seconds"])
    print(f"{'kernel':<{width}}  {'numba':>9}  {'numpy':>9}  speedup")
    for k, t_fast in fast["seconds"].items():
        t_slow = slow["seconds"][k]
        print(f"{k:<{width}}  {t_fast:9.4f}  {t_slow:9.4f}  {t_slow / t_fast:6.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
