"""``dyson-cbm <command> --config <file.json> [--seed N] [--workers N] [--out prefix]``.

Exit status: 0 success, 1 verification failure, 2 configuration error,
3 numerical breakdown. Errors are also written to ``<prefix>.error.json``.
Artifacts embed the resolved configuration (minus ``workers`` and ``out``,
which must not change results).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import harness as H
from . import montecarlo as mc
from .configuration import (
    ConditionParams,
    Configuration,
    InfiniteConfigSpec,
    check_conditions,
    config_from_json,
)
from .dyson import DEFAULT_DT_MIN, DEFAULT_MAX_STEP, simulate_gue_ensemble, simulate_sde_ensemble, write_trajectories_csv
from .errors import ConfigError, ConfigurationError, DysonError, NumericalBreakdown
from .kernels import (
    CorrelationRequest,
    KernelContext,
    contour_kernel_K,
    default_contour,
    density,
    fredholm_mgf_result,
    kernel_K,
    multitime_correlation,
)
from .paths import TimeGrid, sample_cbm_system, write_paths_csv

COMMANDS = ("simulate", "density", "kernel", "correlate", "mgf", "verify", "conditions", "truncation")
SUITES = ("theorem1", "martingale", "corollary2", "fourth_moment", "collision", "truncation")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@dataclass
class RunConfig:
    command: str
    xi: object  # Configuration, InfiniteConfigSpec or None
    params: dict
    seed: int = mc.DEFAULT_SEED
    workers: int = 1
    out: str = "dyson"
    Q: int = 64
    m: int = 200
    N_c: int = 256
    n_paths: int | None = None
    resolved: dict = field(default_factory=dict)

    def artifact_config(self):
        """Resolved config as embedded in artifacts: everything that affects results."""
        return {k: v for k, v in self.resolved.items() if k not in ("workers", "out")}


# ---------------------------------------------------------------------------
# parsing helpers


def _num(obj, key, path=None, *, required=False, default=None, positive=False, nonneg=False, integer=False):
    path = path or key
    if key not in obj or obj[key] is None:
        if required:
            raise ConfigError(path, "required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, "must be a number")
    if integer:
        if float(v) != int(v):
            raise ConfigError(path, "must be an integer")
        v = int(v)
    else:
        v = float(v)
    if positive and not v > 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be nonnegative")
    return v


def _num_list(obj, key, *, required=False, default=None, positive=False, min_len=1):
    if key not in obj:
        if required:
            raise ConfigError(key, "required")
        return default
    v = obj[key]
    if not isinstance(v, list) or len(v) < min_len:
        raise ConfigError(key, f"must be a list of at least {min_len} numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{key}[{i}]", "must be a number")
        if positive and not x > 0:
            raise ConfigError(f"{key}[{i}]", "must be positive")
        out.append(float(x))
    return out


def _grid(obj, key, *, required=True, default_n=None):
    if key not in obj:
        if required:
            raise ConfigError(key, "required")
        return None
    g = obj[key]
    if not isinstance(g, dict):
        raise ConfigError(key, "must be an object {a, b, n}")
    a = _num(g, "a", f"{key}.a", required=True)
    b = _num(g, "b", f"{key}.b", required=True)
    n = _num(g, "n", f"{key}.n", default=default_n, positive=True, integer=True)
    if n is None:
        raise ConfigError(f"{key}.n", "required")
    if not b > a:
        raise ConfigError(f"{key}.b", "must exceed a")
    return {"a": a, "b": b, "n": n}


def _linspace(g):
    return np.linspace(g["a"], g["b"], g["n"])


def _xi(obj, *, required=True, finite=True, default=None):
    if "config" not in obj:
        if required and default is None:
            raise ConfigError("config", "required")
        return default
    try:
        xi = config_from_json(obj["config"])
    except ConfigurationError as exc:
        raise ConfigError("config", str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from exc
    if finite and not isinstance(xi, Configuration):
        raise ConfigError("config", "a finite configuration is required")
    return xi


def _xi_json(xi):
    if isinstance(xi, Configuration):
        return list(xi.points)
    if isinstance(xi, InfiniteConfigSpec):
        lat = xi.generator
        return {"lattice": {"spacing": lat.spacing, "offset": lat.offset}}
    return None


def _chi_spec(spec, path):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(path, "must be an object with a 'kind'")
    kind = spec["kind"]
    if kind == "zero":
        return {"kind": "zero"}
    if kind == "indicator":
        a = _num(spec, "a", f"{path}.a", required=True)
        b = _num(spec, "b", f"{path}.b", required=True)
        if not b > a:
            raise ConfigError(f"{path}.b", "must exceed a")
        return {"kind": kind, "a": a, "b": b, "value": _num(spec, "value", f"{path}.value", default=-1.0)}
    if kind == "bump":
        return {
            "kind": kind,
            "center": _num(spec, "center", f"{path}.center", required=True),
            "half_width": _num(spec, "half_width", f"{path}.half_width", required=True, positive=True),
            "height": _num(spec, "height", f"{path}.height", default=1.0),
        }
    raise ConfigError(f"{path}.kind", "must be one of zero, indicator, bump")


def _chi_callable(spec):
    kind = spec["kind"]
    if kind == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if kind == "indicator":
        a, b, v = spec["a"], spec["b"], spec["value"]
        return lambda x: np.where((np.asarray(x) >= a) & (np.asarray(x) <= b), v, 0.0)
    return H.Bump(spec["center"], spec["half_width"], spec["height"])


def _functional(spec, path):
    if not isinstance(spec, dict):
        raise ConfigError(path, "must be an object")
    kind = spec.get("kind", "one")
    if kind not in ("one", "sum", "product"):
        raise ConfigError(f"{path}.kind", "must be one of one, sum, product")
    if kind == "one":
        return H.Functional("one")
    times = _num_list(spec, "times", required=True, positive=True)
    funcs = spec.get("funcs")
    if not isinstance(funcs, list) or len(funcs) != len(times):
        raise ConfigError(f"{path}.funcs", "one bump per time is required")
    bumps = []
    for i, f in enumerate(funcs):
        c = _chi_spec({"kind": "bump", **f} if isinstance(f, dict) else f, f"{path}.funcs[{i}]")
        bumps.append(H.Bump(c["center"], c["half_width"], c["height"]))
    return H.Functional(kind, tuple(times), tuple(bumps))


# ---------------------------------------------------------------------------
# parse_config


def parse_config(text, overrides=None) -> RunConfig:
    """Validate a JSON run configuration and fill in defaults."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(obj, dict):
        raise ConfigError("$", "must be a JSON object")
    obj = dict(obj)
    for k, v in (overrides or {}).items():
        if v is not None:
            obj[k] = v
    if "command" not in obj:
        raise ConfigError("command", "required")
    cmd = obj["command"]
    if cmd not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")

    seed = _num(obj, "seed", default=mc.DEFAULT_SEED, nonneg=True, integer=True)
    workers = _num(obj, "workers", default=None, positive=True, integer=True)
    if workers is None:
        workers = mc.default_workers()
    out = obj.get("out", "dyson")
    if not isinstance(out, str) or not out:
        raise ConfigError("out", "must be a nonempty string")
    Q = _num(obj, "Q", default=64, positive=True, integer=True)
    m = _num(obj, "m", default=200, positive=True, integer=True)
    N_c = _num(obj, "N_c", default=256, positive=True, integer=True)
    n_paths = _num(obj, "n_paths", default=None, positive=True, integer=True)
    if m < 100:
        raise ConfigError("m", "must be at least 100")

    params = {}
    xi = None
    if cmd == "simulate":
        xi = _xi(obj)
        params["T"] = _num(obj, "T", required=True, positive=True)
        params["step"] = _num(obj, "step", default=params["T"] / 100, positive=True)
        method = obj.get("method", "sde")
        if method not in ("sde", "gue", "cbm"):
            raise ConfigError("method", "must be one of sde, gue, cbm")
        params["method"] = method
        params["max_step"] = _num(obj, "max_step", default=DEFAULT_MAX_STEP, positive=True)
        params["dt_min"] = _num(obj, "dt_min", default=DEFAULT_DT_MIN, positive=True)
        params["adaptive"] = bool(obj.get("adaptive", True))
        n_paths = n_paths or 1
        try:
            TimeGrid.uniform(params["T"], params["step"])
        except ValueError as exc:
            raise ConfigError("step", str(exc)) from exc
    elif cmd == "density":
        xi = _xi(obj)
        params["t"] = _num(obj, "t", required=True, positive=True)
        params["grid"] = _grid(obj, "grid")
    elif cmd == "kernel":
        xi = _xi(obj)
        pairs = obj.get("pairs")
        if pairs is None:
            pairs = [[_num(obj, "s", required=True, positive=True), _num(obj, "t", required=True, positive=True)]]
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError("pairs", "must be a nonempty list of [s, t]")
        clean = []
        for i, p in enumerate(pairs):
            if not (isinstance(p, list) and len(p) == 2 and all(isinstance(v, (int, float)) and v > 0 for v in p)):
                raise ConfigError(f"pairs[{i}]", "must be [s, t] with positive entries")
            clean.append([float(p[0]), float(p[1])])
        params["pairs"] = clean
        params["x_grid"] = _grid(obj, "x_grid")
        params["y_grid"] = _grid(obj, "y_grid", required=False) or params["x_grid"]
        method = obj.get("method", "integral")
        if method not in ("integral", "contour"):
            raise ConfigError("method", "must be integral or contour")
        params["method"] = method
    elif cmd == "correlate":
        xi = _xi(obj)
        times = _num_list(obj, "times", required=True, positive=True)
        pts = obj.get("points")
        if not isinstance(pts, list) or len(pts) != len(times):
            raise ConfigError("points", "one list of positions per time is required")
        for i, row in enumerate(pts):
            if not isinstance(row, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in row):
                raise ConfigError(f"points[{i}]", "must be a list of numbers")
        params["times"] = times
        params["points"] = [[float(v) for v in row] for row in pts]
    elif cmd == "mgf":
        xi = _xi(obj, finite=False)
        times = _num_list(obj, "times", required=True, positive=True)
        chi = obj.get("chi")
        if chi is None:
            raise ConfigError("chi", "required")
        chis = chi if isinstance(chi, list) else [chi] * len(times)
        if len(chis) != len(times):
            raise ConfigError("chi", "one chi per time is required")
        params["times"] = times
        params["chi"] = [_chi_spec(c, f"chi[{i}]") for i, c in enumerate(chis)]
        default = None
        inds = [c for c in params["chi"] if c["kind"] == "indicator"]
        if inds:
            default = {"a": min(c["a"] for c in inds), "b": max(c["b"] for c in inds), "n": m}
        grid = _grid(obj, "grid", required=default is None, default_n=m)
        params["grid"] = grid or default
        params["refine"] = bool(obj.get("refine", False))
        if "L" in obj:
            params["L"] = _num(obj, "L", positive=True)
        elif isinstance(xi, InfiniteConfigSpec):
            raise ConfigError("L", "required for an infinite configuration")
    elif cmd == "conditions":
        xi = _xi(obj, finite=False)
        p = obj.get("params")
        if not isinstance(p, dict):
            raise ConfigError("params", "required object {C0, alpha, C1, beta, C2}")
        params["params"] = {
            k: _num(p, k, f"params.{k}", required=True, positive=True) for k in ("C0", "alpha", "C1", "beta", "C2")
        }
        params["L_grid"] = _num_list(obj, "L_grid", required=True, positive=True)
        if any(b <= a for a, b in zip(params["L_grid"], params["L_grid"][1:])):
            raise ConfigError("L_grid", "must be increasing")
    elif cmd == "truncation":
        xi = _xi(obj, finite=False, default=config_from_json({"lattice": {}}))
        params["t"] = _num(obj, "t", default=0.2, positive=True)
        params["grid"] = _grid(obj, "grid", required=False) or {"a": -2.0, "b": 2.0, "n": 41}
        params["L_list"] = _num_list(obj, "L_list", default=[10.0, 100.0, 1000.0, 1e4, 1e5, 1e6], positive=True, min_len=3)
        params["mgf_L_list"] = _num_list(obj, "mgf_L_list", default=[10.0, 100.0, 1000.0, 1e4, 1e5], positive=True, min_len=3)
        for key in ("L_list", "mgf_L_list"):
            if any(b <= a for a, b in zip(params[key], params[key][1:])):
                raise ConfigError(key, "must be increasing")
    elif cmd == "verify":
        suite = obj.get("suite", "theorem1")
        if suite not in SUITES:
            raise ConfigError("suite", f"must be one of {', '.join(SUITES)}")
        params["suite"] = suite
        params["retry"] = bool(obj.get("retry", True))
        params["stream_base"] = _num(obj, "stream_base", default=0, nonneg=True, integer=True)
        params["build_id"] = str(obj.get("build_id", f"dyson-cbm {__version__}"))
        if suite == "theorem1":
            if "functional" in obj:
                xi = _xi(obj)
                params["functional"] = _functional(obj["functional"], "functional").to_json()
                params["T"] = _num(obj, "T", required=True, positive=True)
            n_paths = n_paths or 100_000
        elif suite == "martingale":
            if "config" in obj:
                xi = _xi(obj)
                params["T"] = _num(obj, "T", default=1.0, positive=True)
                params["step"] = _num(obj, "step", default=params["T"] / 20, positive=True)
            n_paths = n_paths or 100_000
        elif suite == "corollary2":
            xi = _xi(obj, default=config_from_json([-1.0, 1.0]))
            boxes = obj.get("boxes", [[0.3, -1.0, 0.2], [0.6, 1.0, 0.2]])
            if not isinstance(boxes, list) or not boxes:
                raise ConfigError("boxes", "must be a nonempty list of [t, center, width]")
            clean = []
            for i, b in enumerate(boxes):
                if not (isinstance(b, list) and len(b) in (2, 3) and all(isinstance(v, (int, float)) for v in b)):
                    raise ConfigError(f"boxes[{i}]", "must be [t, center] or [t, center, width]")
                w = float(b[2]) if len(b) == 3 else 0.2
                if not 0 < w <= 0.2 or not b[0] > 0:
                    raise ConfigError(f"boxes[{i}]", "needs t > 0 and 0 < width <= 0.2")
                clean.append([float(b[0]), float(b[1]), w])
            params["boxes"] = clean
            n_paths = n_paths or 1_000_000
        elif suite == "fourth_moment":
            xi = _xi(obj, default=config_from_json([-1.0, 0.0, 1.0]))
            phi = _chi_spec({"kind": "bump", **obj.get("phi", {"center": 0.0, "half_width": 2.0})}, "phi")
            params["phi"] = phi
            params["s"] = _num(obj, "s", default=0.5, nonneg=True)
            params["gaps"] = _num_list(
                obj, "gaps", default=[0.01, 0.02, 0.04, 0.08, 0.16, 0.32], positive=True, min_len=2
            )
            n_paths = n_paths or 100_000
        elif suite == "collision":
            xi = _xi(obj, default=config_from_json([0.0, 0.05]))
            params["T"] = _num(obj, "T", default=1.0, positive=True)
            params["step"] = _num(obj, "step", default=0.01, positive=True)
            params["adaptive"] = bool(obj.get("adaptive", True))
            params["max_step"] = _num(obj, "max_step", default=DEFAULT_MAX_STEP, positive=True)
            n_paths = n_paths or 10_000
        elif suite == "truncation":
            xi = _xi(obj, finite=False, default=config_from_json({"lattice": {}}))
            params["t"] = _num(obj, "t", default=0.2, positive=True)
            params["grid"] = _grid(obj, "grid", required=False) or {"a": -2.0, "b": 2.0, "n": 41}
            params["L_list"] = _num_list(obj, "L_list", default=[10.0, 100.0, 1000.0, 1e4, 1e5, 1e6], positive=True, min_len=3)
            params["mgf_L_list"] = _num_list(obj, "mgf_L_list", default=[10.0, 100.0, 1000.0, 1e4, 1e5], positive=True, min_len=3)

    resolved = {
        "command": cmd,
        "config": _xi_json(xi),
        "seed": seed,
        "workers": workers,
        "out": out,
        "Q": Q,
        "m": m,
        "N_c": N_c,
        "n_paths": n_paths,
        **params,
    }
    return RunConfig(cmd, xi, params, seed, workers, out, Q, m, N_c, n_paths, resolved)


# ---------------------------------------------------------------------------
# artifacts


def _csv_writer(path, cfg, header):
    fh = open(path, "w", newline="")
    fh.write("# config: " + json.dumps(H._plain(cfg.artifact_config()), sort_keys=True) + "\n")
    w = csv.writer(fh)
    w.writerow(header)
    return fh, w


def _write_json(path, cfg, payload):
    doc = {"config": cfg.artifact_config(), **payload}
    with open(path, "w") as fh:
        fh.write(json.dumps(H._plain(doc), sort_keys=True, indent=2) + "\n")


def _r(v):
    return repr(float(v))


# ---------------------------------------------------------------------------
# commands; each returns (exit status, summary text)


def _ctx(cfg, xi=None):
    xi = xi if xi is not None else cfg.xi
    return KernelContext(xi, Q=cfg.Q, contour=default_contour(xi.array, cfg.N_c))


def _cmd_simulate(cfg):
    p = cfg.params
    grid = TimeGrid.uniform(p["T"], p["step"])
    rng = H.RngStream(cfg.seed, 0)
    path = f"{cfg.out}.trajectories.csv"
    if p["method"] == "cbm":
        systems = [sample_cbm_system(cfg.xi.array, grid, cfg.seed, k * 2 * cfg.xi.n) for k in range(cfg.n_paths)]
        path = f"{cfg.out}.paths.csv"
        header = "config: " + json.dumps(H._plain(cfg.artifact_config()), sort_keys=True)
        write_paths_csv(path, systems, header_comment=header)
        return EXIT_OK, f"{cfg.n_paths} CBM systems -> {path}"
    if p["method"] == "gue":
        ens = simulate_gue_ensemble(cfg.xi, grid, cfg.n_paths, rng)
    else:
        ens = simulate_sde_ensemble(
            cfg.xi, grid, cfg.n_paths, rng, dt_min=p["dt_min"], max_step=p["max_step"], adaptive=p["adaptive"]
        )
    header = "config: " + json.dumps(H._plain(cfg.artifact_config()), sort_keys=True)
    write_trajectories_csv(path, ens, header_comment=header)
    if ens.breakdowns:
        from .errors import CollisionBreakdown

        raise CollisionBreakdown(f"{ens.breakdowns} of {cfg.n_paths} paths lost their ordering (see {path})")
    return EXIT_OK, f"{cfg.n_paths} {p['method']} trajectories, 0 breakdowns -> {path}"


def _cmd_density(cfg):
    p = cfg.params
    xs = _linspace(p["grid"])
    rho = density(_ctx(cfg), p["t"], xs)
    path = f"{cfg.out}.density.csv"
    fh, w = _csv_writer(path, cfg, ["x", "rho"])
    with fh:
        for x, r in zip(xs, rho):
            w.writerow([_r(x), _r(r)])
    mass = float(np.trapezoid(rho, xs)) if hasattr(np, "trapezoid") else float(np.trapz(rho, xs))
    return EXIT_OK, f"mass on grid {mass:.6f} -> {path}"


def _cmd_kernel(cfg):
    p = cfg.params
    xs = _linspace(p["x_grid"])
    ys = _linspace(p["y_grid"])
    ctx = _ctx(cfg)
    path = f"{cfg.out}.kernel.csv"
    fh, w = _csv_writer(path, cfg, ["s", "x", "t", "y", "K"])
    rows = 0
    with fh:
        for s, t in p["pairs"]:
            if p["method"] == "contour":
                vals = np.array([[contour_kernel_K(ctx, s, x, t, y) for y in ys] for x in xs])
            else:
                X, Y = np.meshgrid(xs, ys, indexing="ij")
                vals = kernel_K(ctx, s, X, t, Y)
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    w.writerow([_r(s), _r(x), _r(t), _r(y), _r(vals[i, j])])
                    rows += 1
    return EXIT_OK, f"{rows} kernel values ({p['method']}) -> {path}"


def _cmd_correlate(cfg):
    p = cfg.params
    req = CorrelationRequest(tuple(p["times"]), tuple(tuple(r) for r in p["points"]))
    value = multitime_correlation(_ctx(cfg), req)
    path = f"{cfg.out}.correlation.json"
    _write_json(path, cfg, {"times": p["times"], "points": p["points"], "value": value})
    return EXIT_OK, f"rho = {value:.10g} -> {path}"


def _cmd_mgf(cfg):
    from .configuration import restrict

    p = cfg.params
    xi = restrict(cfg.xi, p["L"]) if "L" in p else cfg.xi
    g = p["grid"]
    chis = [_chi_callable(c) for c in p["chi"]]
    res = fredholm_mgf_result(_ctx(cfg, xi), p["times"], chis, (g["a"], g["b"], g["n"]), refine=p["refine"])
    path = f"{cfg.out}.mgf.json"
    _write_json(
        path,
        cfg,
        {"times": p["times"], "chi_spec": p["chi"], "grid": g, "value": res.value, "refinement_delta": res.refinement_delta},
    )
    return EXIT_OK, f"mgf = {res.value:.12g} -> {path}"


def _cmd_conditions(cfg):
    p = cfg.params
    q = p["params"]
    rep = check_conditions(cfg.xi, ConditionParams(q["C0"], q["alpha"], q["C1"], q["beta"], q["C2"]), p["L_grid"])
    path = f"{cfg.out}.conditions.json"
    _write_json(path, cfg, {"report": rep.to_json()})
    return EXIT_OK, f"C1 {'satisfied' if rep.satisfied_C1 else 'violated'}, C2 {'satisfied' if rep.satisfied_C2 else 'violated'} -> {path}"


def _truncation_tables(cfg):
    p = cfg.params
    xs = _linspace(p["grid"])
    dens = H.truncation_convergence(cfg.xi, p["L_list"], (p["t"], xs), Q=cfg.Q)
    mgf = H.truncation_convergence_mgf(cfg.xi, p["mgf_L_list"], p["t"], m=cfg.m, Q=cfg.Q)
    return dens, mgf


def _cmd_truncation(cfg):
    dens, mgf = _truncation_tables(cfg)
    path = f"{cfg.out}.truncation.json"
    _write_json(path, cfg, {"density": dens.to_json(), "mgf": mgf.to_json()})
    csv_path = f"{cfg.out}.truncation.csv"
    fh, w = _csv_writer(csv_path, cfg, ["what", "L", "difference_to_previous"])
    with fh:
        for tab in (dens, mgf):
            for L, d in zip(tab.L_list, [None, *tab.differences]):
                w.writerow([tab.what, _r(L), "" if d is None else _r(d)])
    ok = dens.passed and mgf.passed
    return (EXIT_OK if ok else EXIT_FAIL), (
        f"{'PASS' if ok else 'FAIL'} density final {dens.final_difference:.2e}, mgf final {mgf.final_difference:.2e} -> {path}"
    )


def _verify_reports(cfg):
    p = cfg.params
    suite = p["suite"]
    kw = dict(seed=cfg.seed, stream_base=p["stream_base"], workers=cfg.workers)
    if suite == "theorem1":
        if "functional" in p:
            F = H.functional_from_json(p["functional"])
            return [H.verify_theorem_1(cfg.xi, F, p["T"], cfg.n_paths, retry=p["retry"], **kw)]
        return H.theorem1_suite(cfg.n_paths, retry=p["retry"], **kw)
    if suite == "martingale":
        if cfg.xi is not None:
            grid = TimeGrid.uniform(p["T"], p["step"])
            return [H.verify_martingale(cfg.xi, grid, cfg.n_paths, retry=p["retry"], entries=True, **kw)]
        return H.martingale_suite(cfg.n_paths, retry=p["retry"], **kw)
    if suite == "corollary2":
        boxes = [H.Box(*b) for b in p["boxes"]]
        return [H.verify_corollary_2(cfg.xi, boxes, cfg.n_paths, retry=p["retry"], **kw)]
    if suite == "fourth_moment":
        phi = p["phi"]
        pairs = [(p["s"], p["s"] + g) for g in p["gaps"]]
        return [H.fourth_moment_scaling(cfg.xi, H.Bump(phi["center"], phi["half_width"], phi["height"]), pairs, cfg.n_paths, **kw)]
    if suite == "collision":
        grid = TimeGrid.uniform(p["T"], p["step"])
        return [H.collision_scan(cfg.xi, grid, cfg.n_paths, adaptive=p["adaptive"], max_step=p["max_step"], **kw)]
    if suite == "truncation":
        return list(_truncation_tables(cfg))
    raise ConfigError("suite", "unknown")  # pragma: no cover


def _cmd_verify(cfg):
    reports = _verify_reports(cfg)
    path = f"{cfg.out}.report.json"
    with open(path, "w") as fh:
        fh.write(H.dump_reports(reports, cfg.params["build_id"], {"config": cfg.artifact_config()}) + "\n")
    with open(f"{cfg.out}.report.txt", "w") as fh:
        fh.write(H.text_report(reports) + "\n")
    passed = sum(1 for r in reports if r.passed)
    ok = passed == len(reports)
    return (EXIT_OK if ok else EXIT_FAIL), f"{'PASS' if ok else 'FAIL'} {passed}/{len(reports)} -> {path}"


_DISPATCH = {
    "simulate": _cmd_simulate,
    "density": _cmd_density,
    "kernel": _cmd_kernel,
    "correlate": _cmd_correlate,
    "mgf": _cmd_mgf,
    "conditions": _cmd_conditions,
    "truncation": _cmd_truncation,
    "verify": _cmd_verify,
}


def _write_error(prefix, exc, status):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_status": status}
    if isinstance(exc, ConfigError):
        doc["path"] = exc.path
        doc["reason"] = exc.reason
    try:
        with open(f"{prefix}.error.json", "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    except OSError:
        pass


def run(cfg: RunConfig, stream=None):
    """Execute a parsed configuration; returns the exit status."""
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    try:
        status, summary = _DISPATCH[cfg.command](cfg)
    except NumericalBreakdown as exc:
        _write_error(cfg.out, exc, EXIT_NUMERIC)
        print(f"{cfg.command}  {time.perf_counter() - t0:.2f}s  numerical breakdown: {exc}", file=stream)
        return EXIT_NUMERIC
    except (ConfigurationError, ValueError) as exc:
        _write_error(cfg.out, exc, EXIT_CONFIG)
        print(f"{cfg.command}  {time.perf_counter() - t0:.2f}s  configuration error: {exc}", file=stream)
        return EXIT_CONFIG
    print(f"{cfg.command}  {time.perf_counter() - t0:.2f}s  {summary}", file=stream)
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="dyson-cbm", description="Dyson model laboratory")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, help="worker threads (default: $DYSON_CBM_WORKERS or all cores)")
    ap.add_argument("--out", help="output path prefix")
    ap.add_argument("--build-id", help="build identifier embedded in verify reports")
    args = ap.parse_args(argv)
    prefix = args.out or "dyson"
    try:
        with open(args.config) as fh:
            text = fh.read()
        obj = json.loads(text) if text.strip().startswith("{") else None
        if isinstance(obj, dict) and "command" in obj and obj["command"] != args.command:
            raise ConfigError("command", f"config says {obj['command']!r} but {args.command!r} was requested")
        overrides = {"command": args.command, "seed": args.seed, "workers": args.workers, "out": args.out}
        if args.build_id is not None:
            overrides["build_id"] = args.build_id
        cfg = parse_config(text, overrides)
    except (ConfigurationError, OSError, json.JSONDecodeError) as exc:
        if not isinstance(exc, ConfigError):
            exc = ConfigError("config" if isinstance(exc, OSError) else "$", str(exc))
        _write_error(prefix, exc, EXIT_CONFIG)
        print(f"{args.command}  0.00s  configuration error: {exc}")
        return EXIT_CONFIG
    except DysonError as exc:  # pragma: no cover
        _write_error(prefix, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
