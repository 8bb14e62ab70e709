"""Command line driver: configuration, stage orchestration and reports.

    jangads verify|barriers|solve-radial|solve-coupled|mass|report
            [--config PATH] [--out DIR] [--format csv|json] [--seed N]

Files written to --out are deterministic for a given (config, seed);
timings go to stderr only.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import barriers as B
from . import geometry as G
from . import jang as J
from . import mass as M
from . import radial_solver as R
from . import warped_graph as W

STAGES = ("verify", "barriers", "solve-radial", "solve-coupled", "mass",
          "report")
FAMILIES = ("pure_ads", "conformal_perturbation", "tensor_perturbation",
            "radial_table")

DEFAULTS = {
    "n": 3,
    "tau": 2.25,
    "data": {"family": "pure_ads"},
    "warp": "v0",
    "solver": {
        "rho_min": 1e-2, "rho_max": 0.25, "grid_n": 256, "grid_type": "log",
        "epsilon_start": 1e-2, "epsilon_min": 1e-2 * 2.0 ** -16,
        "newton_tol": 1e-10, "limit_tol": 1e-7, "max_outer": 30,
        "coupled_tol": 1e-6, "phi": 0.0, "phi0": 0.0,
    },
    "barriers": {"C0": None, "points": 10000},
    "mass": {"radii": "auto"},
    "verify": {"samples": 20},
    "output": {"path": "out", "format": "csv"},
    "seed": 0,
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - "
                         + "\n  - ".join(self.problems))


@dataclass
class RunReport:
    stage: str
    status: str
    diagnostics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "pass"


# ---------------------------------------------------------------- config

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) \
        and math.isfinite(x)


def validate(cfg: dict, stage: str) -> list:
    """Every problem with the configuration, in one list."""
    bad = []
    n, tau = cfg.get("n"), cfg.get("tau")
    if not (isinstance(n, int) and not isinstance(n, bool) and 3 <= n <= 7):
        bad.append(f"n must be an integer in 3..7 (got {n!r})")
        n = None
    if not (_num(tau) and tau > 0):
        bad.append(f"tau must be a positive number (got {tau!r})")
        tau = None
    if n is not None and tau is not None:
        if stage in ("barriers", "solve-radial", "solve-coupled") and \
                not n / 2 < tau < n:
            bad.append(f"tau must satisfy n/2 < tau < n for stage {stage} "
                       f"(got tau={tau}, n={n})")
        if stage == "mass" and not 2 * tau > n:
            bad.append(f"mass extrapolation requires 2*tau > n "
                       f"(got 2*tau={2 * tau}, n={n})")
    data = cfg.get("data", {})
    fam = data.get("family") if isinstance(data, dict) else None
    if fam not in FAMILIES:
        bad.append(f"data.family must be one of {', '.join(FAMILIES)} "
                   f"(got {fam!r})")
    elif fam in ("conformal_perturbation", "tensor_perturbation"):
        keys = ("c", "p") if fam == "conformal_perturbation" else (
            "amplitude", "p")
        for k in keys:
            if not _num(data.get(k)):
                bad.append(f"data.{k} must be a number for {fam}")
        if fam == "tensor_perturbation" and data.get("mode", 0) not in (0, 1,
                                                                         2):
            bad.append("data.mode must be 0, 1 or 2")
        K = data.get("K")
        if K is not None and not (isinstance(K, dict) and all(
                _num(K.get(k, 0.0)) for k in ("amplitude", "decay"))):
            bad.append("data.K must be {'amplitude': x, 'decay': q}")
    elif fam == "radial_table":
        tabs = data.get("tables", {})
        if not isinstance(tabs, dict) or not tabs:
            bad.append("data.tables must map profile names to CSV paths")
        else:
            for k, path in tabs.items():
                if k not in ("a", "c", "k", "kr", "kt"):
                    bad.append(f"data.tables: unknown profile {k!r}")
                elif not os.path.isfile(str(path)):
                    bad.append(f"data.tables.{k}: no such file {path!r}")
    warp = cfg.get("warp")
    if isinstance(warp, dict):
        if not os.path.isfile(str(warp.get("table", ""))):
            bad.append(f"warp.table: no such file {warp.get('table')!r}")
    elif warp not in ("v0", "rho_inverse"):
        bad.append(f"warp must be 'v0', 'rho_inverse' or {{'table': path}} "
                   f"(got {warp!r})")
    s = cfg.get("solver", {})
    lo, hi = s.get("rho_min"), s.get("rho_max")
    if not (_num(lo) and _num(hi) and 0 < lo < hi <= 0.5):
        bad.append("solver needs 0 < rho_min < rho_max <= 1/2")
    if not (isinstance(s.get("grid_n"), int) and s["grid_n"] >= 16):
        bad.append("solver.grid_n must be an integer >= 16")
    if s.get("grid_type") not in ("log", "uniform"):
        bad.append("solver.grid_type must be 'log' or 'uniform'")
    e0, e1 = s.get("epsilon_start"), s.get("epsilon_min")
    if not (_num(e0) and _num(e1) and e0 >= e1 > 0):
        bad.append("solver needs epsilon_start >= epsilon_min > 0")
    for k in ("newton_tol", "limit_tol", "coupled_tol"):
        if not (_num(s.get(k)) and s[k] > 0):
            bad.append(f"solver.{k} must be positive")
    if not (isinstance(s.get("max_outer"), int) and s["max_outer"] >= 1):
        bad.append("solver.max_outer must be a positive integer")
    for k in ("phi", "phi0"):
        if not _num(s.get(k)):
            bad.append(f"solver.{k} must be a number")
    C0 = cfg.get("barriers", {}).get("C0")
    if C0 is not None and not (_num(C0) and C0 > 0):
        bad.append("barriers.C0 must be positive or null")
    pts = cfg.get("barriers", {}).get("points")
    if not (isinstance(pts, int) and pts >= 2):
        bad.append("barriers.points must be an integer >= 2")
    radii = cfg.get("mass", {}).get("radii")
    if radii != "auto":
        ok = (isinstance(radii, list) and len(radii) >= 4
              and all(_num(r) and 0 < r < 0.5 for r in radii)
              and all(b < a for a, b in zip(radii, radii[1:])))
        if not ok:
            bad.append("mass.radii must be 'auto' or >= 4 strictly "
                       "decreasing radii in (0, 1/2)")
    if cfg.get("output", {}).get("format") not in ("csv", "json"):
        bad.append("output.format must be 'csv' or 'json'")
    seed = cfg.get("seed")
    if not (isinstance(seed, int) and 0 <= seed < 2 ** 64):
        bad.append("seed must be an unsigned 64-bit integer")
    return bad


def load_config(path=None, stage="verify", overrides=None) -> dict:
    user = {}
    if path is not None:
        with open(path) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError([f"{path}: not valid JSON ({exc})"])
        if not isinstance(user, dict):
            raise ConfigError([f"{path}: top level must be an object"])
    cfg = _merge(DEFAULTS, user)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "seed":
            cfg["seed"] = v
        else:
            cfg["output"][k] = v
    problems = validate(cfg, stage)
    if problems:
        raise ConfigError(problems)
    return cfg


# ---------------------------------------------------------------- builders

def build_data(cfg) -> G.InitialData:
    n, tau, d = cfg["n"], cfg["tau"], cfg["data"]
    fam = d["family"]
    if fam == "pure_ads":
        return G.pure_ads(n, tau)
    if fam == "conformal_perturbation":
        return G.conformal_perturbation(n, tau, d["c"], d["p"], d.get("K"))
    if fam == "tensor_perturbation":
        return G.tensor_perturbation(n, tau, d["amplitude"], d.get("mode", 0),
                                     d["p"], d.get("K"))
    tabs = {k: G.read_radial_table(p) for k, p in d["tables"].items()}
    return G.radial_table(n, tau, tabs)


def build_warp(cfg) -> G.ScalarField:
    w = cfg["warp"]
    if w == "v0":
        return W.warp_v0()
    if w == "rho_inverse":
        return W.warp_rho_inverse()
    return W.warp_from_samples(*G.read_radial_table(w["table"]))


def build_grid(cfg) -> R.RadialGrid:
    s = cfg["solver"]
    return R.RadialGrid(s["rho_min"], s["rho_max"], s["grid_n"],
                        s["grid_type"])


def eps_schedule(cfg) -> list:
    s = cfg["solver"]
    k = max(0, int(round(math.log2(s["epsilon_start"] / s["epsilon_min"]))))
    return [s["epsilon_start"] * 2.0 ** -i for i in range(k + 1)]


def _barrier_spec(cfg, data, u):
    C0 = cfg["barriers"]["C0"]
    if C0 is None:
        C0 = B.estimate_C0(data, u)
    return B.make_spec(cfg["n"], cfg["tau"], C0)


# ---------------------------------------------------------------- output

def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating))
                        else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(cfg, stage, header, rows, report: RunReport):
    out = cfg["output"]["path"]
    os.makedirs(out, exist_ok=True)
    base = os.path.join(out, stage.replace("-", "_"))
    if header is not None:
        if cfg["output"]["format"] == "csv":
            _write_table(base + ".csv", header, rows)
            report.artifacts.append(base + ".csv")
        else:
            report.diagnostics["table"] = {"columns": header,
                                           "rows": [list(r) for r in rows]}
    report.artifacts.append(base + ".json")
    _dump(base + ".json", asdict(report))


# ---------------------------------------------------------------- stages

def _sample_points(rng, n, count, rmax=0.85):
    pts = []
    while len(pts) < count:
        x = rng.uniform(-rmax, rmax, n)
        if 0.05 < np.linalg.norm(x) < rmax:
            pts.append(x)
    return pts


def _quadratic_field(rng, n, scale=0.3):
    a = rng.normal(size=n) * scale
    S = rng.normal(size=(n, n)) * scale
    S = 0.5 * (S + S.T)
    return G.ScalarField(lambda x: float(a @ x + 0.5 * x @ S @ x),
                         lambda x: a + S @ x, lambda x: S.copy())


def stage_verify(cfg):
    rng = np.random.default_rng(cfg["seed"])
    data, u = build_data(cfg), build_warp(cfg)
    n = cfg["n"]
    worst = {"warped_christoffels": 0.0, "graph_laplacian": 0.0,
             "trace_vs_mean_curvature": 0.0, "linearization": 0.0,
             "kernel_eigen_relation": 0.0}
    for x in _sample_points(rng, n, cfg["verify"]["samples"]):
        f, eta, v = (_quadratic_field(rng, n) for _ in range(3))
        Gw = W.warped_christoffels(data.g, u, x)
        Gfd = G.christoffels(W.warped_metric(data.g, u), np.append(x, 0.0))
        worst["warped_christoffels"] = max(
            worst["warped_christoffels"],
            float(np.abs(Gw - Gfd).max() / max(1.0, np.abs(Gw).max())))
        lap = W.graph_laplacian(data.g, u, f, v, x)
        ref = G.laplacian(W.graph_metric_field(data.g, u, f), v, x)
        worst["graph_laplacian"] = max(worst["graph_laplacian"],
                                       abs(lap - ref) / max(1.0, abs(ref)))
        gg = W.graph_geometry(data.g, u, f, x)
        tr = float(np.einsum("ij,ij->", gg.gbar_inv, gg.A))
        worst["trace_vs_mean_curvature"] = max(
            worst["trace_vs_mean_curvature"], abs(tr - gg.H))
        lin = J.apply_linearization(data, u, f, eta, x)
        t = 1e-5
        shifted = lambda c: G.ScalarField(
            lambda y: f(y) + c * eta(y), lambda y: f.grad(y) + c * eta.grad(y),
            lambda y: f.hess(y) + c * eta.hess(y))
        gat = (J.jang_operator(data, u, shifted(t), x).value
               - J.jang_operator(data, u, shifted(-t), x).value) / (2 * t)
        worst["linearization"] = max(worst["linearization"],
                                     abs(lin - gat) / max(1.0, abs(gat)))
        V0 = G.kernel_field(0, n)
        bf = G.hyperbolic_field(n)
        worst["kernel_eigen_relation"] = max(
            worst["kernel_eigen_relation"],
            abs(G.laplacian(bf, V0, x) - n * V0(x)) / V0(x))
    tol = {"warped_christoffels": 1e-6, "graph_laplacian": 1e-6,
           "trace_vs_mean_curvature": 1e-12, "linearization": 1e-5,
           "kernel_eigen_relation": 1e-8}
    checks = {k: {"value": worst[k], "tol": tol[k], "pass": worst[k] <= tol[k]}
              for k in worst}
    if data.family.get("family") == "pure_ads":
        m = M.mass_flux(data, 0, 1e-3)
        checks["pure_ads_mass_zero"] = {"value": m, "tol": 0.0,
                                        "pass": m == 0.0}
    status = "pass" if all(c["pass"] for c in checks.values()) else "fail"
    rows = [(k, c["value"], c["tol"], int(c["pass"]))
            for k, c in checks.items()]
    rep = RunReport("verify", status, {"checks": checks}, [], cfg,
                    cfg["seed"])
    return rep, ["check", "value", "tolerance", "pass"], rows


def stage_barriers(cfg):
    data, u = build_data(cfg), build_warp(cfg)
    spec = _barrier_spec(cfg, data, u)
    grid = np.geomspace(spec.rho0 * 1e-6, spec.rho0,
                        cfg["barriers"]["points"])
    res = B.verify_barrier_inequality(spec, grid)
    xi, dxi = B.xi(spec, grid)
    fplus = B.BarrierCache(spec)(grid)
    x = grid / spec.rho0
    ok = ((res["lhs"] < 0) & (xi >= x ** spec.tau * (1 - 1e-13))
          & (xi <= x ** (spec.n / 2) * (1 + 1e-13)))
    diag = {"C0": spec.C0, "rho0": spec.rho0, "lambda": spec.lam,
            "max_lhs": res["max_lhs"], "inequality_pass":
            res["inequality_pass"], "xi_bounds_pass": res["xi_bounds_pass"],
            "violations": len(res["violations"])}
    rows = [(r, a, b, c, d, int(e)) for r, a, b, c, d, e in
            zip(grid, xi, dxi, fplus, res["lhs"], ok)]
    rep = RunReport("barriers", "pass" if res["pass"] else "fail", diag, [],
                    cfg, cfg["seed"])
    return rep, ["rho", "xi", "xi_prime", "f_plus", "inequality_lhs",
                 "pass"], rows


def _node_residual(r):
    r = np.array(r, float)
    r[0] = r[-1] = float("nan")  # Dirichlet rows
    return r


def _barrier_columns(cfg, data, u, rho):
    nan = np.full(rho.size, float("nan"))
    try:
        spec = _barrier_spec(cfg, data, u)
    except B.BarrierError:
        return nan, nan
    inside = rho <= spec.rho0
    hi = nan.copy()
    hi[inside] = B.barrier_function(spec, rho[inside])
    return -hi, hi


def stage_solve_radial(cfg):
    data, u = build_data(cfg), build_warp(cfg)
    grid = build_grid(cfg)
    s = cfg["solver"]
    sweep = R.epsilon_sweep(data, u, grid, eps_schedule(cfg), s["phi"],
                            s["phi0"], s["limit_tol"], s["newton_tol"])
    sol = sweep.last
    diag = {"converged": sweep.converged, "levels": len(sweep.solutions),
            "final_eps": sol.eps, "sup_f": float(np.abs(sol.f).max()),
            "c0_bound": sol.c0_bound, "c0_ok": sol.c0_ok,
            "geometric_residual": sweep.geometric_residual,
            "extrapolated_residual": sweep.extrapolated_residual,
            "sweep_differences": sweep.differences}
    lo, hi = _barrier_columns(cfg, data, u, grid.rho)
    sandwich_ok = True
    try:
        spec = _barrier_spec(cfg, data, u)
        if grid.rho_max <= spec.rho0:
            cmp = R.verify_comparison(sol, spec, data, u)
            diag["comparison"] = {k: cmp[k] for k in (
                "hypotheses_hold", "hypotheses", "sandwich", "min_gap_upper",
                "min_gap_lower")}
            sandwich_ok = cmp["sandwich"] is not False
        else:
            diag["comparison"] = (f"skipped: rho_max={grid.rho_max} exceeds "
                                  f"the barrier radius rho0={spec.rho0:.6g}")
    except B.BarrierError as exc:
        diag["comparison"] = f"skipped: {exc}"
    ok = sweep.converged and sol.c0_ok and sandwich_ok
    jr = _node_residual(R.grid_residual(data, u, grid, sol.f))
    rows = list(zip(sol.rho, sol.f, sol.df_drho, jr, lo, hi))
    rep = RunReport("solve-radial", "pass" if ok else "fail", diag, [], cfg,
                    cfg["seed"])
    return rep, ["rho", "f", "df_drho", "jang_residual", "barrier_lo",
                 "barrier_hi"], rows


def stage_solve_coupled(cfg):
    data = build_data(cfg)
    grid = build_grid(cfg)
    s = cfg["solver"]
    sol = R.solve_coupled(data, grid, s["epsilon_min"], s["phi"], s["phi0"],
                          s["coupled_tol"], s["max_outer"],
                          newton_tol=s["newton_tol"],
                          limit_tol=s["limit_tol"],
                          eps_schedule=eps_schedule(cfg))
    diag = {"converged": sol.converged, "outer_iterations":
            sol.outer_iterations, "jang_residual": sol.jang_residual,
            "warp_residual": sol.warp_residual, "eps": sol.eps,
            "history": sol.history}
    pair = (sol.u, R._rho_derivatives(grid, sol.u)[0])
    jr = _node_residual(R.grid_residual(data, pair, grid, sol.f))
    df = R._rho_derivatives(grid, sol.f)[0]
    lo, hi = _barrier_columns(cfg, data, W.warp_v0(), sol.rho)
    rows = list(zip(sol.rho, sol.f, df, sol.u, jr, lo, hi))
    rep = RunReport("solve-coupled", "pass" if sol.converged else "fail",
                    diag, [], cfg, cfg["seed"])
    return rep, ["rho", "f", "df_drho", "u", "jang_residual", "barrier_lo",
                 "barrier_hi"], rows


def stage_mass(cfg):
    data = build_data(cfg)
    radii = cfg["mass"]["radii"]
    report = M.mass_report(data, None if radii == "auto" else radii)
    rows = []
    for i, lim in enumerate(report.limits):
        for r, fl in zip(lim.rhos, lim.fluxes):
            rows.append((i, r, fl, lim.value, lim.residual))
    diag = {"E": report.E, "P": report.P, "causality": report.verdict,
            "fit_exponents": report.fit_exponents,
            "fallback": [lim.fallback for lim in report.limits]}
    rep = RunReport("mass", "pass", diag, [], cfg, cfg["seed"])
    return rep, ["kernel_index", "rho", "flux", "extrapolated",
                 "fit_residual"], rows


def stage_report(cfg):
    out = cfg["output"]["path"]
    stages = {}
    if os.path.isdir(out):
        for name in sorted(os.listdir(out)):
            if name.endswith(".json") and name != "report.json":
                with open(os.path.join(out, name)) as fh:
                    doc = json.load(fh)
                stages[doc.get("stage", name)] = {
                    "status": doc.get("status"),
                    "diagnostics": doc.get("diagnostics", {}),
                    "artifacts": doc.get("artifacts", [])}
    for st in stages.values():
        st["diagnostics"].pop("table", None)
    ok = bool(stages) and all(s["status"] == "pass" for s in stages.values())
    rep = RunReport("report", "pass" if ok else "fail", {"stages": stages},
                    [], cfg, cfg["seed"])
    return rep, None, None


RUNNERS = {"verify": stage_verify, "barriers": stage_barriers,
           "solve-radial": stage_solve_radial,
           "solve-coupled": stage_solve_coupled, "mass": stage_mass,
           "report": stage_report}


def run(cfg: dict, stage: str) -> RunReport:
    rep, header, rows = RUNNERS[stage](cfg)
    _emit(cfg, stage, header, rows, rep)
    return rep


# ---------------------------------------------------------------- entry

def _parser():
    p = argparse.ArgumentParser(
        prog="jangads",
        description="Generalized Jang equation laboratory for "
                    "asymptotically anti-de Sitter initial data.")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", dest="path", help="output directory")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.stage,
                          {"path": args.path, "format": args.format,
                           "seed": args.seed})
    except ConfigError as exc:
        json.dump({"error": "config", "problems": exc.problems}, sys.stdout,
                  indent=2)
        sys.stdout.write("\n")
        return 2
    t0 = time.perf_counter()
    try:
        rep = run(cfg, args.stage)
    except (R.SolverError, R.PreconditionError, B.BarrierError,
            G.GeometryError, ValueError, NotImplementedError,
            FloatingPointError) as exc:
        json.dump({"error": "stage", "stage": args.stage,
                   "type": type(exc).__name__, "message": str(exc)},
                  sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 1
    print(f"{args.stage}: {rep.status} "
          f"({time.perf_counter() - t0:.2f} s)", file=sys.stderr)
    for a in rep.artifacts:
        print(a)
    return 0 if rep.ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
