"""Regularized Jang equation and the coupled Jang/warp system in spherical
symmetry.

Unknowns live on a grid of radii rho_1 = rho[0] < ... < rho[-1] = rho_0.
Derivatives are second order central differences in the grid coordinate
z (z = log rho on the default grid, z = rho on the uniform grid).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .barriers import (BarrierSpec, barrier_derivatives, barrier_function)
from .geometry import InitialData, Profile, RadialData, ScalarField
from .warped_graph import spline_profile

log = logging.getLogger(__name__)

__all__ = [
    "SolverError", "PreconditionError", "RadialGrid", "RadialSolution",
    "SweepResult", "CoupledSolution", "default_eps_schedule",
    "radial_jang_residual", "grid_residual", "continuous_residual",
    "solve_regularized", "epsilon_sweep", "solve_coupled",
    "discrete_laplacian", "verify_comparison", "c0_bound",
]


class SolverError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    rho_min: float
    rho_max: float
    N: int
    kind: str = "log"

    def __post_init__(self):
        if not 0 < self.rho_min < self.rho_max <= 0.5:
            raise ValueError("need 0 < rho_min < rho_max <= 1/2")
        if self.N < 16:
            raise ValueError("grid needs at least 16 nodes")
        if self.kind not in ("log", "uniform"):
            raise ValueError(f"unknown grid kind {self.kind!r}")

    @property
    def z(self):
        if self.kind == "log":
            return np.linspace(math.log(self.rho_min), math.log(self.rho_max),
                               self.N)
        return np.linspace(self.rho_min, self.rho_max, self.N)

    @property
    def rho(self):
        z = self.z
        r = np.exp(z) if self.kind == "log" else z.copy()
        r[0], r[-1] = self.rho_min, self.rho_max
        return r

    @property
    def h(self):
        z = self.z
        return z[1] - z[0]

    def metric_terms(self):
        """(rho_z, rho_zz) at the nodes."""
        r = self.rho
        if self.kind == "log":
            return r, r
        return np.ones_like(r), np.zeros_like(r)


def _d1(v, h):
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return out


def _d2(v, h):
    out = np.zeros_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2
    return out


def _rho_derivatives(grid: RadialGrid, v):
    h = grid.h
    rz, rzz = grid.metric_terms()
    vz, vzz = _d1(v, h), _d2(v, h)
    return vz / rz, (vzz - rzz / rz * vz) / rz ** 2


# ---------------------------------------------------------------- operator

def _coefficients(rd: RadialData, rho):
    A = rd.A(rho)
    _, Gam, m = rd.components(rho)
    return A, Gam, m, rd.kr(rho), rd.kt(rho)


def radial_jang_residual(n, coeffs, u, du, f, p, q, s=1.0, eps=0.0):
    """J_s(f) - eps f for f = f(rho) with f' = p, f'' = q (vectorised).

    coeffs = (A, Gamma^rho_rhorho, m, kr, kt) with m = B'/(2AB) so that
    -g^{ab} Gamma^rho_ab = (n-1) m.
    """
    A, Gam, m, kr, kt = coeffs
    W = 1 + u * u * p * p / A
    sq = np.sqrt(W)
    H = (u / (A * W * sq) * (q - Gam * p + 2 * du / u * p)
         + (n - 1) * u * m * p / sq)
    return H - s * (kr / W + (n - 1) * kt) - eps * f


def _residual_partials(n, coeffs, u, du, p, q, s):
    """d/dq and d/dp of the radial Jang operator."""
    A, Gam, m, kr, kt = coeffs
    W = 1 + u * u * p * p / A
    sq = np.sqrt(W)
    Wp = 2 * u * u * p / A
    inner = q - Gam * p + 2 * du / u * p
    cq = u / (A * W * sq)
    cp = (u / (A * W * sq) * (-Gam + 2 * du / u)
          - 1.5 * u / (A * W * W * sq) * Wp * inner
          + (n - 1) * u * m * (1 / sq - 0.5 * p * Wp / (W * sq))
          + s * kr * Wp / W ** 2)
    return cq, cp


def _warp_arrays(u, rho):
    if isinstance(u, tuple):
        return np.asarray(u[0], float), np.asarray(u[1], float)
    if isinstance(u, ScalarField) and u.profile is not None:
        return u.profile(rho), u.profile(rho, 1)
    if isinstance(u, Profile):
        return u(rho), u(rho, 1)
    raise TypeError("warp must be a radial ScalarField, Profile or "
                    "(u, du) arrays")


def grid_residual(data: InitialData, u, grid: RadialGrid, f, s=1.0, eps=0.0):
    """Discrete residual at the nodes (boundary entries are zero)."""
    rho = grid.rho
    uu, du = _warp_arrays(u, rho)
    p, q = _rho_derivatives(grid, f)
    R = radial_jang_residual(data.n, _coefficients(data.radial, rho), uu, du,
                             f, p, q, s, eps)
    R[0] = R[-1] = 0.0
    return R


def continuous_residual(data: InitialData, u, rho_nodes, f, points,
                        s=1.0, eps=0.0):
    """Radial operator applied to the quintic spline through (rho, f)."""
    prof = spline_profile(rho_nodes, f)
    pts = np.asarray(points, float)
    uu, du = _warp_arrays(u, pts)
    return radial_jang_residual(data.n, _coefficients(data.radial, pts), uu,
                                du, prof(pts), prof(pts, 1), prof(pts, 2), s,
                                eps)


def c0_bound(data: InitialData, grid: RadialGrid, eps, phi, phi0) -> float:
    rho = grid.rho
    trK = np.abs(data.radial.trace_K(data.n, rho)).max()
    return max(trK / eps, abs(phi), abs(phi0))


# ---------------------------------------------------------------- Newton

@dataclass
class RadialSolution:
    rho: np.ndarray
    f: np.ndarray
    eps: float
    s: float
    phi: float
    phi0: float
    newton_iterations: list
    residual_sup: float
    grid: RadialGrid
    success: bool = True
    c0_bound: float = float("nan")

    @property
    def df_drho(self):
        return _rho_derivatives(self.grid, self.f)[0]

    @property
    def c0_ok(self) -> bool:
        return bool(np.abs(self.f).max() <= self.c0_bound + 1e-12)


def _newton(F, jac_bands, f, tol, max_iter=25, max_backtracks=30):
    """Damped Newton with Armijo backtracking on the sup norm.
    Returns (f, iterations, residual) or raises SolverError."""
    R = F(f)
    r0 = np.abs(R).max()
    for it in range(max_iter + 1):
        if not math.isfinite(r0):
            raise SolverError("non-finite residual")
        if r0 <= tol:
            return f, it, r0
        if it == max_iter:
            break
        step = solve_banded((1, 1), jac_bands(f), -R)
        alpha = 1.0
        for _ in range(max_backtracks):
            trial = f + alpha * step
            Rt = F(trial)
            rt = np.abs(Rt).max()
            if math.isfinite(rt) and rt <= (1 - 1e-4 * alpha) * r0:
                break
            alpha *= 0.5
        else:
            raise SolverError("line search failed")
        f, R, r0 = trial, Rt, rt
    raise SolverError(f"Newton did not converge (residual {r0:.3e})")


class _Problem:
    def __init__(self, data, u, grid, eps, phi, phi0):
        self.n = data.n
        self.grid = grid
        self.rho = grid.rho
        self.coeffs = _coefficients(data.radial, self.rho)
        self.u, self.du = _warp_arrays(u, self.rho)
        if np.any(self.u <= 0):
            raise PreconditionError("warping factor must be positive")
        self.eps, self.phi, self.phi0 = eps, phi, phi0
        rz, rzz = grid.metric_terms()
        h = grid.h
        # rows of d/drho and d^2/drho^2 as (lower, diag, upper) weights
        self.D1 = (-1 / (2 * h * rz), 0 * rz, 1 / (2 * h * rz))
        c = rzz / rz / (2 * h)
        self.D2 = ((1 / h ** 2 + c) / rz ** 2, (-2 / h ** 2) / rz ** 2,
                   (1 / h ** 2 - c) / rz ** 2)

    def residual(self, f, s):
        p, q = _rho_derivatives(self.grid, f)
        R = radial_jang_residual(self.n, self.coeffs, self.u, self.du, f, p, q,
                                 s, self.eps)
        R[0] = f[0] - s * self.phi
        R[-1] = f[-1] - s * self.phi0
        return R

    def bands(self, f, s):
        p, q = _rho_derivatives(self.grid, f)
        cq, cp = _residual_partials(self.n, self.coeffs, self.u, self.du, p, q,
                                    s)
        N = f.size
        ab = np.zeros((3, N))
        lo = cq * self.D2[0] + cp * self.D1[0]
        di = cq * self.D2[1] + cp * self.D1[1] - self.eps
        up = cq * self.D2[2] + cp * self.D1[2]
        ab[0, 2:] = up[1:-1]
        ab[1, 1:-1] = di[1:-1]
        ab[2, :-2] = lo[1:-1]
        ab[1, 0] = ab[1, -1] = 1.0
        return ab


def _check_untrapped(data: InitialData, rho1: float):
    rd = data.radial
    H = float(rd.mean_curvature(data.n, rho1))
    trK = float(rd.tangential_trace_K(data.n, rho1))
    if not H - abs(trK) > 0:
        raise PreconditionError(
            f"boundary sphere rho={rho1} is not untrapped: H={H:.6g}, "
            f"|tr K|={abs(trK):.6g}")


def solve_regularized(data: InitialData, u, grid: RadialGrid, eps: float,
                      phi: float = 0.0, phi0: float = 0.0,
                      newton_tol: float = 1e-10, ds0: float = 1 / 8,
                      adaptive: bool = True, ds_min: float = 1e-4,
                      initial: Optional[np.ndarray] = None) -> RadialSolution:
    """Solve J_s(f) = eps f, f(rho_1) = s phi, f(rho_0) = s phi0 for s
    continued from 0 to 1.  With ``initial`` given, a direct solve at s = 1
    is attempted first."""
    if data.radial is None:
        raise PreconditionError("the radial solver needs radial data")
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    _check_untrapped(data, grid.rho_min)
    pb = _Problem(data, u, grid, eps, phi, phi0)
    iters = []
    bound = c0_bound(data, grid, eps, phi, phi0)

    def run(f, s):
        return _newton(lambda v: pb.residual(v, s), lambda v: pb.bands(v, s),
                       f, newton_tol)

    def done(f, s, res):
        return RadialSolution(pb.rho, f, eps, s, phi, phi0, iters, res, grid,
                              True, bound)

    if initial is not None:
        try:
            f, it, res = run(np.array(initial, float), 1.0)
            iters.append(it)
            return done(f, 1.0, res)
        except SolverError:
            log.debug("warm start failed, falling back to continuation")

    f, it, res = run(np.zeros(grid.N), 0.0)
    iters.append(it)
    s, ds, wins = 0.0, ds0, 0
    while s < 1.0:
        s_try = min(1.0, s + ds)
        try:
            f_new, it, res = run(f, s_try)
        except SolverError:
            ds *= 0.5
            wins = 0
            if ds < ds_min:
                raise SolverError(f"continuation stalled at s={s:.6g}")
            continue
        f, s = f_new, s_try
        iters.append(it)
        wins += 1
        if adaptive and wins >= 2:
            ds, wins = 2 * ds, 0
    return done(f, s, res)


# ---------------------------------------------------------------- eps sweep

def default_eps_schedule(k_max: int = 16, start: float = 1e-2):
    return [start * 2.0 ** -k for k in range(k_max + 1)]


@dataclass
class SweepResult:
    solutions: list
    converged: bool
    last: RadialSolution
    extrapolated: np.ndarray
    geometric_residual: float
    extrapolated_residual: float
    differences: list = field(default_factory=list)


def epsilon_sweep(data: InitialData, u, grid: RadialGrid, eps_schedule=None,
                  phi: float = 0.0, phi0: float = 0.0,
                  limit_tol: float = 1e-7, newton_tol: float = 1e-10,
                  initial=None) -> SweepResult:
    """Warm-started solves down a decreasing eps schedule.

    Stops once successive solutions differ by less than ``limit_tol`` in
    sup norm.  The last solution is returned together with the linear
    extrapolation to eps = 0 built from the last two levels.
    """
    sched = default_eps_schedule() if eps_schedule is None else list(
        eps_schedule)
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    sols, diffs = [], []
    guess = initial
    converged = False
    for eps in sched:
        sol = solve_regularized(data, u, grid, eps, phi, phi0, newton_tol,
                                initial=guess)
        sols.append(sol)
        guess = sol.f
        if len(sols) > 1:
            d = float(np.abs(sols[-1].f - sols[-2].f).max())
            diffs.append(d)
            if d < limit_tol:
                converged = True
                break
    last = sols[-1]
    if len(sols) > 1:
        e1, e2 = sols[-2].eps, last.eps
        extrap = (e1 * last.f - e2 * sols[-2].f) / (e1 - e2)
    else:
        extrap = last.f.copy()
    geo = float(np.abs(grid_residual(data, u, grid, last.f)).max())
    geo_x = float(np.abs(grid_residual(data, u, grid, extrap)).max())
    return SweepResult(sols, converged, last, extrap, geo, geo_x, diffs)


# ---------------------------------------------------------------- comparison

def verify_comparison(solution: RadialSolution, spec: BarrierSpec,
                      data: InitialData = None, u=None,
                      slack: float = 1e-12) -> dict:
    """Node-wise check of f- <= f <= f+ together with the hypotheses of the
    comparison principle (boundary data and barrier inequalities)."""
    rho, f = solution.rho, solution.f
    if rho[-1] > spec.rho0 * (1 + 1e-12):
        raise ValueError("solution annulus extends beyond the barrier radius")
    up = BarrierSpec(spec.n, spec.tau, spec.C0, spec.rho0, spec.lam)
    fp = barrier_function(up, np.minimum(rho, spec.rho0))
    fm = -fp
    hyp = {
        "inner_boundary": bool(fm[0] - slack <= solution.phi <= fp[0] + slack),
        "outer_boundary": bool(fm[-1] - slack <= solution.phi0
                               <= fp[-1] + slack),
    }
    if data is not None and u is not None:
        inner = rho[(rho > 0) & (rho < spec.rho0 * (1 - 1e-6))]
        uu, du = _warp_arrays(u, inner)
        coeffs = _coefficients(data.radial, inner)
        p, q = barrier_derivatives(up, inner)
        fpi = barrier_function(up, inner)
        Jp = radial_jang_residual(data.n, coeffs, uu, du, fpi, p, q, 1.0,
                                  solution.eps)
        Jm = radial_jang_residual(data.n, coeffs, uu, du, -fpi, -p, -q, 1.0,
                                  solution.eps)
        hyp["upper_supersolution"] = bool(np.all(Jp <= 0))
        hyp["lower_subsolution"] = bool(np.all(Jm >= 0))
    hypotheses = all(hyp.values())
    ok = bool(np.all(fm - slack <= f) and np.all(f <= fp + slack))
    return {
        "hypotheses_hold": hypotheses,
        "hypotheses": hyp,
        "sandwich": ok if hypotheses else None,
        "barrier_lo": fm,
        "barrier_hi": fp,
        "min_gap_upper": float(np.min(fp - f)),
        "min_gap_lower": float(np.min(f - fm)),
    }


# ---------------------------------------------------------------- coupled

def _laplace_coefficients(data, rho, u, du, p, q):
    """a2, a1 with Lap_gbar v = a2 v'' + a1 v' for radial v."""
    n = data.n
    A, Gam, m, _, _ = _coefficients(data.radial, rho)
    W = 1 + u * u * p * p / A
    sq = np.sqrt(W)
    H = u / (A * W * sq) * (q - Gam * p + 2 * du / u * p) + (n - 1) * u * m * p / sq
    a2 = 1 / (A * W)
    a1 = (-Gam / (A * W) + (n - 1) * m + u * p * p * du / (A * A * W)
          - u * p * H / (A * sq))
    return a2, a1


def _factored_operator(data, grid, u, du, f):
    """Coefficients of the V0-factored Laplacian: with v = V0 w,
    (Lap v)/V0 = a2 w'' + c1 w' + c0 w."""
    rho = grid.rho
    p, q = _rho_derivatives(grid, f)
    a2, a1 = _laplace_coefficients(data, rho, u, du, p, q)
    V = Profile.v0()
    v0, v1, v2 = V(rho), V(rho, 1), V(rho, 2)
    c1 = a1 + 2 * a2 * v1 / v0
    c0 = (a2 * v2 + a1 * v1) / v0
    return a2, c1, c0, v0


def discrete_laplacian(data: InitialData, grid: RadialGrid, u, f, v):
    """Graph Laplacian of the nodal values v, discretised after factoring
    out V0 (exact on V0 itself).  Interior nodes only; ends are NaN."""
    uu, du = _warp_arrays(u, grid.rho)
    a2, c1, c0, v0 = _factored_operator(data, grid, uu, du, f)
    w = np.asarray(v, float) / v0
    wp, wpp = _rho_derivatives(grid, w)
    out = v0 * (a2 * wpp + c1 * wp + c0 * w)
    out[0] = out[-1] = np.nan
    return out


def _solve_warp(data, grid, u, du, f, inner_bc="dirichlet"):
    """Solve Lap_gbar v = n v with v(rho_0) = V0(rho_0); at rho_1 either
    v = V0 ('dirichlet') or v'/v = V0'/V0 ('robin').  The gbar-geometry is
    frozen at (u, f).  The unknown is y = v/V0 - 1, which vanishes for the
    hyperbolic eigenfunction."""
    N, n, h = grid.N, data.n, grid.h
    a2, c1, c0, v0 = _factored_operator(data, grid, u, du, f)
    rz, rzz = grid.metric_terms()
    cz = rzz / rz / (2 * h)
    lo = a2 * (1 / h ** 2 + cz) / rz ** 2 - c1 / (2 * h * rz)
    up = a2 * (1 / h ** 2 - cz) / rz ** 2 + c1 / (2 * h * rz)
    z = c0 - n
    di = -(lo + up) + z
    ab = np.zeros((3, N))
    rhs = np.zeros(N)
    ab[0, 2:], ab[1, 1:-1], ab[2, :-2] = up[1:-1], di[1:-1], lo[1:-1]
    rhs[1:-1] = -z[1:-1]
    if inner_bc == "dirichlet":
        ab[1, 0] = 1.0
    elif inner_bc == "robin":
        # one-sided y'(rho_1) = 0 with y_2 eliminated through row 1
        ab[1, 0], ab[0, 1] = lo[1] - 3 * up[1], di[1] + 4 * up[1]
        rhs[0] = -z[1]
    else:
        raise ValueError(f"unknown inner boundary condition {inner_bc!r}")
    ab[1, -1] = 1.0
    y = solve_banded((1, 1), ab, rhs)
    return v0 * (1.0 + y)


@dataclass
class CoupledSolution:
    rho: np.ndarray
    f: np.ndarray
    u: np.ndarray
    outer_iterations: int
    jang_residual: float
    warp_residual: float
    converged: bool
    eps: float
    history: list = field(default_factory=list)


def _warp_pair(grid, uvals):
    du = _rho_derivatives(grid, uvals)[0]
    return uvals, du


def solve_coupled(data: InitialData, grid: RadialGrid, eps_floor: float = None,
                  phi: float = 0.0, phi0: float = 0.0,
                  coupled_tol: float = 1e-6, max_outer: int = 30,
                  relaxation: float = 0.5, newton_tol: float = 1e-10,
                  limit_tol: float = 1e-7, eps_schedule=None,
                  inner_bc: str = "dirichlet") -> CoupledSolution:
    """Block fixed point for J(f) = 0, Lap_gbar u = n u."""
    rho = grid.rho
    V = Profile.v0()
    u = V(rho)
    du_exact = V(rho, 1)
    sched = default_eps_schedule() if eps_schedule is None else list(
        eps_schedule)
    if eps_floor is not None:
        sched = [e for e in sched if e >= eps_floor] or [eps_floor]
    history = []
    f = None
    eps = sched[-1]
    for outer in range(1, max_outer + 1):
        # derivative of u: exact for the initial V0, differenced afterwards
        pair = (u, du_exact) if outer == 1 else _warp_pair(grid, u)
        if f is None:
            sweep = epsilon_sweep(data, pair, grid, sched, phi, phi0,
                                  limit_tol, newton_tol)
            f, eps = sweep.last.f, sweep.last.eps
        else:
            f = solve_regularized(data, pair, grid, eps, phi, phi0,
                                  newton_tol, initial=f).f
        v = _solve_warp(data, grid, pair[0], pair[1], f, inner_bc)
        u_new = (1 - relaxation) * u + relaxation * v
        change = float(np.max(np.abs(u_new - u) / V(rho)))
        u = u_new
        pair = _warp_pair(grid, u)
        jr = float(np.abs(grid_residual(data, pair, grid, f, 1.0, eps)).max())
        lap = discrete_laplacian(data, grid, pair, f, u)
        wr = float(np.nanmax(np.abs(lap - data.n * u)[1:-1] / V(rho)[1:-1]))
        history.append({"outer": outer, "change": change,
                        "jang_residual": jr, "warp_residual": wr})
        if change <= coupled_tol and jr <= coupled_tol and wr <= coupled_tol:
            return CoupledSolution(rho, f, u, outer, jr, wr, True, eps,
                                   history)
    raise SolverError(
        f"coupled iteration did not converge in {max_outer} outer steps "
        f"(last change {history[-1]['change']:.3e})")
