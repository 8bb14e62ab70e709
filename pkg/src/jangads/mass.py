"""Mass functional of asymptotically hyperbolic data, its extrapolation to
infinity, the Jang graph and conformal variants, and boost algebra.

Orientation: the unit normal of {rho = const} points towards the
conformal boundary, i.e. in the direction of decreasing rho.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .geometry import (GeometryError, InitialData, Profile, RadialData,
                       _coords, _radial_data, hyperbolic_metric, kernel_field,
                       metric_derivative, rho_of, sphere_area)

__all__ = [
    "MassReport", "MassLimit", "ConformalChange", "c_n", "mass_flux",
    "flux_density", "mass_limit", "fit_exponent", "default_schedule",
    "graph_data", "graph_mass", "conformally_changed",
    "conformal_mass_difference", "boost_mass", "optimal_boost",
    "causality_check", "rigidity_coefficient", "gamma_function",
    "mass_report",
]


def c_n(n: int) -> float:
    """Normalisation with c_n^{-1} = 2 omega_{n-1} (n - 1)."""
    return 1.0 / (2 * sphere_area(n) * (n - 1))


def _dnu(rho, d):
    """Derivative of a radial function along the unit normal: -rho r X'."""
    return -rho * np.sqrt(1 - 2 * rho) * d


def _radial_flux(rd: RadialData, n: int, rho):
    """Flux through {rho} for V_0 and radial e = g - b, in closed form."""
    rho = np.asarray(rho, dtype=float)
    alpha, beta = rd.a.deviation(rho), rd.c.deviation(rho)
    dbeta = rd.c(rho, 1)
    V = Profile.v0()
    v, dv = V(rho), V(rho, 1)
    r = np.sqrt(1 - 2 * rho)
    Hb = (n - 1) * (1 - rho) / r
    integrand = (v * ((alpha - beta) * Hb - (n - 1) * _dnu(rho, dbeta))
                 + (n - 1) * beta * _dnu(rho, dv))
    area = sphere_area(n) * (r / rho) ** (n - 1)
    return c_n(n) * integrand * area


def flux_density(data: InitialData, V_index, x) -> float:
    """[V(div e - d tr e) - e(grad V, .) + tr(e) dV](nu) at x, all with
    respect to b, computed from chart derivatives of e = g - b."""
    x = _coords(x)
    n = x.size
    rho = rho_of(x)
    b, binv, G = hyperbolic_metric(x)
    e = data.g(x) - b
    de = metric_derivative(data.g, x) - 2 * np.einsum(
        "k,ij->kij", x, np.eye(n)) / rho ** 3
    ne = (de - np.einsum("lki,lj->kij", G, e) - np.einsum("lkj,il->kij", G, e))
    div_e = np.einsum("ik,kij->j", binv, ne)
    tr_e = np.einsum("ij,ij->", binv, e)
    dtr = np.einsum("ij,kij->k", binv, ne)
    Vf = kernel_field(V_index, n) if isinstance(V_index, int) else V_index
    V, dV = Vf(x), Vf.grad(x)
    U = V * (div_e - dtr) - e @ (binv @ dV) + tr_e * dV
    nu = rho * x / math.sqrt(x @ x)
    return float(U @ nu)


def _sphere_quadrature(n_theta=32, n_phi=64):
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - ct ** 2)
    dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                     np.outer(ct, np.ones_like(phi))], axis=-1).reshape(-1, 3)
    w = np.outer(wt, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return dirs, w


def mass_flux(data: InitialData, V_index, rho_level: float) -> float:
    """c_n times the flux of the mass integrand through {rho = rho_level}.

    ``V_index`` is a kernel index 0..n or any ScalarField (the latter
    always goes through the sphere quadrature)."""
    n = data.n
    if not 0 < rho_level < 0.5:
        raise GeometryError("rho level must lie in (0, 1/2)")
    indexed = isinstance(V_index, (int, np.integer))
    if indexed and not 0 <= V_index <= n:
        raise ValueError(f"kernel index {V_index} out of range")
    if indexed:
        V_index = int(V_index)
    if data.radial is not None and indexed:
        if V_index > 0:
            return 0.0  # odd integrand over the round sphere
        return float(_radial_flux(data.radial, n, rho_level))
    if n != 3:
        raise NotImplementedError(
            "non-radial flux integrals are implemented for n = 3 only")
    r = math.sqrt(1 - 2 * rho_level)
    dirs, w = _sphere_quadrature()
    vals = np.array([flux_density(data, V_index, r * d) for d in dirs])
    total = float(w @ vals) * (r / rho_level) ** (n - 1)
    if not math.isfinite(total):
        raise FloatingPointError("flux quadrature produced a non-finite value")
    return c_n(n) * total


def default_schedule(data: InitialData):
    if data.radial is not None:
        return [1e-7 * 2.0 ** -k for k in range(8)]
    return [2e-2 * 2.0 ** -k for k in range(6)]


@dataclass
class MassLimit:
    value: float
    coefficient: float
    exponent: float
    residual: float
    rhos: list
    fluxes: list
    fallback: bool = False


def _fit(rhos, fluxes, q):
    if q <= 0:
        return None
    scale = rhos.max() ** q
    X = np.column_stack([np.ones_like(rhos), rhos ** q / scale])
    if np.linalg.cond(X) > 1e12:
        return None
    coef, *_ = np.linalg.lstsq(X, fluxes, rcond=None)
    res = float(np.sqrt(np.mean((X @ coef - fluxes) ** 2)))
    return float(coef[0]), float(coef[1] / scale), res


def _extrapolate(rhos, fluxes, q):
    rhos, fluxes = np.asarray(rhos, float), np.asarray(fluxes, float)
    if rhos.size < 4:
        raise ValueError("extrapolation needs at least 4 radii")
    if np.any(np.diff(rhos) >= 0):
        raise ValueError("radii must be strictly decreasing")
    fit = _fit(rhos, fluxes, q)
    if fit is None:
        warnings.warn("ill-conditioned mass fit; using the smallest radius")
        return MassLimit(float(fluxes[-1]), 0.0, q, float("nan"),
                         rhos.tolist(), fluxes.tolist(), True)
    return MassLimit(fit[0], fit[1], q, fit[2], rhos.tolist(),
                     fluxes.tolist())


def mass_limit(data: InitialData, V_index: int, rho_schedule=None
               ) -> MassLimit:
    """Least-squares fit M(rho) = M_inf + c rho^(2 tau - n)."""
    if 2 * data.tau <= data.n:
        raise ValueError("mass extrapolation needs 2 tau > n")
    rhos = default_schedule(data) if rho_schedule is None else rho_schedule
    fluxes = [mass_flux(data, V_index, r) for r in rhos]
    return _extrapolate(rhos, fluxes, 2 * data.tau - data.n)


def fit_exponent(rhos, fluxes, q0: float = 1.0):
    """Free fit of M_inf + c rho^q; returns (M_inf, c, q)."""
    rhos, fluxes = np.asarray(rhos, float), np.asarray(fluxes, float)
    r0 = rhos.max()  # fit in rho / r0 to keep c of order one
    model = lambda r, m, c, q: m + c * (r / r0) ** q
    dm = fluxes[0] - fluxes[-1]
    popt, _ = curve_fit(model, rhos, fluxes, p0=[fluxes[-1], dm, q0],
                        maxfev=20000)
    m, c, q = (float(v) for v in popt)
    return m, c / r0 ** q, q


# ---------------------------------------------------------------- graph mass

def graph_data(data: InitialData, u: Profile, f: Profile) -> InitialData:
    """Radial data for the graph metric g + u^2 df^2."""
    if data.radial is None:
        raise NotImplementedError("graph mass is implemented for radial data")
    rd = data.radial

    def extra(r, order=0):
        w = r ** 2 * (1 - 2 * r)
        uu, fp = u(r), f(r, 1)
        if order == 0:
            return uu ** 2 * fp ** 2 * w
        return (2 * uu * u(r, 1) * fp ** 2 * w + 2 * uu ** 2 * fp * f(r, 2) * w
                + uu ** 2 * fp ** 2 * (2 * r - 6 * r ** 2))

    a = Profile([lambda r: rd.a(r) + extra(r),
                 lambda r: rd.a(r, 1) + extra(r, 1)],
                lambda r: rd.a.deviation(r) + extra(r))
    fam = dict(data.family, graph=True)
    out = _radial_data(data.n, data.tau, a, rd.c, rd.kr, rd.kt, fam)
    return out


def graph_mass(data: InitialData, u: Profile, f: Profile, V_index: int = 0,
               rho_schedule=None) -> MassLimit:
    return mass_limit(graph_data(data, u, f), V_index, rho_schedule)


# ---------------------------------------------------------------- conformal

@dataclass
class ConformalChange:
    theta: Profile
    n: int

    @property
    def kappa(self) -> float:
        return 4.0 / (self.n - 2)


def _damped(p, k, th):
    return Profile([
        lambda r: p(r) * np.exp(-k * th(r)),
        lambda r: np.exp(-k * th(r)) * (p(r, 1) - k * th(r, 1) * p(r)),
    ])


def conformally_changed(data: InitialData, change: ConformalChange
                        ) -> InitialData:
    """Radial data for exp(kappa theta) g (K unchanged)."""
    rd, k, th = data.radial, change.kappa, change.theta

    def scaled(p):
        return Profile([
            lambda r: np.exp(k * th(r)) * p(r),
            lambda r: np.exp(k * th(r)) * (p(r, 1) + k * th(r, 1) * p(r)),
        ], lambda r: np.expm1(k * th(r)) * p(r) + p.deviation(r))
    fam = dict(data.family, conformal=True)
    return _radial_data(data.n, data.tau, scaled(rd.a), scaled(rd.c),
                        _damped(rd.kr, k, th), _damped(rd.kt, k, th), fam)


def conformal_mass_difference(data: InitialData, change: ConformalChange,
                              V_index: int = 0, rho_schedule=None,
                              tau_theta: float = None) -> MassLimit:
    """(kappa / (2 omega)) lim int (theta dV - V dtheta)(nu) dmu^b."""
    n = data.n
    if V_index > 0:
        rhos = default_schedule(data) if rho_schedule is None else rho_schedule
        return MassLimit(0.0, 0.0, 0.0, 0.0, list(rhos), [0.0] * len(rhos))
    rhos = np.asarray(default_schedule(data) if rho_schedule is None
                      else rho_schedule, float)
    th, dth = change.theta(rhos), change.theta(rhos, 1)
    V = Profile.v0()
    integrand = th * _dnu(rhos, V(rhos, 1)) - V(rhos) * _dnu(rhos, dth)
    r = np.sqrt(1 - 2 * rhos)
    area = sphere_area(n) * (r / rhos) ** (n - 1)
    vals = change.kappa / (2 * sphere_area(n)) * integrand * area
    t = data.tau if tau_theta is None else tau_theta
    return _extrapolate(rhos, vals, 2 * t - n)


# ---------------------------------------------------------------- boosts

def boost_mass(E: float, P, eta: float) -> float:
    """(E - eta |P|) / sqrt(1 - eta^2)."""
    if not abs(eta) < 1:
        raise ValueError("boost parameter must satisfy |eta| < 1")
    p = float(np.linalg.norm(np.atleast_1d(P)))
    return (E - eta * p) / math.sqrt(1 - eta * eta)


def optimal_boost(E: float, P):
    """Minimiser eta = |P|/E and minimum sqrt(E^2 - |P|^2) for E > |P|."""
    p = float(np.linalg.norm(np.atleast_1d(P)))
    if not E > p:
        raise ValueError("the minimum exists only for E > |P|")
    return p / E, math.sqrt(E * E - p * p)


def causality_check(E: float, P, tol: float = 1e-12) -> str:
    gap = E - float(np.linalg.norm(np.atleast_1d(P)))
    if abs(gap) <= tol:
        return "boundary"
    return "future_causal" if gap > 0 else "violated"


def rigidity_coefficient(n: int) -> float:
    return 1 - 4 + 2 * (n - 2) / (n - 1)


def gamma_function(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(4 * x)
    return x * e - e / 4 + 0.25


# ---------------------------------------------------------------- report

@dataclass
class MassReport:
    limits: list                 # MassLimit per kernel index 0..n
    E: float
    P: list
    verdict: str
    fit_exponents: list = field(default_factory=list)


def mass_report(data: InitialData, rho_schedule=None) -> MassReport:
    limits = [mass_limit(data, i, rho_schedule) for i in range(data.n + 1)]
    E = limits[0].value
    P = [lim.value for lim in limits[1:]]
    return MassReport(limits, E, P, causality_check(E, P),
                      [lim.exponent for lim in limits])
