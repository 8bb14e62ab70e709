"""Explicit upper and lower barriers for the Jang equation near infinity.

The upper barrier is f+(rho) = int_0^rho xi/sqrt(1 - xi^2) with
xi = 1/((1-lam)(rho0/rho)^(n/2) + lam (rho0/rho)^tau); the lower one is
f- = -f+.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .geometry import InitialData, ScalarField

__all__ = [
    "BarrierError", "BarrierSpec", "F", "x0", "estimate_C0",
    "choose_parameters", "make_spec", "xi", "gamma", "barrier_function",
    "barrier_derivatives", "BarrierCache", "inequality_lhs",
    "verify_barrier_inequality", "key_cancellation",
]


class BarrierError(ValueError):
    pass


@dataclass(frozen=True)
class BarrierSpec:
    n: int
    tau: float
    C0: float
    rho0: float
    lam: float
    sign: int = 1

    def __post_init__(self):
        if not self.n / 2 < self.tau < self.n:
            raise BarrierError(f"tau={self.tau} outside (n/2, n)")
        if not 0 < self.lam < 1:
            raise BarrierError("lambda must lie in (0, 1)")
        if self.sign not in (1, -1):
            raise BarrierError("sign must be +1 or -1")

    def lower(self) -> "BarrierSpec":
        return BarrierSpec(self.n, self.tau, self.C0, self.rho0, self.lam, -1)


def F(x, lam, n, tau):
    """F(x, lam) = lam (tau - n/2) / (lam + (1 - lam) x^(tau - n/2))."""
    x = np.asarray(x, dtype=float)
    return lam * (tau - n / 2) / (lam + (1 - lam) * x ** (tau - n / 2))


def x0(n, tau) -> float:
    return (3 * (n - tau) / 8) ** (1 / n)


def choose_parameters(n: int, tau: float, C0: float):
    """(rho0, lam): rho0 is half the largest radius (capped at 1/2) with
    C0 rho0 + C0 rho0^tau < (n - tau)/4; lam solves F(x0, lam) = 1/16."""
    if not n / 2 < tau < n:
        raise BarrierError(f"tau={tau} outside (n/2, n)")
    if C0 <= 0:
        raise BarrierError("C0 must be positive")
    bound = (n - tau) / 4
    cond = lambda r: C0 * r + C0 * r ** tau - bound
    top = 0.5 if cond(0.5) < 0 else brentq(cond, 0.0, 0.5, xtol=1e-15)
    rho0 = top / 2
    target = 1 / 16
    if tau - n / 2 <= target:
        raise BarrierError("tau - n/2 too small to reach F(x0, lam) = 1/16")
    lam = brentq(lambda l: float(F(x0(n, tau), l, n, tau)) - target,
                 1e-300, 1.0, xtol=1e-15)
    return rho0, lam


def make_spec(n: int, tau: float, C0: float) -> BarrierSpec:
    rho0, lam = choose_parameters(n, tau, C0)
    return BarrierSpec(n, tau, C0, rho0, lam)


def _dm_from_log(spec: BarrierSpec, L):
    return ((1 - spec.lam) * np.expm1(spec.n / 2 * L)
            + spec.lam * np.expm1(spec.tau * L))


def _D_minus_one(spec: BarrierSpec, rho):
    """(1-lam)(rho0/rho)^(n/2) + lam (rho0/rho)^tau - 1, cancellation free."""
    return _dm_from_log(spec, np.log(spec.rho0 / np.asarray(rho, dtype=float)))


def gamma(spec: BarrierSpec, rho):
    x = np.asarray(rho, dtype=float) / spec.rho0
    return spec.n / 2 + F(x, spec.lam, spec.n, spec.tau)


def xi(spec: BarrierSpec, rho):
    """(xi, xi') with xi' = gamma xi / rho; the lower barrier negates both."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho > spec.rho0 * (1 + 1e-14)) or np.any(rho <= 0):
        raise BarrierError("xi is defined on (0, rho0]")
    val = 1.0 / (1.0 + _D_minus_one(spec, rho))
    der = gamma(spec, rho) * val / rho
    return spec.sign * val, spec.sign * der


def _one_minus_xi2(spec, rho):
    dm = _D_minus_one(spec, rho)
    D = 1.0 + dm
    return dm * (D + 1.0) / D ** 2


def barrier_derivatives(spec: BarrierSpec, rho):
    """(f', f'') of the barrier: xi/sqrt(1-xi^2) and xi'/(1-xi^2)^(3/2)."""
    v, d = xi(spec, rho)
    m = _one_minus_xi2(spec, rho)
    return v / np.sqrt(m), d / m ** 1.5


def _integral(spec: BarrierSpec, a: float, b: float) -> float:
    """int_a^b xi/sqrt(1-xi^2) ds for the upper barrier, 0 <= a <= b <= rho0."""
    if b <= a:
        return 0.0
    up = BarrierSpec(spec.n, spec.tau, spec.C0, spec.rho0, spec.lam)
    mid = 0.5 * up.rho0
    total = 0.0
    if a < mid:
        hi = min(b, mid)

        def g(s):
            if s <= 0:
                return 0.0
            v, _ = xi(up, s)
            return float(v / math.sqrt(_one_minus_xi2(up, s)))
        val, err = quad(g, a, hi, epsabs=1e-15, epsrel=1e-12, limit=200)
        if not math.isfinite(val):
            raise BarrierError("barrier quadrature failed")
        total += val
        a = hi
    if b > a:
        # s = rho0 - t^2 removes the inverse square root singularity
        def h(t):
            dm = float(_dm_from_log(up, -math.log1p(-t * t / up.rho0)))
            if dm <= 0.0:
                # limit of 2 t / sqrt(1 - xi^2) as t -> 0
                return 2.0 / math.sqrt(2 * float(gamma(up, up.rho0)) / up.rho0)
            D = 1.0 + dm
            return 2 * t / math.sqrt(dm * (D + 1.0))
        ta, tb = math.sqrt(max(up.rho0 - b, 0.0)), math.sqrt(up.rho0 - a)
        val, err = quad(h, ta, tb, epsabs=1e-15, epsrel=1e-12, limit=200)
        if not math.isfinite(val):
            raise BarrierError("barrier quadrature failed")
        total += val
    return total


def barrier_function(spec: BarrierSpec, rho):
    """f+- at the given radii, by adaptive quadrature."""
    r = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(r < 0) or np.any(r > spec.rho0 * (1 + 1e-14)):
        raise BarrierError("barrier function is defined on [0, rho0]")
    r = np.minimum(r, spec.rho0)
    order = np.argsort(r)
    out = np.empty_like(r)
    acc, prev = 0.0, 0.0
    for i in order:
        acc += _integral(spec, prev, r[i])
        prev = r[i]
        out[i] = acc
    out *= spec.sign
    return out if np.ndim(rho) else float(out[0])


class BarrierCache:
    """Spline of f+ in t = sqrt(rho0 - rho) on Chebyshev nodes."""

    def __init__(self, spec: BarrierSpec, nodes: int = 256):
        self.spec = spec
        T = math.sqrt(spec.rho0)
        k = np.arange(nodes)
        t = np.sort(0.5 * T * (1 - np.cos(np.pi * k / (nodes - 1))))
        vals = barrier_function(spec, np.clip(spec.rho0 - t * t, 0.0, None))
        self._spl = CubicSpline(t, vals)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self._spl(np.sqrt(np.clip(self.spec.rho0 - rho, 0, None)))

    def lower(self, rho):
        return -self(rho)


def inequality_lhs(spec: BarrierSpec, rho):
    """xi' - (xi/rho)(n - xi^2 - C0 rho) + C0 rho^(tau-1) for xi = xi+."""
    up = BarrierSpec(spec.n, spec.tau, spec.C0, spec.rho0, spec.lam)
    v, d = xi(up, rho)
    rho = np.asarray(rho, dtype=float)
    return (d - v / rho * (spec.n - v * v - spec.C0 * rho)
            + spec.C0 * rho ** (spec.tau - 1))


def verify_barrier_inequality(spec: BarrierSpec, grid) -> dict:
    """Upper barrier: the left side must be < 0 everywhere; the mirrored
    lower-barrier quantity is its negation and must be > 0."""
    grid = np.asarray(grid, dtype=float)
    lhs = inequality_lhs(spec, grid)
    up = BarrierSpec(spec.n, spec.tau, spec.C0, spec.rho0, spec.lam)
    v, _ = xi(up, grid)
    x = grid / spec.rho0
    bounds = (v >= x ** spec.tau * (1 - 1e-13)) & (v <= x ** (spec.n / 2)
                                                   * (1 + 1e-13))
    bad = np.nonzero(lhs >= 0)[0]
    return {
        "pass": bool(bad.size == 0 and bounds.all()),
        "inequality_pass": bool(bad.size == 0),
        "xi_bounds_pass": bool(bounds.all()),
        "max_lhs": float(lhs.max()),
        "lhs": lhs,
        "lower_lhs": -lhs,
        "violations": grid[bad].tolist(),
    }


def key_cancellation(spec: BarrierSpec, warp: ScalarField, rho):
    """(1 + u^2 |df+|^2)(1 - xi^2) on b, evaluated along the first axis."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    fp, _ = barrier_derivatives(spec, rho)
    v, _ = xi(BarrierSpec(spec.n, spec.tau, spec.C0, spec.rho0, spec.lam), rho)
    u = np.array([warp(np.r_[math.sqrt(1 - 2 * r), np.zeros(spec.n - 1)])
                  for r in rho])
    grr = rho ** 2 * (1 - 2 * rho)
    return (1 + u ** 2 * grr * fp ** 2) * (1 - v ** 2)


def estimate_C0(data: InitialData, u: ScalarField, region=(1e-3, 0.25),
                samples: int = 200, safety: float = 2.0) -> float:
    """Sampled maximum of the remainder ratios in the asymptotic
    expansions of g^{rho rho}, Gamma, u and K, times a safety factor."""
    if data.radial is None:
        raise BarrierError("C0 estimation needs radially symmetric data")
    rd, n, tau = data.radial, data.n, data.tau
    lo, hi = region
    if not 0 < lo < hi < 0.5:
        raise BarrierError("region must lie in (0, 1/2)")
    r = np.geomspace(lo, hi, samples)
    grr, Grr, m = rd.components(r)
    prof = u.profile
    if prof is not None:
        uu, du = prof(r), prof(r, 1)
    else:
        pts = [np.r_[math.sqrt(1 - 2 * s), np.zeros(n - 1)] for s in r]
        uu = np.array([u(p) for p in pts])
        du = np.array([-(u.grad(p) @ p) / (p @ p) for p in pts])
    ratios = [
        np.abs(grr / r ** 2 - 1) / r,                  # g^{rr} = rho^2(1 + O(rho))
        np.abs(r * Grr + 1) / r,                       # Gamma^r_rr = -1/rho + O(1)
        np.abs(-m / r - 1) / r,                        # angular term ~ rho (1 + O(rho))
        np.abs(r * du / uu + 1) / r,                   # u_rho/u = -1/rho + O(1)
        np.abs(r * uu - 1) / r,                        # u = 1/rho + O(1)
        np.abs(rd.kr(r)) * r ** -tau + np.abs(rd.kt(r)) * r ** -tau,
    ]
    return safety * float(max(np.max(q) for q in ratios))
