"""Poincare ball chart, hyperbolic background, initial data families and
coordinate tensor calculus.

Conventions: tensors are numpy arrays in chart components, Christoffel
symbols are stored as ``G[k, i, j] = Gamma^k_{ij}`` and coordinate
derivatives as ``dT[k, i, j] = d_k T_{ij}``.  The defining function is
``rho = (1 - |x|^2) / 2`` so that the hyperbolic metric reads
``b = rho^-2 delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

__all__ = [
    "GeometryError", "BallPoint", "Profile", "SymTensorField", "ScalarField",
    "RadialData", "InitialData", "rho_of", "fd_step", "sphere_area",
    "hyperbolic_metric", "hyperbolic_field", "euclidean_field",
    "metric_derivative", "christoffels", "christoffel_derivative",
    "ricci", "scalar_curvature", "laplacian", "radial_scalar",
    "radial_tensor_field", "pure_ads", "conformal_perturbation",
    "tensor_perturbation", "radial_table", "read_radial_table",
    "coordinate_sphere_mean_curvature", "sphere_mean_curvature_at",
    "detect_mots", "kernel_function", "kernel_field", "decay_diagnostics",
]


class GeometryError(ValueError):
    """Raised for points outside the chart or degenerate metrics."""


def rho_of(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 - x @ x)


@dataclass(frozen=True)
class BallPoint:
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        if x @ x >= 1.0:
            raise GeometryError(f"point {x} is not inside the unit ball")
        object.__setattr__(self, "x", x)

    @property
    def rho(self) -> float:
        return rho_of(self.x)

    @property
    def n(self) -> int:
        return self.x.size


def _coords(x) -> np.ndarray:
    if isinstance(x, BallPoint):
        return x.x
    return np.asarray(x, dtype=float)


def sphere_area(n: int) -> float:
    """omega_{n-1}, the volume of the unit round sphere S^{n-1}."""
    return 2.0 * math.pi ** (n / 2) / gamma_fn(n / 2)


def fd_step(x) -> float:
    """Chart step for finite differences, shrinking with rho."""
    return max(1e-5, 1e-3 * rho_of(x))


# ---------------------------------------------------------------- profiles

class Profile:
    """Scalar function of rho with up to three derivatives (vectorised)."""

    def __init__(self, funcs, dev=None):
        self._funcs = list(funcs)
        self._dev = dev

    def deviation(self, rho):
        """profile - 1, exact when the constructor knows it."""
        rho = np.asarray(rho, dtype=float)
        return self._dev(rho) if self._dev is not None else self(rho) - 1.0

    def __call__(self, rho, order: int = 0):
        if order >= len(self._funcs):
            raise ValueError(f"profile has no derivative of order {order}")
        return self._funcs[order](np.asarray(rho, dtype=float))

    @classmethod
    def constant(cls, c: float) -> "Profile":
        zero = lambda r: np.zeros_like(r)
        return cls([lambda r: np.full_like(r, c), zero, zero, zero],
                   lambda r: np.full_like(r, c - 1.0))

    @classmethod
    def power(cls, c: float, p: float, offset: float = 0.0) -> "Profile":
        """offset + c rho^p."""
        return cls([
            lambda r: offset + c * r ** p,
            lambda r: c * p * r ** (p - 1),
            lambda r: c * p * (p - 1) * r ** (p - 2),
            lambda r: c * p * (p - 1) * (p - 2) * r ** (p - 3),
        ], lambda r: (offset - 1.0) + c * r ** p)

    @classmethod
    def exp_power(cls, c: float, p: float) -> "Profile":
        """exp(c rho^p)."""
        def d(r, k):
            t = c * r ** p
            t1 = c * p * r ** (p - 1)
            t2 = c * p * (p - 1) * r ** (p - 2)
            t3 = c * p * (p - 1) * (p - 2) * r ** (p - 3)
            e = np.exp(t)
            return [e, e * t1, e * (t2 + t1 ** 2),
                    e * (t3 + 3 * t1 * t2 + t1 ** 3)][k]
        return cls([lambda r, k=k: d(r, k) for k in range(4)],
                   lambda r: np.expm1(c * r ** p))

    @classmethod
    def from_samples(cls, rho, values) -> "Profile":
        rho = np.asarray(rho, dtype=float)
        order = np.argsort(rho)
        spl = CubicSpline(rho[order], np.asarray(values, dtype=float)[order])
        return cls([spl, spl.derivative(1), spl.derivative(2),
                    spl.derivative(3)])

    @classmethod
    def v0(cls) -> "Profile":
        """The static potential (1 - rho) / rho."""
        return cls([lambda r: (1 - r) / r, lambda r: -1 / r ** 2,
                    lambda r: 2 / r ** 3, lambda r: -6 / r ** 4])


# ---------------------------------------------------------------- fields

@dataclass
class SymTensorField:
    """Symmetric 2-tensor field in the chart.

    ``func(x)`` returns the n x n components, ``dfunc(x)`` (optional)
    returns ``dT[k, i, j]``.
    """
    n: int
    func: Callable
    dfunc: Optional[Callable] = None
    christoffel_func: Optional[Callable] = None
    name: str = ""

    @property
    def has_derivatives(self) -> bool:
        return self.dfunc is not None

    def __call__(self, x) -> np.ndarray:
        T = np.asarray(self.func(_coords(x)), dtype=float)
        return T


@dataclass
class ScalarField:
    """Scalar field with optional analytic gradient and Hessian (chart
    partial derivatives).  Missing derivatives fall back to Richardson
    extrapolated central differences."""
    func: Callable
    grad_func: Optional[Callable] = None
    hess_func: Optional[Callable] = None
    profile: Optional[Profile] = None
    tag: str = "generic"

    def __call__(self, x) -> float:
        return float(self.func(_coords(x)))

    def grad(self, x) -> np.ndarray:
        x = _coords(x)
        if self.grad_func is not None:
            return np.asarray(self.grad_func(x), dtype=float)
        return _fd(lambda y: np.array(self.func(y), dtype=float), x)

    def hess(self, x) -> np.ndarray:
        x = _coords(x)
        if self.hess_func is not None:
            return np.asarray(self.hess_func(x), dtype=float)
        H = _fd(self.grad, x)
        return 0.5 * (H + H.T)


def radial_scalar(profile: Profile, tag: str = "radial") -> ScalarField:
    """Chart field x -> F(rho(x)) with exact chart derivatives."""
    def grad(x):
        return -profile(rho_of(x), 1) * x

    def hess(x):
        r = rho_of(x)
        return profile(r, 2) * np.outer(x, x) - profile(r, 1) * np.eye(x.size)

    return ScalarField(lambda x: profile(rho_of(x)), grad, hess, profile, tag)


def _fd(F, x, h=None):
    """Richardson extrapolated central difference; result[k, ...] = d_k F."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(x)
    out = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = 1.0
        d1 = (F(x + h * e) - F(x - h * e)) / (2 * h)
        d2 = (F(x + 0.5 * h * e) - F(x - 0.5 * h * e)) / h
        out.append((4 * d2 - d1) / 3)
    return np.array(out)


def _check_chart(x, h):
    if x.size and 1.0 - math.sqrt(x @ x) <= 2 * h:
        raise GeometryError(
            f"point at |x|={math.sqrt(x @ x):.6g} is within 2h={2 * h:.3g} "
            "of the chart boundary")


def _inverse(T) -> np.ndarray:
    try:
        np.linalg.cholesky(T)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("metric is not positive definite") from exc
    return np.linalg.inv(T)


# ---------------------------------------------------------------- background

def hyperbolic_metric(x):
    """Return (b, b^{-1}, Gamma) of b = 4/(1-|x|^2)^2 delta at x."""
    x = _coords(x)
    if x @ x >= 1.0:
        raise GeometryError("hyperbolic metric evaluated outside the ball")
    n = x.size
    rho = rho_of(x)
    I = np.eye(n)
    b = I / rho ** 2
    binv = I * rho ** 2
    dphi = x / rho  # b = exp(2 phi) delta, phi = -log rho
    G = (np.einsum("ki,j->kij", I, dphi) + np.einsum("kj,i->kij", I, dphi)
         - np.einsum("ij,k->kij", I, dphi))
    return b, binv, G


def hyperbolic_field(n: int) -> SymTensorField:
    def dfunc(x):
        # d_k (rho^-2 delta_ij) = 2 x_k rho^-3 delta_ij
        return 2 * np.einsum("k,ij->kij", x, np.eye(n)) / rho_of(x) ** 3
    return SymTensorField(n, lambda x: np.eye(n) / rho_of(x) ** 2, dfunc,
                          lambda x: hyperbolic_metric(x)[2], "hyperbolic")


def euclidean_field(n: int) -> SymTensorField:
    return SymTensorField(n, lambda x: np.eye(n),
                          lambda x: np.zeros((n, n, n)), None, "euclidean")


# ---------------------------------------------------------------- calculus

def metric_derivative(T: SymTensorField, x, h=None) -> np.ndarray:
    x = _coords(x)
    if T.dfunc is not None:
        return np.asarray(T.dfunc(x), dtype=float)
    h = fd_step(x) if h is None else h
    return _fd(T, x, h)


def christoffels(T: SymTensorField, x, h=None) -> np.ndarray:
    """Levi-Civita symbols Gamma^k_{ij} of T at x."""
    x = _coords(x)
    if T.christoffel_func is not None and h is None:
        return np.asarray(T.christoffel_func(x), dtype=float)
    hh = fd_step(x) if h is None else h
    if T.dfunc is None:
        _check_chart(x, hh)
    g = T(x)
    ginv = _inverse(g)
    dg = metric_derivative(T, x, h)
    # Gamma_{lij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    low = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg)
                 - dg)
    G = np.einsum("kl,lij->kij", ginv, low)
    return 0.5 * (G + np.swapaxes(G, 1, 2))


def christoffel_derivative(T: SymTensorField, x, h=None) -> np.ndarray:
    """dG[m, k, i, j] = d_m Gamma^k_{ij}."""
    x = _coords(x)
    h = fd_step(x) if h is None else h
    _check_chart(x, h)
    return _fd(lambda y: christoffels(T, y), x, h)


def ricci(T: SymTensorField, x) -> np.ndarray:
    G = christoffels(T, x)
    dG = christoffel_derivative(T, x)
    R = (np.einsum("kkij->ij", dG) - np.einsum("jkki->ij", dG)
         + np.einsum("kkl,lij->ij", G, G) - np.einsum("kjl,lki->ij", G, G))
    return 0.5 * (R + R.T)


def scalar_curvature(T: SymTensorField, x) -> float:
    return float(np.einsum("ij,ij->", _inverse(T(x)), ricci(T, x)))


def laplacian(T: SymTensorField, v: ScalarField, x) -> float:
    """Laplace-Beltrami operator of T applied to v at x."""
    ginv = _inverse(T(x))
    G = christoffels(T, x)
    hess = v.hess(x) - np.einsum("kij,k->ij", G, v.grad(x))
    return float(np.einsum("ij,ij->", ginv, hess))


# ---------------------------------------------------------------- radial data

def radial_tensor_field(n: int, s: Profile, t: Profile, name: str = ""
                        ) -> SymTensorField:
    """T = rho^-2 (s(rho) P + t(rho) (I - P)), P the radial projector.

    With s = t = 1 this is b.  The center x = 0 is excluded unless s = t.
    """
    I = np.eye(n)

    def parts(x):
        r2 = x @ x
        P = np.outer(x, x) / r2 if r2 > 0 else np.zeros((n, n))
        return r2, P

    def func(x):
        rho = rho_of(x)
        _, P = parts(x)
        return (s(rho) * P + t(rho) * (I - P)) / rho ** 2

    def dfunc(x):
        rho = rho_of(x)
        r2, P = parts(x)
        S, Tt = s(rho) / rho ** 2, t(rho) / rho ** 2
        # d/drho of the rescaled coefficients
        dS = s(rho, 1) / rho ** 2 - 2 * s(rho) / rho ** 3
        dT = t(rho, 1) / rho ** 2 - 2 * t(rho) / rho ** 3
        out = -np.einsum("k,ij->kij", x, dT * I + (dS - dT) * P)
        if r2 > 0:
            dP = (np.einsum("ik,j->kij", I, x) + np.einsum("jk,i->kij", I, x)
                  ) / r2 - 2 * np.einsum("k,ij->kij", x, P) / r2
            out = out + (S - Tt) * dP
        return out

    return SymTensorField(n, func, dfunc, None, name)


@dataclass
class RadialData:
    """Spherically symmetric data.

    g = rho^-2 (a dr^2 + c r^2 sigma) in the chart, i.e.
    g = A drho^2 + B sigma with A = a / (rho^2 (1 - 2 rho)) and
    B = c (1 - 2 rho) / rho^2; K = kr g_radial + kt g_tangential.
    """
    a: Profile
    c: Profile
    kr: Profile
    kt: Profile

    def A(self, rho, order: int = 0):
        rho = np.asarray(rho, dtype=float)
        a0 = self.a(rho)
        w = rho ** 2 * (1 - 2 * rho)
        if order == 0:
            return a0 / w
        dw = 2 * rho - 6 * rho ** 2
        return self.a(rho, 1) / w - a0 * dw / w ** 2

    def B(self, rho, order: int = 0):
        rho = np.asarray(rho, dtype=float)
        c0 = self.c(rho)
        w = (1 - 2 * rho) / rho ** 2
        if order == 0:
            return c0 * w
        dw = -2 / rho ** 2 - 2 * (1 - 2 * rho) / rho ** 3
        return self.c(rho, 1) * w + c0 * dw

    def components(self, rho):
        """g^{rr}, Gamma^r_rr, and the angular contraction
        m = -g^{ab} Gamma^r_ab = (n-1) B' / (2 A B) divided by (n-1)."""
        A, dA = self.A(rho), self.A(rho, 1)
        B, dB = self.B(rho), self.B(rho, 1)
        return 1 / A, dA / (2 * A), dB / (2 * A * B)

    def mean_curvature(self, n: int, rho):
        """Mean curvature of {rho = const} w.r.t. the normal pointing
        towards decreasing rho."""
        A, B, dB = self.A(rho), self.B(rho), self.B(rho, 1)
        return -(n - 1) * dB / (2 * B * np.sqrt(A))

    def tangential_trace_K(self, n: int, rho):
        return (n - 1) * self.kt(rho)

    def trace_K(self, n: int, rho):
        return self.kr(rho) + (n - 1) * self.kt(rho)


@dataclass
class InitialData:
    n: int
    tau: float
    g: SymTensorField
    K: SymTensorField
    alpha: float = 0.5
    radial: Optional[RadialData] = None
    family: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 3 <= self.n <= 7:
            raise ValueError(f"dimension n={self.n} outside 3..7")
        if self.tau <= 0:
            raise ValueError("decay rate tau must be positive")


def _radial_data(n, tau, a, c, kr, kt, family, alpha=0.5):
    rd = RadialData(a, c, kr, kt)
    g = radial_tensor_field(n, a, c, "g")
    K = radial_tensor_field(
        n, Profile([lambda r: kr(r) * a(r),
                    lambda r: kr(r, 1) * a(r) + kr(r) * a(r, 1)]),
        Profile([lambda r: kt(r) * c(r),
                 lambda r: kt(r, 1) * c(r) + kt(r) * c(r, 1)]), "K")
    return InitialData(n, tau, g, K, alpha, rd, family)


def _k_profile(K_spec):
    if not K_spec:
        return Profile.constant(0.0)
    return Profile.power(K_spec.get("amplitude", 0.0),
                         K_spec.get("decay", 0.0))


def pure_ads(n: int, tau: float = None) -> InitialData:
    """g = b, K = 0."""
    tau = 0.75 * n if tau is None else tau
    one, zero = Profile.constant(1.0), Profile.constant(0.0)
    data = _radial_data(n, tau, one, one, zero, zero, {"family": "pure_ads"})
    data.g = hyperbolic_field(n)
    return data


def conformal_perturbation(n: int, tau: float, c: float, p: float,
                           K: dict = None) -> InitialData:
    """g = exp(kappa theta) b with theta = c rho^p, kappa = 4/(n-2);
    optional K = k rho^q g with K = {"amplitude": k, "decay": q}."""
    kappa = 4.0 / (n - 2)
    prof = Profile.exp_power(kappa * c, p)
    k = _k_profile(K)
    fam = {"family": "conformal_perturbation", "c": c, "p": p, "K": K}
    return _radial_data(n, tau, prof, prof, k, k, fam)


def tensor_perturbation(n: int, tau: float, amplitude: float, mode: int,
                        p: float, K: dict = None) -> InitialData:
    """g = b + amplitude rho^(p-2) S_mode.

    mode 0 stretches the radial direction only (spherically symmetric);
    mode 1 uses S = dx^1 dx^1; mode 2 uses S = x^1 (dx^1 dx^2 + dx^2 dx^1).
    """
    fam = {"family": "tensor_perturbation", "amplitude": amplitude,
           "mode": mode, "p": p, "K": K}
    if mode == 0:
        k = _k_profile(K)
        return _radial_data(n, tau, Profile.power(amplitude, p, 1.0),
                            Profile.constant(1.0), k, k, fam)
    if mode not in (1, 2):
        raise ValueError(f"unknown tensor perturbation mode {mode}")

    def S(x):
        M = np.zeros((n, n))
        if mode == 1:
            M[0, 0] = 1.0
        else:
            M[0, 1] = M[1, 0] = x[0]
        return M

    def gfunc(x):
        r = rho_of(x)
        return np.eye(n) / r ** 2 + amplitude * r ** (p - 2) * S(x)

    g = SymTensorField(n, gfunc, None, None, "g")
    kq = _k_profile(K)
    Kf = SymTensorField(n, lambda x: kq(rho_of(x)) * gfunc(x), None, None,
                        "K")
    return InitialData(n, tau, g, Kf, 0.5, None, fam)


def radial_table(n: int, tau: float, samples: dict) -> InitialData:
    """Radial data from sampled profiles.

    ``samples`` maps any of 'a', 'c', 'k', 'kr', 'kt' to ``(rho, values)``;
    'k' sets kr = kt (K = k g).  Missing metric profiles default to 1,
    missing K profiles to 0.
    """
    def get(name, default):
        if name in samples:
            return Profile.from_samples(*samples[name])
        return Profile.constant(default)

    a, c = get("a", 1.0), get("c", 1.0)
    if "k" in samples:
        kr = kt = get("k", 0.0)
    else:
        kr, kt = get("kr", 0.0), get("kt", 0.0)
    fam = {"family": "radial_table", "profiles": sorted(samples)}
    return _radial_data(n, tau, a, c, kr, kt, fam)


def read_radial_table(path):
    """Read a two-column (rho, value) CSV with a header row."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (rho, value)")
    return arr[:, 0], arr[:, 1]


# ---------------------------------------------------------------- spheres

def sphere_mean_curvature_at(T: SymTensorField, x) -> float:
    """Divergence of the unit normal -grad(rho)/|grad rho| of the level
    set of rho through x (pointing towards decreasing rho)."""
    x = _coords(x)

    def normal(y):
        ginv = _inverse(T(y))
        v = ginv @ y  # -grad rho has chart components g^{ij} x_j
        return v / math.sqrt(y @ v)

    G = christoffels(T, x)
    dN = _fd(normal, x)
    return float(np.trace(dN) + np.einsum("iik,k->", G, normal(x)))


def coordinate_sphere_mean_curvature(data: InitialData, rho_level: float,
                                     points=None):
    """Mean curvature of {rho = rho_level} w.r.t. the normal towards the
    conformal boundary.  Scalar for radial data, else an array over
    ``points`` (unit directions; default the 2n coordinate axes)."""
    if not 0 < rho_level < 0.5:
        raise GeometryError("rho level must lie in (0, 1/2)")
    if data.radial is not None and points is None:
        return float(data.radial.mean_curvature(data.n, rho_level))
    if points is None:
        points = np.vstack([np.eye(data.n), -np.eye(data.n)])
    r = math.sqrt(1 - 2 * rho_level)
    return np.array([sphere_mean_curvature_at(data.g, r * np.asarray(d))
                     for d in points])


def detect_mots(data: InitialData, rho_range, samples: int = 4001,
                tol: float = 1e-10):
    """Roots of H - tr K (outer) and H + tr K (inner) on rho-spheres,
    with tr the tangential trace.  Returns a list of (kind, rho)."""
    if data.radial is None:
        raise GeometryError("MOTS detection needs radially symmetric data")
    rd, n = data.radial, data.n
    lo, hi = rho_range
    grid = np.linspace(lo, hi, samples)
    roots = []
    for kind, sgn in (("outer", -1.0), ("inner", 1.0)):
        def F(r):
            return float(rd.mean_curvature(n, r)
                         + sgn * rd.tangential_trace_K(n, r))
        vals = np.array([F(r) for r in grid])
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
            roots.append((kind, brentq(F, grid[i], grid[i + 1], xtol=tol)))
        roots.extend((kind, float(r)) for r, v in zip(grid, vals) if v == 0)
    return roots


# ---------------------------------------------------------------- kernels

def kernel_function(i: int, x) -> float:
    """V_0 = (1 - rho)/rho, V_i = x^i / rho."""
    x = _coords(x)
    if x @ x >= 1.0:
        raise GeometryError("kernel function evaluated outside the ball")
    rho = rho_of(x)
    if i == 0:
        return (1 - rho) / rho
    if not 1 <= i <= x.size:
        raise ValueError(f"kernel index {i} out of range")
    return x[i - 1] / rho


def kernel_field(i: int, n: int) -> ScalarField:
    if i == 0:
        return radial_scalar(Profile.v0(), "V0")

    def grad(x):
        r = rho_of(x)
        e = np.zeros(n)
        e[i - 1] = 1.0
        return e / r + x[i - 1] * x / r ** 2

    def hess(x):
        r = rho_of(x)
        e = np.zeros(n)
        e[i - 1] = 1.0
        return ((np.outer(e, x) + np.outer(x, e)) / r ** 2
                + x[i - 1] * (np.eye(n) / r ** 2
                              + 2 * np.outer(x, x) / r ** 3))

    return ScalarField(lambda x: kernel_function(i, x), grad, hess, None,
                       f"V{i}")


# ---------------------------------------------------------------- diagnostics

def _b_norm(e, rho):
    # |e|_b with b^{-1} = rho^2 delta
    return rho ** 2 * np.linalg.norm(e)


def decay_diagnostics(data: InitialData, warp: ScalarField, rhos=None,
                      direction=None) -> dict:
    """Sampled suprema of the remainder ratios of the asymptotic
    expansions along a ray."""
    n, tau = data.n, data.tau
    rhos = np.geomspace(1e-3, 0.25, 40) if rhos is None else np.asarray(rhos)
    d = np.eye(n)[0] if direction is None else np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    out = {"g_rr": 0.0, "metric": 0.0, "K": 0.0, "u_offset": 0.0,
           "u_log_derivative": 0.0}
    for rho in rhos:
        x = math.sqrt(1 - 2 * rho) * d
        ref = rho ** 2 * (1 - 2 * rho)
        rd = data.radial
        if rd is not None:
            # deviations avoid the cancellation in g - b near the boundary
            da, dc = float(rd.a.deviation(rho)), float(rd.c.deviation(rho))
            e_norm = math.sqrt(da ** 2 + (n - 1) * dc ** 2)
            k_norm = math.hypot(rd.kr(rho) * rd.a(rho),
                                math.sqrt(n - 1) * rd.kt(rho) * rd.c(rho))
            grr_err = ref * abs(da) / rd.a(rho)
        else:
            g = data.g(x)
            e_norm = _b_norm(g - np.eye(n) / rho ** 2, rho)
            k_norm = _b_norm(data.K(x), rho)
            grr_err = abs(x @ _inverse(g) @ x - ref)  # g^{ij} rho_i rho_j
        u = warp(x)
        du = warp.grad(x)
        # u_rho = du . dx/drho with dx/drho = -x / |x|^2
        u_rho = -(du @ x) / (x @ x)
        vals = {
            "g_rr": grr_err * rho ** -(tau + 2),
            "metric": e_norm * rho ** -tau,
            "K": k_norm * rho ** -tau,
            "u_offset": abs(u - 1 / rho),
            "u_log_derivative": abs(u_rho / u + 1 / rho),
        }
        for k, v in vals.items():
            out[k] = max(out[k], float(v))
    return out
