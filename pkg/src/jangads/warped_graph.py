"""Graphs in the warped product (M x R, g + u^2 dt^2).

The graph of f is parametrised by x -> (x, f(x)).  Normal vectors are
stored in the coordinate frame (d_1, ..., d_n, d_t), i.e. as arrays of
length n + 1 with the t-component last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .geometry import (GeometryError, Profile, ScalarField, SymTensorField,
                       _coords, _inverse, christoffels, radial_scalar)

__all__ = [
    "GraphGeometry", "warp_v0", "warp_rho_inverse", "warp_from_samples",
    "radial_graph_function", "spline_profile", "warped_metric",
    "warped_christoffels", "graph_metric", "graph_metric_field",
    "unit_normal", "second_fundamental_form", "mean_curvature",
    "vertical_w", "graph_laplacian", "extended_Ktt", "extended_trace",
    "graph_geometry", "warp_diagnostic",
]


# ---------------------------------------------------------------- factories

def warp_v0() -> ScalarField:
    """u = V_0 = (1 - rho) / rho."""
    return radial_scalar(Profile.v0(), "V0_plus_decay")


def warp_rho_inverse() -> ScalarField:
    return radial_scalar(Profile.power(1.0, -1.0), "rho_inverse_plus_decay")


def warp_from_samples(rho, values) -> ScalarField:
    return radial_scalar(Profile.from_samples(rho, values), "table")


def spline_profile(rho, values, k: int = 5) -> Profile:
    """Interpolating spline of order k as a Profile (k = 5 keeps the
    third derivative continuous)."""
    spl = make_interp_spline(np.asarray(rho), np.asarray(values), k=k)
    return Profile([spl, spl.derivative(1), spl.derivative(2),
                    spl.derivative(3)])


def radial_graph_function(profile: Profile) -> ScalarField:
    return radial_scalar(profile, "graph")


# ---------------------------------------------------------------- warped metric

def warped_metric(g: SymTensorField, u: ScalarField) -> SymTensorField:
    """g~ = g + u^2 dt^2 as a field on (x, t) in R^{n+1}."""
    n = g.n

    def func(y):
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = g(y[:n])
        out[n, n] = u(y[:n]) ** 2
        return out

    return SymTensorField(n + 1, func, None, None, "warped")


def warped_christoffels(g: SymTensorField, u: ScalarField, x) -> np.ndarray:
    """Christoffel symbols of g + u^2 dt^2; index n is the t-direction."""
    x = _coords(x)
    n = x.size
    u0 = u(x)
    if u0 <= 0:
        raise GeometryError("warping factor must be positive")
    du = u.grad(x)
    ginv = _inverse(g(x))
    out = np.zeros((n + 1, n + 1, n + 1))
    out[:n, :n, :n] = christoffels(g, x)
    out[:n, n, n] = -u0 * ginv @ du          # Gamma^k_tt = -u u^k
    out[n, :n, n] = du / u0                  # Gamma^t_it = u_i / u
    out[n, n, :n] = du / u0
    return out


# ---------------------------------------------------------------- point data

class _Point:
    """Shared per-point quantities."""

    def __init__(self, g, u, f, x):
        x = _coords(x)
        self.x = x
        self.n = x.size
        self.g = g(x)
        self.ginv = _inverse(self.g)
        self.G = christoffels(g, x)
        self.u = u(x)
        if self.u <= 0:
            raise GeometryError("warping factor must be positive")
        self.du = u.grad(x)
        self.df = f.grad(x)
        self.hess_f = f.hess(x) - np.einsum("kij,k->ij", self.G, self.df)
        self.f_up = self.ginv @ self.df
        self.df2 = float(self.df @ self.f_up)
        self.du_df = float(self.du @ self.f_up)
        self.W = 1.0 + self.u ** 2 * self.df2
        self.sqW = math.sqrt(self.W)
        self.gbar = self.g + self.u ** 2 * np.outer(self.df, self.df)
        self.gbar_inv = (self.ginv - self.u ** 2
                         * np.outer(self.f_up, self.f_up) / self.W)
        self.A = (self.u * self.hess_f + np.outer(self.du, self.df)
                  + np.outer(self.df, self.du) + self.u ** 2 * self.du_df
                  * np.outer(self.df, self.df)) / self.sqW
        self.H = float(np.einsum("ij,ij->", self.gbar_inv, self.A))


@dataclass
class GraphGeometry:
    gbar: np.ndarray
    gbar_inv: np.ndarray
    nu: np.ndarray
    A: np.ndarray
    H: float
    w: float


def graph_geometry(g, u, f, x) -> GraphGeometry:
    p = _Point(g, u, f, x)
    return GraphGeometry(p.gbar, p.gbar_inv, _normal(p), p.A, p.H,
                         1.0 / p.sqW)


def graph_metric(g, u, f, x):
    """Induced metric g + u^2 df df and its rank-one-update inverse."""
    x = _coords(x)
    gm = g(x)
    ginv = _inverse(gm)
    u0 = u(x)
    df = f.grad(x)
    fu = ginv @ df
    W = 1.0 + u0 ** 2 * df @ fu
    return (gm + u0 ** 2 * np.outer(df, df),
            ginv - u0 ** 2 * np.outer(fu, fu) / W)


def graph_metric_field(g, u, f) -> SymTensorField:
    return SymTensorField(g.n, lambda y: graph_metric(g, u, f, y)[0], None,
                          None, "graph")


def _normal(p: _Point) -> np.ndarray:
    nu = np.empty(p.n + 1)
    nu[:p.n] = p.u * p.f_up / p.sqW
    nu[p.n] = -1.0 / (p.u * p.sqW)
    return nu


def unit_normal(g, u, f, x) -> np.ndarray:
    """Downward unit normal u^-1 (u^2 f^i d_i - d_t) / sqrt(1 + u^2|df|^2)."""
    x = _coords(x)
    u0 = u(x)
    if u0 <= 0:
        raise GeometryError("warping factor must be positive")
    fu = _inverse(g(x)) @ f.grad(x)
    sqW = math.sqrt(1.0 + u0 ** 2 * f.grad(x) @ fu)
    return np.append(u0 * fu / sqW, -1.0 / (u0 * sqW))


def second_fundamental_form(g, u, f, x) -> np.ndarray:
    return _Point(g, u, f, x).A


def mean_curvature(g, u, f, x) -> float:
    return _Point(g, u, f, x).H


def vertical_w(g, u, f, x) -> float:
    """<u^-1 d_t, -nu> = (1 + u^2 |df|^2)^(-1/2)."""
    return 1.0 / _Point(g, u, f, x).sqW


def graph_laplacian(g, u, f, v: ScalarField, x) -> float:
    """Laplacian of the induced metric applied to v, via g-quantities."""
    p = _Point(g, u, f, x)
    dv = v.grad(x)
    hess_v = v.hess(x) - np.einsum("kij,k->ij", p.G, dv)
    du_dv = p.du @ p.ginv @ dv
    df_dv = p.f_up @ dv
    return float(np.einsum("ij,ij->", p.gbar_inv, hess_v)
                 + p.u * p.df2 * du_dv / p.W
                 - p.u * df_dv * p.H / p.sqW)


def extended_Ktt(g, u, f, x) -> float:
    """K-bar(d_t, d_t) = u^2 <df, du> / sqrt(1 + u^2|df|^2)."""
    x = _coords(x)
    u0 = u(x)
    ginv = _inverse(g(x))
    df = f.grad(x)
    W = 1.0 + u0 ** 2 * df @ ginv @ df
    return float(u0 ** 2 * (df @ ginv @ u.grad(x)) / math.sqrt(W))


def extended_trace(g, K: SymTensorField, u, f, x, form: str = "trace") -> float:
    """Trace of K-bar over the graph.

    ``form='trace'`` evaluates tr K + u^2|df|^2<df,du>/(1+u^2|df|^2)^{3/2};
    ``form='normal'`` evaluates tr K + u^-1 <nu, grad u>(1 - w^2).
    """
    p = _Point(g, u, f, x)
    trK = float(np.einsum("ij,ij->", p.gbar_inv, K(p.x)))
    if form == "trace":
        return trK + p.u ** 2 * p.df2 * p.du_df / p.W ** 1.5
    if form == "normal":
        nu = _normal(p)
        w = 1.0 / p.sqW
        return trK + float(nu[:p.n] @ p.du) / p.u * (1.0 - w * w)
    raise ValueError(f"unknown form {form!r}")


def warp_diagnostic(g, u, points) -> float:
    """Sampled sup of (|grad u|_g + |Hess u|_g) / u."""
    worst = 0.0
    for x in points:
        x = _coords(x)
        ginv = _inverse(g(x))
        du = u.grad(x)
        hu = u.hess(x) - np.einsum("kij,k->ij", christoffels(g, x), du)
        nd = math.sqrt(du @ ginv @ du)
        nh = math.sqrt(np.einsum("ij,jk,kl,li->", ginv, hu, ginv, hu))
        worst = max(worst, (nd + nh) / u(x))
    return worst
