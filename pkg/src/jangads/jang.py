"""The generalized Jang operator, its linearization, the local energy and
current densities and the Schoen-Yau identity residual."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (InitialData, ScalarField, _coords, _fd, _inverse,
                       christoffels, metric_derivative, scalar_curvature)
from .warped_graph import _Point, graph_metric_field, vertical_w

__all__ = [
    "JangResidualReport", "EnergyCurrent", "SchoenYauReport",
    "jang_operator", "linearization", "apply_linearization",
    "energy_current", "schoen_yau_residual", "jang_w_vector",
    "vertical_inequality_diagnostic",
]


@dataclass
class JangResidualReport:
    value: float          # J_s(f) = H-part - K-part
    regularized: float    # J_s(f) - eps f
    s: float
    eps: float
    h_part: float
    k_part: float


@dataclass
class EnergyCurrent:
    mu: float
    J: np.ndarray
    J_norm: float

    @property
    def dec_margin(self) -> float:
        return self.mu - self.J_norm


def _P(p: _Point) -> np.ndarray:
    return (p.u * p.hess_f + np.outer(p.du, p.df) + np.outer(p.df, p.du))


def jang_operator(data: InitialData, u, f: ScalarField, x, s: float = 1.0,
                  eps: float = 0.0) -> JangResidualReport:
    p = _Point(data.g, u, f, x)
    h_part = float(np.einsum("ij,ij->", p.gbar_inv, _P(p))) / p.sqW
    k_part = s * float(np.einsum("ij,ij->", p.gbar_inv, data.K(p.x)))
    value = h_part - k_part
    return JangResidualReport(value, value - eps * f(p.x), s, eps,
                              h_part, k_part)


def linearization(data: InitialData, u, f: ScalarField, x, s: float = 1.0):
    """Coefficients (G, b, d) of the derivative of f -> J_s(f) - eps f:
    G^{ij} Hess_ij eta + b^k eta_k + sigma d - eps eta."""
    p = _Point(data.g, u, f, x)
    K = data.K(p.x)
    P = _P(p)
    gi = p.gbar_inv
    G = p.u * gi / p.sqW
    trP = np.einsum("ij,ij->", gi, P)
    b = (-p.u ** 2 * (trP * p.f_up + 2 * gi @ P @ p.f_up) / p.W ** 1.5
         + 2 * gi @ p.du / p.sqW)
    # the K-part also depends on f through gbar^{ij}
    b = b + 2 * s * p.u ** 2 * gi @ K @ p.f_up / p.W
    d = -float(np.einsum("ij,ij->", gi, K))
    return G, b, d


def apply_linearization(data, u, f, eta: ScalarField, x, s=1.0, eps=0.0,
                        sigma: float = 0.0) -> float:
    x = _coords(x)
    G, b, d = linearization(data, u, f, x, s)
    Gam = christoffels(data.g, x)
    d_eta = eta.grad(x)
    hess = eta.hess(x) - np.einsum("kij,k->ij", Gam, d_eta)
    return float(np.einsum("ij,ij->", G, hess) + b @ d_eta + sigma * d
                 - eps * eta(x))


def energy_current(data: InitialData, x) -> EnergyCurrent:
    x = _coords(x)
    n = data.n
    g = data.g(x)
    ginv = _inverse(g)
    K = data.K(x)
    Gam = christoffels(data.g, x)
    dK = metric_derivative(data.K, x)
    # nabla_k K_ij
    nK = (dK - np.einsum("lki,lj->kij", Gam, K)
          - np.einsum("lkj,il->kij", Gam, K))
    trK = float(np.einsum("ij,ij->", ginv, K))
    K2 = float(np.einsum("ia,jb,ij,ab->", ginv, ginv, K, K))
    scal = scalar_curvature(data.g, x)
    mu = 0.5 * (scal + n * (n - 1) + trK ** 2 - K2)
    divK = np.einsum("ik,kij->j", ginv, nK)
    dtr = np.einsum("ij,kij->k", ginv, nK)
    J = divK - dtr
    return EnergyCurrent(float(mu), J, float(math.sqrt(J @ ginv @ J)))


def jang_w_vector(g, u, f, x) -> np.ndarray:
    """The vector field u f^i d_i / sqrt(1 + u^2 |df|^2)."""
    p = _Point(g, u, f, x)
    return p.u * p.f_up / p.sqW


def _restricted_Kbar(p: _Point, K) -> np.ndarray:
    Ktt = p.u ** 2 * p.du_df / p.sqW
    return K + Ktt * np.outer(p.df, p.df)


def _q(data, u, f, y):
    p = _Point(data.g, u, f, y)
    D = p.A - _restricted_Kbar(p, data.K(p.x))
    return p, D, p.u * (D @ p.f_up) / p.sqW


@dataclass
class SchoenYauReport:
    residual: float
    jang_value: float
    terms: dict = field(default_factory=dict)


def schoen_yau_residual(data: InitialData, u, f: ScalarField, x
                        ) -> SchoenYauReport:
    """Scal(gbar) minus the right hand side of the generalized Schoen-Yau
    identity.  Only meaningful where f solves the Jang equation, so the
    local Jang value is reported alongside."""
    x = _coords(x)
    n = data.n
    p, D, q = _q(data, u, f, x)
    gi = p.gbar_inv
    gbar_field = graph_metric_field(data.g, u, f)
    scal_bar = scalar_curvature(gbar_field, x)
    ec = energy_current(data, x)
    w_vec = p.u * p.f_up / p.sqW
    AK2 = float(np.einsum("ia,jb,ij,ab->", gi, gi, D, D))
    q2 = float(q @ gi @ q)
    uq = lambda y: (lambda r: r[0].u * r[2])(_q(data, u, f, y))
    d_uq = _fd(uq, x)                                 # d_i (u q)_j
    Gbar = christoffels(gbar_field, x)
    nabla = d_uq - np.einsum("kij,k->ij", Gbar, p.u * q)
    div_uq = float(np.einsum("ij,ij->", gi, nabla))
    rhs = (-n * (n - 1) + 2 * (ec.mu - float(ec.J @ w_vec)) + AK2 + 2 * q2
           - 2 / p.u * div_uq)
    jv = jang_operator(data, u, f, x).value
    terms = {"scal_bar": scal_bar, "mu": ec.mu, "J_w": float(ec.J @ w_vec),
             "A_minus_K2": AK2, "q2": q2, "div_uq": div_uq}
    return SchoenYauReport(float(scal_bar - rhs), jv, terms)


def vertical_inequality_diagnostic(data: InitialData, u, f: ScalarField,
                                   points) -> dict:
    """Sampled sup of Lap_gbar(w^1/2)/w^1/2 and of u|df|_g."""
    from .warped_graph import graph_laplacian  # local to avoid a cycle
    root_w = ScalarField(lambda y: math.sqrt(vertical_w(data.g, u, f, y)))
    ratio, grad = 0.0, 0.0
    for x in points:
        x = _coords(x)
        val = root_w(x)
        lap = graph_laplacian(data.g, u, f, root_w, x)
        ratio = max(ratio, lap / val)
        df = f.grad(x)
        grad = max(grad, u(x) * math.sqrt(df @ _inverse(data.g(x)) @ df))
    return {"laplacian_ratio_sup": float(ratio), "u_df_sup": float(grad)}
