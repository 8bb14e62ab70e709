import math

import numpy as np
import pytest

from jangads import barriers as B
from jangads import geometry as G
from jangads import jang as J
from jangads import radial_solver as R
from jangads import warped_graph as W

PERTURBED = G.conformal_perturbation(3, 2.25, 0.2, 3,
                                     K={"amplitude": 0.3, "decay": 2.25})


def _smoothstep(r, lo=0.1, hi=0.2):
    t = np.clip((r - lo) / (hi - lo), 0, 1)
    return t * t * (3 - 2 * t)


def _mots_data(phi=1.05):
    """K = phi(rho) g with phi rising from 0 to `phi` between 0.1 and 0.2."""
    rho = np.linspace(1e-3, 0.49, 800)
    return G.radial_table(3, 2.25, {"k": (rho, phi * _smoothstep(rho))})


def test_grid_validation():
    with pytest.raises(ValueError):
        R.RadialGrid(0.3, 0.2, 64)
    with pytest.raises(ValueError):
        R.RadialGrid(0.01, 0.2, 8)
    with pytest.raises(ValueError):
        R.RadialGrid(0.01, 0.2, 64, kind="chebyshev")
    g = R.RadialGrid(0.01, 0.2, 65)
    assert g.rho[0] == pytest.approx(0.01) and g.rho[-1] == pytest.approx(0.2)
    assert np.all(np.diff(g.rho) > 0)


def test_radial_residual_matches_jang_operator():
    data = PERTURBED
    prof = G.Profile.power(0.3, 3.25)
    f = W.radial_graph_function(prof)
    u = W.warp_v0()
    rho = np.array([0.03, 0.08, 0.15, 0.22])
    coeffs = R._coefficients(data.radial, rho)
    V = G.Profile.v0()
    radial = R.radial_jang_residual(3, coeffs, V(rho), V(rho, 1), prof(rho),
                                    prof(rho, 1), prof(rho, 2))
    d = np.array([0.48, -0.6, 0.64])
    for r, val in zip(rho, radial):
        ref = J.jang_operator(data, u, f, math.sqrt(1 - 2 * r) * d).value
        assert val == pytest.approx(ref, abs=1e-10 * max(1, abs(ref)))


def test_continuous_residual_of_interpolant():
    """The spline through samples of a profile reproduces its residual."""
    prof = G.Profile.power(0.3, 3.25)
    nodes = np.linspace(0.01, 0.3, 200)
    pts = np.linspace(0.05, 0.25, 9)
    got = R.continuous_residual(PERTURBED, W.warp_v0(), nodes, prof(nodes),
                                pts)
    V = G.Profile.v0()
    ref = R.radial_jang_residual(3, R._coefficients(PERTURBED.radial, pts),
                                 V(pts), V(pts, 1), prof(pts), prof(pts, 1),
                                 prof(pts, 2))
    assert np.allclose(got, ref, atol=1e-6)


@pytest.mark.parametrize("eps", [1e-6, 1e-4, 1e-2])
def test_pure_ads_solution_is_zero(eps):
    sol = R.solve_regularized(G.pure_ads(3), W.warp_v0(),
                              R.RadialGrid(1e-2, 0.25, 128), eps)
    assert np.abs(sol.f).max() <= 1e-8 and sol.s == 1.0


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_solution_respects_c0_bound(eps):
    sol = R.solve_regularized(PERTURBED, W.warp_v0(),
                              R.RadialGrid(1e-2, 0.25, 128), eps)
    assert sol.c0_ok
    assert np.abs(sol.f).max() <= sol.c0_bound
    assert sol.residual_sup <= 1e-10


def test_barrier_sandwich():
    u = W.warp_v0()
    spec = B.make_spec(3, 2.25, B.estimate_C0(PERTURBED, u))
    grid = R.RadialGrid(spec.rho0 / 50, spec.rho0, 128)
    sol = R.solve_regularized(PERTURBED, u, grid, 1e-3)
    cmp = R.verify_comparison(sol, spec, PERTURBED, u)
    assert cmp["hypotheses_hold"] and cmp["sandwich"]
    assert cmp["min_gap_upper"] >= 0 and cmp["min_gap_lower"] >= 0


def test_violated_boundary_data_flagged():
    u = W.warp_v0()
    spec = B.make_spec(3, 2.25, B.estimate_C0(PERTURBED, u))
    grid = R.RadialGrid(spec.rho0 / 50, spec.rho0, 64)
    phi = 10 * float(B.barrier_function(spec, grid.rho_min))
    sol = R.solve_regularized(PERTURBED, u, grid, 1e-2, phi=phi)
    cmp = R.verify_comparison(sol, spec, PERTURBED, u)
    assert not cmp["hypotheses"]["inner_boundary"]
    assert cmp["sandwich"] is None


def test_comparison_rejects_wide_annulus():
    spec = B.make_spec(3, 2.25, 1.0)
    sol = R.solve_regularized(PERTURBED, W.warp_v0(),
                              R.RadialGrid(1e-2, 0.45, 64), 1e-2)
    with pytest.raises(ValueError):
        R.verify_comparison(sol, spec)


def test_continuation_path_independence():
    grid = R.RadialGrid(1e-2, 0.25, 128)
    a = R.solve_regularized(PERTURBED, W.warp_v0(), grid, 1e-3, ds0=1 / 4,
                            adaptive=False)
    b = R.solve_regularized(PERTURBED, W.warp_v0(), grid, 1e-3, ds0=1 / 64,
                            adaptive=False)
    assert len(b.newton_iterations) > len(a.newton_iterations)
    assert np.abs(a.f - b.f).max() <= 1e-9


def test_sign_equivariance():
    flipped = G.conformal_perturbation(3, 2.25, 0.2, 3,
                                       K={"amplitude": -0.3, "decay": 2.25})
    grid = R.RadialGrid(1e-2, 0.25, 128)
    a = R.solve_regularized(PERTURBED, W.warp_v0(), grid, 1e-3, phi=0.01)
    b = R.solve_regularized(flipped, W.warp_v0(), grid, 1e-3, phi=-0.01)
    assert np.allclose(a.f, -b.f, atol=1e-12)


def test_second_order_refinement():
    u, eps = W.warp_v0(), 1e-3
    ref = R.solve_regularized(PERTURBED, u, R.RadialGrid(1e-2, 0.25, 4097),
                              eps).f
    errs, hs = [], []
    for N in (129, 257, 513):
        grid = R.RadialGrid(1e-2, 0.25, N)
        f = R.solve_regularized(PERTURBED, u, grid, eps).f
        errs.append(np.abs(f - ref[::(4096 // (N - 1))]).max())
        hs.append(grid.h)
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 1.9


def test_epsilon_sweep_pure_ads():
    sw = R.epsilon_sweep(G.pure_ads(3), W.warp_v0(),
                         R.RadialGrid(1e-2, 0.25, 128))
    assert sw.converged and len(sw.solutions) == 2
    assert sw.geometric_residual <= 1e-12


def test_epsilon_sweep_perturbed():
    grid = R.RadialGrid(1e-2, 0.25, 256)
    sw = R.epsilon_sweep(PERTURBED, W.warp_v0(), grid)
    assert sw.converged
    assert all(b < a for a, b in zip(sw.differences[1:], sw.differences[2:]))
    assert sw.extrapolated_residual <= 1e-9
    assert sw.extrapolated_residual < sw.geometric_residual


def test_epsilon_schedule_must_decrease():
    with pytest.raises(ValueError):
        R.epsilon_sweep(G.pure_ads(3), W.warp_v0(),
                        R.RadialGrid(1e-2, 0.25, 64), [1e-3, 1e-2])


def test_gradient_grows_towards_mots():
    data = _mots_data()
    roots = [r for _, r in G.detect_mots(data, (0.01, 0.3))]
    assert roots and min(roots) < 0.2
    grads = []
    for top in (0.15, 0.18, 0.2, 0.22):
        sol = R.solve_regularized(data, W.warp_v0(),
                                  R.RadialGrid(1e-2, top, 256), 1e-2)
        grads.append(np.abs(sol.df_drho).max())
    assert all(b > 1.3 * a for a, b in zip(grads, grads[1:]))


def test_solver_fails_past_mots():
    """Past the trapped region the Dirichlet problem has no regular
    solution and continuation stalls before s = 1."""
    with pytest.raises(R.SolverError, match="stalled"):
        R.solve_regularized(_mots_data(), W.warp_v0(),
                            R.RadialGrid(1e-2, 0.3, 256), 1e-2)


def test_precondition_errors():
    grid = R.RadialGrid(1e-2, 0.25, 64)
    with pytest.raises(R.PreconditionError):
        R.solve_regularized(PERTURBED, W.warp_v0(), grid, 0.0)
    generic = G.tensor_perturbation(3, 2.25, 0.5, 2, 3.0)
    with pytest.raises(R.PreconditionError):
        R.solve_regularized(generic, W.warp_v0(), grid, 1e-2)
    rho = np.linspace(1e-3, 0.49, 50)
    trapped = G.radial_table(3, 2.25, {"k": (rho, np.full_like(rho, 1.2))})
    # K = 1.2 g is trapped for rho below the root 0.356
    with pytest.raises(R.PreconditionError, match="untrapped"):
        R.solve_regularized(trapped, W.warp_v0(),
                            R.RadialGrid(0.2, 0.45, 64), 1e-2)
    neg = (-np.ones(grid.N), np.zeros(grid.N))
    with pytest.raises(R.PreconditionError):
        R.solve_regularized(PERTURBED, neg, grid, 1e-2)


def test_coupled_pure_ads():
    grid = R.RadialGrid(1e-2, 0.25, 256)
    sol = R.solve_coupled(G.pure_ads(3), grid)
    assert sol.converged and np.abs(sol.f).max() <= 1e-10
    V = G.Profile.v0()(grid.rho)
    assert np.abs(sol.u - V).max() / V.max() <= 1e-8


def test_coupled_perturbed():
    grid = R.RadialGrid(1e-2, 0.25, 256)
    sol = R.solve_coupled(PERTURBED, grid)
    assert sol.converged and sol.outer_iterations <= 30
    assert sol.jang_residual <= 1e-6 and sol.warp_residual <= 1e-6
    changes = [h["change"] for h in sol.history]
    assert changes[-1] < changes[0]
    # u - V0 = O(rho^(tau - 1))
    V = G.Profile.v0()(grid.rho)
    assert np.max(np.abs(sol.u - V) / grid.rho ** (2.25 - 1)) < 1.0


def test_coupled_bad_inner_condition():
    with pytest.raises(ValueError):
        R.solve_coupled(PERTURBED, R.RadialGrid(1e-2, 0.25, 64),
                        inner_bc="neumann")
