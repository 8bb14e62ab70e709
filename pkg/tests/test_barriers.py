import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jangads import barriers as B
from jangads import geometry as G
from jangads.warped_graph import warp_v0

PARAMS = [(n, frac * n, C0) for n in (3, 4, 7) for frac in (0.55, 0.95)
          for C0 in (0.1, 10.0)]


def test_F_endpoint_values():
    n, tau = 3, 2.25
    assert float(B.F(0.0, 0.3, n, tau)) == pytest.approx(tau - n / 2)
    assert float(B.F(1.0, 0.3, n, tau)) == pytest.approx(0.3 * (tau - n / 2))
    x = np.linspace(0, 1, 50)
    assert np.all(np.diff(B.F(x, 0.3, n, tau)) < 0)


@pytest.mark.parametrize("n,tau,C0", PARAMS)
def test_choose_parameters(n, tau, C0):
    rho0, lam = B.choose_parameters(n, tau, C0)
    assert 0 < rho0 <= 0.25 and 0 < lam < 1
    # the defining inequality holds with margin at 2 rho0
    top = min(2 * rho0, 0.5)
    assert C0 * top + C0 * top ** tau <= (n - tau) / 4 * (1 + 1e-12)
    assert float(B.F(B.x0(n, tau), lam, n, tau)) == pytest.approx(1 / 16,
                                                                  rel=1e-10)


@pytest.mark.parametrize("tau", [1.5, 3.0, 3.5])
def test_tau_out_of_range(tau):
    with pytest.raises(B.BarrierError):
        B.choose_parameters(3, tau, 1.0)
    with pytest.raises(B.BarrierError):
        B.BarrierSpec(3, tau, 1.0, 0.1, 0.5)


def test_bad_C0_and_lambda():
    with pytest.raises(B.BarrierError):
        B.choose_parameters(3, 2.25, 0.0)
    with pytest.raises(B.BarrierError):
        B.BarrierSpec(3, 2.25, 1.0, 0.1, 1.0)
    with pytest.raises(B.BarrierError):
        B.BarrierSpec(3, 2.25, 1.0, 0.1, 0.5, sign=2)


@pytest.mark.parametrize("n,tau,C0", PARAMS)
def test_xi_profile(n, tau, C0):
    spec = B.make_spec(n, tau, C0)
    v, _ = B.xi(spec, spec.rho0)
    assert v == pytest.approx(1.0, rel=1e-15)
    r = np.geomspace(spec.rho0 * 1e-8, spec.rho0, 500)
    v, d = B.xi(spec, r)
    x = r / spec.rho0
    assert np.all(v >= x ** tau * (1 - 1e-13))
    assert np.all(v <= x ** (n / 2) * (1 + 1e-13))
    assert np.all(d > 0) and np.all(np.diff(v) > 0)
    g = B.gamma(spec, r)
    assert np.all((g >= n / 2) & (g <= tau))


def test_xi_derivative_matches_finite_difference():
    spec = B.make_spec(3, 2.25, 1.0)
    r = np.linspace(0.05, 0.95, 19) * spec.rho0
    h = 1e-6 * spec.rho0
    fd = (B.xi(spec, r + h)[0] - B.xi(spec, r - h)[0]) / (2 * h)
    assert np.allclose(B.xi(spec, r)[1], fd, rtol=1e-8)


def test_xi_domain():
    spec = B.make_spec(3, 2.25, 1.0)
    with pytest.raises(B.BarrierError):
        B.xi(spec, 1.1 * spec.rho0)
    with pytest.raises(B.BarrierError):
        B.xi(spec, 0.0)
    with pytest.raises(B.BarrierError):
        B.barrier_function(spec, -1e-3)


@pytest.mark.parametrize("n,tau,C0", PARAMS)
def test_barrier_function_shape(n, tau, C0):
    spec = B.make_spec(n, tau, C0)
    assert B.barrier_function(spec, 0.0) == 0.0
    top = B.barrier_function(spec, spec.rho0)
    assert math.isfinite(top) and top > 0
    r = np.geomspace(spec.rho0 * 1e-6, spec.rho0 / 2, 12)
    f = B.barrier_function(spec, r)
    ratio = f / r ** (tau + 1)
    # xi ~ (rho/rho0)^tau / lam near 0, so the ratio is bounded by its limit
    limit = 1 / ((tau + 1) * spec.lam * spec.rho0 ** tau)
    assert np.all(np.diff(ratio) <= 1e-9 * ratio[0])
    assert ratio.max() <= limit * (1 + 1e-9)


def test_lower_barrier_is_mirror():
    spec = B.make_spec(3, 2.25, 1.0)
    r = np.linspace(0, spec.rho0, 9)
    assert np.array_equal(B.barrier_function(spec.lower(), r),
                          -B.barrier_function(spec, r))
    v, d = B.xi(spec.lower(), r[1:])
    assert np.array_equal(v, -B.xi(spec, r[1:])[0])


def test_barrier_derivative_consistency():
    spec = B.make_spec(4, 3.0, 2.0)
    r = np.linspace(0.1, 0.8, 8) * spec.rho0
    h = 1e-5 * spec.rho0
    fd = (B.barrier_function(spec, r + h) - B.barrier_function(spec, r - h)
          ) / (2 * h)
    assert np.allclose(B.barrier_derivatives(spec, r)[0], fd, rtol=1e-7)


@pytest.mark.parametrize("n,tau,C0", PARAMS)
def test_inequality_holds(n, tau, C0):
    spec = B.make_spec(n, tau, C0)
    rep = B.verify_barrier_inequality(
        spec, np.geomspace(spec.rho0 * 1e-6, spec.rho0, 2000))
    assert rep["pass"] and rep["max_lhs"] < 0
    assert np.array_equal(rep["lower_lhs"], -rep["lhs"])
    assert np.all(rep["lower_lhs"] > 0)


@pytest.mark.parametrize("C0", [1.0, 100.0])
def test_inequality_fails_for_lambda_near_one(C0):
    base = B.make_spec(3, 2.25, C0)
    spec = B.BarrierSpec(3, 2.25, C0, base.rho0, 0.999)
    rep = B.verify_barrier_inequality(
        spec, np.geomspace(spec.rho0 * 1e-6, spec.rho0, 2000))
    assert not rep["pass"] and rep["violations"]


@given(st.integers(3, 7), st.floats(0.52, 0.98), st.floats(0.01, 100.0))
@settings(max_examples=30, deadline=None)
def test_inequality_property(n, frac, C0):
    tau = frac * n
    if tau - n / 2 <= 1 / 16:
        with pytest.raises(B.BarrierError):
            B.make_spec(n, tau, C0)
        return
    spec = B.make_spec(n, tau, C0)
    rep = B.verify_barrier_inequality(
        spec, np.geomspace(spec.rho0 * 1e-6, spec.rho0, 500))
    assert rep["pass"]


def test_cache_matches_direct_quadrature():
    spec = B.make_spec(3, 2.25, 1.0)
    cache = B.BarrierCache(spec)
    r = np.linspace(0, spec.rho0, 37)
    direct = B.barrier_function(spec, r)
    assert np.allclose(cache(r), direct, atol=1e-9 * direct.max())
    assert np.allclose(cache.lower(r), -direct, atol=1e-9 * direct.max())


def test_key_cancellation_tends_to_one():
    spec = B.make_spec(3, 2.25, 1.0)
    r = np.geomspace(1e-6, 1e-2, 5) * spec.rho0
    val = B.key_cancellation(spec, warp_v0(), r)
    assert np.all(np.abs(val - 1) <= 10 * r)


def test_estimate_C0_pure_ads_small():
    assert B.estimate_C0(G.pure_ads(3), warp_v0()) < 10


def test_estimate_C0_monotone_in_amplitude():
    vals = [B.estimate_C0(G.conformal_perturbation(3, 2.25, c, 3), warp_v0())
            for c in (0.05, 0.1, 0.2, 0.4)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_estimate_C0_stable_under_refinement():
    data = G.conformal_perturbation(3, 2.25, 0.2, 3,
                                    K={"amplitude": 0.2, "decay": 2.25})
    a = B.estimate_C0(data, warp_v0(), samples=200)
    b = B.estimate_C0(data, warp_v0(), samples=400)
    assert b == pytest.approx(a, rel=0.1)


def test_estimate_C0_needs_radial_data():
    data = G.tensor_perturbation(3, 2.25, 0.5, 2, 3.0)
    with pytest.raises(B.BarrierError):
        B.estimate_C0(data, warp_v0())
    with pytest.raises(B.BarrierError):
        B.estimate_C0(G.pure_ads(3), warp_v0(), region=(0.1, 0.6))
