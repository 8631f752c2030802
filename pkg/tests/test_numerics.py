import math
import warnings

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypoelliptic.errors import DimensionGuardError, IndefiniteMatrixError, QuadratureWarning
from hypoelliptic.numerics import (
    QuadSpec,
    flow_matrices,
    gauss_hermite,
    gramian,
    gramian_quadrature,
    mat_exp,
    quad_interval,
    quad_semiinf,
    rank_tol,
    spectrum,
    sym_factor,
)

RNG = np.random.default_rng(12345)


@pytest.mark.parametrize("scale", [1e-6, 1e-2, 1.0, 10.0, 50.0])
def test_mat_exp_matches_scipy(scale):
    for _ in range(10):
        A = scale * RNG.standard_normal((4, 4))
        ref = scipy.linalg.expm(A)
        np.testing.assert_allclose(mat_exp(A), ref, rtol=1e-11, atol=1e-13 * np.abs(ref).max())


def test_mat_exp_batch_and_zero():
    A = RNG.standard_normal((3, 3))
    ts = np.array([0.0, 0.5, 2.0])
    out = mat_exp(A, ts)
    assert out.shape == (3, 3, 3)
    np.testing.assert_allclose(out[0], np.eye(3))
    for k, t in enumerate(ts):
        np.testing.assert_allclose(out[k], scipy.linalg.expm(t * A), rtol=1e-12, atol=1e-14)


def test_mat_exp_nilpotent():
    N = np.array([[0.0, 0.0], [1.0, 0.0]])
    for t in (1e-3, 1.0, 1e8):
        np.testing.assert_allclose(mat_exp(N, t), np.array([[1.0, 0.0], [t, 1.0]]), rtol=1e-14, atol=1e-15)


def test_mat_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        mat_exp(np.ones((2, 3)))
    with pytest.raises(ValueError):
        mat_exp(np.eye(2), np.inf)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-2, 2)), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_mat_exp_semigroup_property(A, s, t):
    np.testing.assert_allclose(mat_exp(A, s) @ mat_exp(A, t), mat_exp(A, s + t),
                               rtol=1e-9, atol=1e-9 * np.abs(mat_exp(A, s + t)).max())


def _scipy_gramian(Q, B, t):
    f = lambda s: (scipy.linalg.expm(s * B) @ Q @ scipy.linalg.expm(s * B).T).ravel()
    return scipy.integrate.quad_vec(f, 0, t, epsabs=0, epsrel=1e-13)[0].reshape(B.shape)


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_gramian_matches_scipy_quadrature(t):
    for _ in range(3):
        B = RNG.standard_normal((3, 3))
        C = RNG.standard_normal((3, 2))
        Q = C @ C.T
        ref = _scipy_gramian(Q, B, t)
        np.testing.assert_allclose(gramian(Q, B, t), ref, rtol=1e-10, atol=1e-12 * np.abs(ref).max())


def test_gramian_two_routes_agree():
    B = np.array([[-2.0, -2.0], [1.0, 0.0]])
    Q = np.diag([1.0, 0.0])
    for t in (0.01, 0.7, 3.0):
        np.testing.assert_allclose(gramian(Q, B, t), gramian_quadrature(Q, B, t), rtol=1e-11)


def test_kolmogorov_gramian_closed_form():
    B = np.array([[0.0, 0.0], [1.0, 0.0]])
    Q = np.diag([1.0, 0.0])
    for t in (1e-3, 1.0, 1e4):
        ref = np.array([[t, t ** 2 / 2], [t ** 2 / 2, t ** 3 / 3]])
        np.testing.assert_allclose(gramian(Q, B, t), ref, rtol=1e-13)


def test_flow_matrices_large_time_heat():
    E, _, G = flow_matrices(np.zeros((2, 2)), np.eye(2), np.array([1e16]))
    np.testing.assert_allclose(G[0], 1e16 * np.eye(2), rtol=1e-13)
    np.testing.assert_array_equal(E[0], np.eye(2))


def test_flow_matrices_order_independent():
    B = np.array([[0.0, -1.0], [1.0, 0.0]])
    Q = np.diag([1.0, 0.0])
    ts = np.array([3.0, 0.1, 10.0, 1.0])
    E, _, G = flow_matrices(B, Q, ts)
    for k, t in enumerate(ts):
        np.testing.assert_allclose(G[k], gramian_quadrature(Q, B, t), rtol=1e-11, atol=1e-14)
        np.testing.assert_allclose(E[k], scipy.linalg.expm(t * B), rtol=1e-12, atol=1e-14)


def test_sym_factor_psd_and_indefinite():
    C = RNG.standard_normal((4, 2))
    S = C @ C.T
    L = sym_factor(S)
    np.testing.assert_allclose(L @ L.T, S, atol=1e-12)
    np.testing.assert_allclose(np.tril(L), L)
    S = np.diag([1.0, 0.0, 2.0])
    np.testing.assert_allclose(sym_factor(S) @ sym_factor(S).T, S)
    with pytest.raises(IndefiniteMatrixError):
        sym_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(IndefiniteMatrixError):
        sym_factor(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_sym_factor_matches_cholesky_for_pd():
    C = RNG.standard_normal((5, 5))
    S = C @ C.T + np.eye(5)
    np.testing.assert_allclose(sym_factor(S), np.linalg.cholesky(S), rtol=1e-12)


def test_rank_and_spectrum():
    assert rank_tol(np.zeros((3, 3))) == 0
    assert rank_tol(np.diag([1.0, 1e-14, 1.0])) == 2
    sp = spectrum(np.array([[0.0, -1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(np.sort_complex(sp.eigenvalues), [-1j, 1j], atol=1e-14)
    assert sp.abscissa == pytest.approx(0.0, abs=1e-14)
    assert spectrum(np.array([[-2.0, -2.0], [1.0, 0.0]])).abscissa == pytest.approx(-1.0)


@pytest.mark.parametrize("a,lam", [(-0.5, 0.0), (0.0, 1.0), (1.5, 2.0), (-0.75, 0.3)])
def test_quad_semiinf_gamma_moments(a, lam):
    # ∫ t^a e^{-λt} e^{-t} dt = Γ(a+1)/(1+λ)^{a+1}
    res = quad_semiinf(lambda t: np.exp(-t), None, a, decay_rate=lam)
    assert res.converged
    assert res.value == pytest.approx(math.gamma(a + 1) / (1 + lam) ** (a + 1), rel=1e-10)


def test_quad_semiinf_slow_power_tails():
    # t^{-0.95} at 0 and t^{-1.05} at ∞ outlast max_span; the rest is summed geometrically
    res = quad_semiinf(lambda t: np.exp(-t), None, -0.95)
    assert res.converged
    assert res.value == pytest.approx(math.gamma(0.05), rel=1e-9)
    res = quad_semiinf(lambda t: 1.0 / (1.0 + t) ** 1.05, None, 0.0)
    assert res.converged
    assert res.value == pytest.approx(1 / 0.05, rel=1e-9)
    res = quad_semiinf(lambda t: np.exp(-t), None, -0.95, small_time_series=(1.0, -1.0))
    assert res.value == pytest.approx(math.gamma(0.05), rel=1e-9)


def test_quad_semiinf_truncation_warns():
    # an oscillating tail is neither negligible nor geometric
    with pytest.warns(QuadratureWarning):
        res = quad_semiinf(lambda t: 1.0 + 0.5 * np.sin(np.log(t)), None, -1.0)
    assert not res.converged


def test_quad_semiinf_far_scale_against_bessel():
    # ∫ t^{ν-1} e^{-β/t - γt} dt = 2 (β/γ)^{ν/2} K_ν(2√(βγ)); adaptive scipy.quad misses this mass
    beta, gam, nu = 1e4, 1e-8, -0.5
    ref = 2 * (beta / gam) ** (nu / 2) * scipy.special.kv(nu, 2 * math.sqrt(beta * gam))
    h = lambda t: np.exp(-beta / t)
    res = quad_semiinf(h, None, nu - 1, decay_rate=gam, extra_splits=[beta])
    assert res.value == pytest.approx(ref, rel=1e-10)


def test_quad_semiinf_vector_componentwise():
    # components of very different size both converge to relative accuracy
    def h(t):
        return np.stack([np.exp(-t), 1e-200 * np.exp(-2 * t)])

    res = quad_semiinf(h, None, 0.0)
    np.testing.assert_allclose(res.value, [1.0, 0.5e-200], rtol=1e-10)


def test_quad_semiinf_small_time_series():
    # ∫ t^{-1.5}(1 - e^{-t}) dt = 2√π
    res = quad_semiinf(lambda t: -np.expm1(-t), None, -1.5, small_time_series=(None, 1.0))
    assert res.value == pytest.approx(2 * math.sqrt(math.pi), rel=1e-10)


def test_quad_semiinf_warns_when_not_converged():
    spec = QuadSpec(max_refinements=0, rel_tol=1e-15, panel_order=2)
    with pytest.warns(QuadratureWarning):
        res = quad_semiinf(lambda t: np.cos(30 * t) * np.exp(-t), spec, 0.0)
    assert not res.converged


def test_quad_interval_matches_scipy():
    f = lambda x: np.sin(x) ** 2 * np.exp(-x)
    ref = scipy.integrate.quad(f, 0, 7, epsabs=0, epsrel=1e-13)[0]
    assert quad_interval(f, 0.0, 7.0).value == pytest.approx(ref, rel=1e-12)


def test_quadspec_validation():
    with pytest.raises(ValueError):
        QuadSpec(split_points=(2.0, 1.0))
    with pytest.raises(ValueError):
        QuadSpec(rel_tol=0.0)
    with pytest.raises(ValueError):
        QuadSpec(gh_order=0)
    assert QuadSpec().replace(rel_tol=1e-6).rel_tol == 1e-6


def test_gauss_hermite_moments():
    nodes, w = gauss_hermite(2, 20)
    assert nodes.shape == (400, 2)
    assert w.sum() == pytest.approx(math.pi, rel=1e-13)
    # E[ξ1² ξ2⁴] under e^{-|ξ|²}/π = (1/2)(3/4)
    assert (w * nodes[:, 0] ** 2 * nodes[:, 1] ** 4).sum() / math.pi == pytest.approx(0.375, rel=1e-12)
    with pytest.raises(DimensionGuardError):
        gauss_hermite(5, 4)
