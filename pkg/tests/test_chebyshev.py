import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import chebyshev as npc
from scipy.integrate import quad

from chebmpc.chebyshev import (
    ChebyshevBasis, ConvergenceError, DomainError, TimeMap, cg_nodes, chebyshev_matrix, eval_chebyshev,
    icc_propagate, integration_operators, integration_rows, quadrature_weights, tau_to_time, time_to_tau,
)


# -- evaluation -----------------------------------------------------------

@pytest.mark.parametrize("j,tau,expected", [(0, 0.37, 1.0), (2, 0.5, -0.5), (3, -1.0, -1.0)])
def test_eval_examples(j, tau, expected):
    assert eval_chebyshev(j, tau) == pytest.approx(expected, abs=1e-15)


def test_eval_domain_error():
    with pytest.raises(DomainError):
        eval_chebyshev(2, 1.1)
    with pytest.raises(ValueError):
        eval_chebyshev(-1, 0.0)


def test_recurrence_matches_cosine_form():
    tau = np.linspace(-1, 1, 2001)
    T = chebyshev_matrix(tau, 30)
    ref = np.cos(np.outer(np.arccos(tau), np.arange(31)))
    assert np.abs(T - ref).max() < 1e-12


# -- nodes and weights ----------------------------------------------------

def test_cg_nodes_examples():
    assert np.allclose(cg_nodes(1), [0.70710678118654757, -0.70710678118654757], atol=1e-15)
    assert np.allclose(cg_nodes(2), [math.sqrt(3) / 2, 0.0, -math.sqrt(3) / 2], atol=1e-15)


@given(st.integers(1, 40))
def test_cg_nodes_are_roots_and_decreasing(n):
    tau = cg_nodes(n)
    assert tau.shape == (n + 1,)
    assert np.all(np.diff(tau) < 0)
    assert np.all(np.abs(tau) < 1)
    assert np.abs(chebyshev_matrix(tau, n + 1)[:, -1]).max() < 1e-12


@given(st.integers(1, 40))
def test_weights_positive_sum_two(n):
    w = quadrature_weights(n)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(2.0, rel=1e-14)


@given(st.integers(2, 40))
def test_second_moment(n):
    assert quadrature_weights(n) @ cg_nodes(n) ** 2 == pytest.approx(2 / 3, rel=1e-13)


def test_moment_oracle_n6():
    # closed form of the integral of tau^k over [-1, 1]
    w, tau = quadrature_weights(6), cg_nodes(6)
    for k in range(7):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(w @ tau**k - exact) < 1e-12 * max(1.0, exact)


@settings(max_examples=60)
@given(st.integers(1, 24), st.data())
def test_quadrature_exact_up_to_degree_n(n, data):
    c = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=n + 1, max_size=n + 1)))
    exact = npc.chebval(1.0, npc.chebint(c, lbnd=-1))
    approx = quadrature_weights(n) @ npc.chebval(cg_nodes(n), c)
    assert abs(approx - exact) <= 1e-12 * max(1.0, np.abs(c).sum())


# -- integration operators ------------------------------------------------

@given(st.integers(1, 20))
def test_start_rows_are_zero_and_T_start_alternates(n):
    b = ChebyshevBasis.build(n)
    assert np.all(b.beta_start == 0) and np.all(b.gamma_start == 0)
    assert np.array_equal(b.T_start.ravel(), (-1.0) ** np.arange(n + 1))


def test_constant_acceleration_examples():
    b = ChebyshevBasis.build(5)
    e0 = np.zeros(6)
    e0[0] = 1
    assert np.allclose(b.beta_mat @ e0, b.nodes + 1, atol=1e-14)
    assert np.allclose(b.gamma_mat @ e0, (b.nodes + 1) ** 2 / 2, atol=1e-14)


def test_beta_matches_adaptive_quadrature_n8():
    rng = np.random.default_rng(3)
    alpha = rng.normal(size=9)
    series = lambda s: sum(a * math.cos(j * math.acos(s)) for j, a in enumerate(alpha))
    b = ChebyshevBasis.build(8)
    for tau, val in zip(b.nodes, b.beta_mat @ alpha):
        ref, _ = quad(series, -1, tau, epsabs=1e-13, limit=200)
        assert abs(val - ref) < 1e-10


@settings(max_examples=40)
@given(st.integers(1, 12), st.floats(-1, 1))
def test_operators_match_quadrature_oracle(n, tau):
    beta, gamma = integration_rows(tau, n)
    for j in range(n + 1):
        Tj = lambda s: math.cos(j * math.acos(max(-1.0, min(1.0, s))))
        b_ref, _ = quad(Tj, -1, tau, epsabs=1e-13)
        g_ref, _ = quad(lambda s: (tau - s) * Tj(s), -1, tau, epsabs=1e-13)
        assert abs(beta[0, j] - b_ref) < 1e-10
        assert abs(gamma[0, j] - g_ref) < 1e-10


@settings(max_examples=40)
@given(st.integers(1, 15), st.data())
def test_round_trip_second_derivative(n, data):
    alpha = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=n + 1, max_size=n + 1)))
    b = ChebyshevBasis.build(n)
    # the state series gamma(tau) alpha, differentiated twice, gives back T alpha
    tau = np.cos(np.linspace(0, np.pi, 3 * n + 6))
    _, G = integration_rows(tau, n)
    coeffs = npc.chebfit(tau, G @ alpha, n + 2)
    second = npc.chebval(b.nodes, npc.chebder(coeffs, 2))
    assert np.abs(second - b.T_mat @ alpha).max() < 1e-10 * max(1.0, np.abs(alpha).sum())


def test_integration_operators_tuple():
    beta, gamma, bs, gs = integration_operators(4)
    b = ChebyshevBasis.build(4)
    assert np.array_equal(beta, b.beta_mat) and np.array_equal(gamma, b.gamma_mat)
    assert bs.shape == gs.shape == (1, 5)


def test_basis_is_read_only():
    b = ChebyshevBasis.build(3)
    with pytest.raises(ValueError):
        b.T_mat[0, 0] = 2.0


# -- time map ---------------------------------------------------------------

@pytest.mark.parametrize("t0,tf,t,tau", [(0, 10, 0, -1), (0, 10, 10, 1), (2, 4, 3, 0)])
def test_time_map_examples(t0, tf, t, tau):
    assert time_to_tau(TimeMap(t0, tf), t) == pytest.approx(tau, abs=1e-15)


@given(st.floats(-100, 100), st.floats(1e-3, 100), st.floats(0, 1))
def test_time_map_round_trip(t0, dt, frac):
    m = TimeMap(t0, t0 + dt)
    t = t0 + frac * dt
    assert tau_to_time(m, time_to_tau(m, t)) == pytest.approx(t, abs=1e-14 * max(1.0, abs(t0) + dt))


def test_time_map_errors():
    with pytest.raises(ValueError):
        TimeMap(1.0, 1.0)
    with pytest.raises(DomainError):
        TimeMap(0, 1).to_tau(1.5)
    with pytest.raises(DomainError):
        TimeMap(0, 1).to_time(-1.2)


# -- propagation ------------------------------------------------------------

def test_free_drift():
    r = icc_propagate(lambda t, x, xd: np.zeros_like(x), [1.0], [2.0], TimeMap(0, 1), 4)
    assert r.x_final[0] == pytest.approx(3.0, abs=1e-14)
    assert r.v_final[0] == pytest.approx(2.0, abs=1e-14)


def _oscillator_error(n):
    r = icc_propagate(lambda t, x, xd: -x, [1.0], [0.0], TimeMap(0, math.pi / 2), n)
    return max(abs(r.x_final[0]), abs(r.v_final[0] + 1.0))


def test_oscillator_quarter_period():
    assert _oscillator_error(12) < 1e-8


def test_oscillator_spectral_decay():
    assert _oscillator_error(12) < 1e-6 * _oscillator_error(4)


def test_stored_series_forcing_matches_gamma_oracle():
    rng = np.random.default_rng(5)
    c = rng.normal(size=6)
    tmap = TimeMap(0.0, 3.0)
    half = 1.5
    forcing = lambda t, x, xd: npc.chebval(tmap.to_tau(t), c)[:, None] * np.ones_like(x)
    x0, v0 = 0.4, -0.3
    r = icc_propagate(forcing, [x0], [v0], tmap, 8)
    # exact double integral of the series in tau, then back to time units
    x_ref = half**2 * npc.chebval(1.0, npc.chebint(c, m=2, lbnd=-1)) + x0 + v0 * tmap.dt
    v_ref = half * npc.chebval(1.0, npc.chebint(c, lbnd=-1)) + v0
    assert abs(r.x_final[0] - x_ref) < 1e-10
    assert abs(r.v_final[0] - v_ref) < 1e-10


def test_linear_system_iterations_bounded_independent_of_state():
    its = [icc_propagate(lambda t, x, xd: -0.5 * x, [x0], [1.0], TimeMap(0, 1), 8).iterations
           for x0 in (1e-3, 1.0, 1e3)]
    assert max(its) <= 40


def test_nonconvergence_carries_residual():
    with pytest.raises(ConvergenceError) as exc:
        icc_propagate(lambda t, x, xd: -400.0 * x, [1.0], [0.0], TimeMap(0, 1), 6, max_iter=20)
    assert exc.value.iterations == 20 and exc.value.residual > 0


def test_propagate_requires_order_three():
    with pytest.raises(ValueError):
        icc_propagate(lambda t, x, xd: x, [1.0], [0.0], TimeMap(0, 1), 2)
