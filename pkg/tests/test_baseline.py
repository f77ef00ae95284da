import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chebmpc.baseline import (
    DiscreteMpcController, DiscreteMpcSpec, condense, double_integrator, solve_discrete_step,
)
from chebmpc.qp import QpProblem, solve_qp


def _simulate(Ad, Bd, x0, u_seq):
    out, x = [], x0
    for u in u_seq:
        x = Ad @ x + Bd @ u
        out.append(x)
    return np.concatenate(out)


def test_zoh_matches_matrix_exponential():
    from scipy.linalg import expm

    Ts = 0.7
    Ad, Bd = double_integrator(2, Ts)
    Ac = np.zeros((4, 4))
    Ac[:2, 2:] = np.eye(2)
    Bc = np.vstack([np.zeros((2, 2)), np.eye(2)])
    M = expm(np.block([[Ac, Bc], [np.zeros((2, 6))]]) * Ts)
    assert np.allclose(Ad, M[:4, :4], atol=1e-14) and np.allclose(Bd, M[:4, 4:], atol=1e-14)


def test_p1_gives_plant_matrices():
    spec = DiscreteMpcSpec.double_integrator(2, 0.5, p=1)
    S_x, S_u = condense(spec)
    assert np.array_equal(S_x, spec.Ad) and np.array_equal(S_u, spec.Bd)


def test_frozen_plant():
    spec = DiscreteMpcSpec(np.eye(3), np.zeros((3, 2)), p=4, W_u=1.0, W_y=1.0, y_r=None)
    S_x, S_u = condense(spec)
    assert np.array_equal(S_x, np.tile(np.eye(3), (4, 1))) and not S_u.any()


def test_recursion_oracle_double_integrator_p3():
    spec = DiscreteMpcSpec.double_integrator(1, 0.5, p=3)
    S_x, S_u = condense(spec)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x0, u = rng.normal(size=2), rng.normal(size=(3, 1))
        assert np.abs(S_x @ x0 + S_u @ u.ravel() - _simulate(spec.Ad, spec.Bd, x0, u)).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_condensation_equivalence(q, m, p, seed):
    rng = np.random.default_rng(seed)
    Ad = rng.normal(scale=0.5, size=(q, q))
    Bd = rng.normal(size=(q, m))
    spec = DiscreteMpcSpec(Ad, Bd, p, W_u=1.0, W_y=1.0, y_r=None)
    S_x, S_u = condense(spec)
    assert S_x.shape == (p * q, q) and S_u.shape == (p * q, p * m)
    # lower block triangular
    for i in range(p):
        assert not S_u[i * q:(i + 1) * q, (i + 1) * m:].any()
    x0, u = rng.normal(size=q), rng.normal(size=(p, m))
    ref = _simulate(Ad, Bd, x0, u)
    assert np.abs(S_x @ x0 + S_u @ u.ravel() - ref).max() < 1e-10 * max(1.0, np.abs(ref).max())


@pytest.mark.parametrize("p", [5, 10, 15, 20])
def test_dimensions_grow_with_horizon(p):
    spec = DiscreteMpcSpec.double_integrator(3, 0.5, p=p)
    prob = spec.build_qp(np.zeros(6))
    assert spec.q == 6 and spec.m == 3
    assert prob.dim == p * 3 == spec.dim
    assert prob.n_in == 2 * p * 6 == spec.n_in
    assert prob.n_eq == 0


def test_optional_input_bounds_add_rows():
    spec = DiscreteMpcSpec.double_integrator(1, 0.5, p=5, u_min=-0.1, u_max=0.1)
    assert spec.build_qp(np.zeros(2)).n_in == 2 * 5 * 2 + 2 * 5 * 1
    u = solve_discrete_step(spec, np.array([10.0, 0.0]))
    assert u[0] == pytest.approx(-0.1, abs=1e-10)


def test_at_reference_gives_zero_input():
    spec = DiscreteMpcSpec.double_integrator(3, 0.5, p=5, target=[1.0, 2.0, 3.0, 0, 0, 0])
    u = solve_discrete_step(spec, np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0]))
    assert np.abs(u).max() < 1e-12


def test_hessian_and_gradient_match_brute_force_cost():
    rng = np.random.default_rng(2)
    spec = DiscreteMpcSpec.double_integrator(1, 0.5, p=4, W_u=0.3, W_pos=2.0, W_vel=0.5, target=[0.2, 0.0])
    x0 = rng.normal(size=2)
    prob = spec.build_qp(x0)
    S_x, S_u = spec.condensed

    def cost(u):
        y = S_x @ x0 + S_u @ u
        e = y - np.tile(spec.y_r, spec.p)
        return u @ np.kron(np.eye(4), spec.W_u) @ u + e @ np.kron(np.eye(4), spec.W_y) @ e

    u = rng.normal(size=4)
    model = 0.5 * u @ prob.H @ u + prob.f @ u + cost(np.zeros(4))
    assert model == pytest.approx(cost(u), rel=1e-12)


def test_minimum_energy_terminal_controllability():
    # W_u = 0 with weight only on the terminal output: the pair is controllable
    # in 2 steps, so the predicted terminal output reaches the reference.
    for p in (2, 3, 5, 8):
        Ad, Bd = double_integrator(1, 0.5)
        W_y = np.zeros((2, 2))
        spec = DiscreteMpcSpec(Ad, Bd, p, W_u=0.0, W_y=W_y, y_r=[1.0, 0.0])
        S_x, S_u = spec.condensed
        x0 = np.array([-0.4, 0.3])
        Tx, Tu = S_x[-2:], S_u[-2:]
        H = 2.0 * Tu.T @ Tu + 1e-12 * np.eye(p)
        f = 2.0 * Tu.T @ (Tx @ x0 - spec.y_r)
        u = solve_qp(QpProblem(H, f)).x
        assert np.abs(Tx @ x0 + Tu @ u - spec.y_r).max() < 1e-8


def test_controller_warm_start_and_closed_loop_settles():
    spec = DiscreteMpcSpec.double_integrator(1, 0.5, p=5, W_u=1.0, W_pos=1.0, W_vel=0.0)
    ctrl = DiscreteMpcController(spec)
    x = np.array([1.0, 0.0])
    for _ in range(60):
        u = ctrl.solve(x).u_now
        x = spec.Ad @ x + spec.Bd @ u
    assert abs(x[0]) < 1e-3 and abs(x[1]) < 1e-3


def test_validation():
    with pytest.raises(ValueError):
        DiscreteMpcSpec(np.eye(2), np.ones((3, 1)), 5, 1.0, 1.0, None)
    with pytest.raises(ValueError):
        DiscreteMpcSpec.double_integrator(1, 0.5, p=0)
    with pytest.raises(ValueError):
        double_integrator(1, 0.0)
