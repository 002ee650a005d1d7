import numpy as np
import pytest

from covnet.dynamics import GainSet, TeamSimulator, affine_placement, initial_state
from covnet.errors import SingularityError
from covnet.network import reference_configuration
from covnet.quadcopter import (GRAVITY, QuadcopterTeamSimulator, QuadParams, QuadState,
                               closed_loop_derivative, flat_outputs, linearizing_input,
                               quad_derivative, rk4, state_from_flat, thrust_direction,
                               thrust_hessian, thrust_jacobian)

from oracles import fd_fourth_derivative


def random_state(rng):
    x = np.zeros(14)
    x[0:3] = rng.uniform(-5, 5, 3)
    x[3:6] = rng.uniform(-2, 2, 3)
    x[6:8] = rng.uniform(-0.6, 0.6, 2)
    x[8] = rng.uniform(-np.pi, np.pi)
    x[9:12] = rng.uniform(-1, 1, 3)
    x[12] = rng.uniform(5, 15)
    x[13] = rng.uniform(-2, 2)
    return x


def contract_error(x, v, params=QuadParams(), h=1e-4):
    f = closed_loop_derivative(lambda flat, _x: v, params)

    def acc(t):
        y = x if t == 0 else rk4(f, x, t, 1)
        return flat_outputs(y, params)[0][2]

    fd = fd_fourth_derivative(acc, x, h)
    return np.linalg.norm(fd - v) / np.linalg.norm(v)


def test_hover_is_an_equilibrium():
    x = QuadState.hover([1.0, 2.0, 3.0], psi=0.4).to_vector()
    assert np.abs(quad_derivative(x, np.zeros(4))).max() <= 1e-12
    u = linearizing_input(x, np.zeros(3), 0.0)
    assert np.abs(u).max() <= 1e-12


def test_free_fall_without_thrust():
    x = QuadState.hover([0, 0, 0]).to_vector()
    x[12] = 0.0
    dx = quad_derivative(x, np.zeros(4))
    assert np.allclose(dx[3:6], [0, 0, -GRAVITY])
    with pytest.raises(SingularityError):
        linearizing_input(x, np.ones(3), 0.0)


def test_thrust_derivatives_match_finite_differences(rng):
    h = 1e-6
    for _ in range(20):
        ang = rng.uniform(-1, 1, 3)
        J = thrust_jacobian(*ang)
        H = thrust_hessian(*ang)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            dJ = (thrust_direction(*(ang + e)) - thrust_direction(*(ang - e))) / (2 * h)
            assert np.allclose(J[:, a], dJ, atol=1e-8)
            dH = (thrust_jacobian(*(ang + e)) - thrust_jacobian(*(ang - e))) / (2 * h)
            assert np.allclose(H[:, a, :], dH, atol=1e-8)
        assert np.linalg.norm(thrust_direction(*ang)) == pytest.approx(1.0)


def test_linearization_contract(rng):
    for _ in range(10):
        x = random_state(rng)
        v = rng.uniform(-3, 3, 3)
        assert contract_error(x, v) <= 1e-3


def test_flat_state_round_trip(rng):
    for _ in range(20):
        x = random_state(rng)
        flat, psi, psi_dot = flat_outputs(x)
        back = state_from_flat(flat, psi, psi_dot)
        assert np.allclose(back, x, atol=1e-10)


def test_yaw_follows_damped_oscillator():
    """Default yaw gains (2, 1) give psi(t) = (psi0 + (psi0' + psi0) t) exp(-t)."""
    x = QuadState.hover([0, 0, 0], psi=0.5).to_vector()
    x[11] = -0.2
    f = closed_loop_derivative(lambda flat, _x: np.zeros(3))
    t = 2.0
    y = rk4(f, x, 1e-3, 2000)
    expected = (0.5 + (-0.2 + 0.5) * t) * np.exp(-t)
    assert y[8] == pytest.approx(expected, abs=1e-9)
    assert np.abs(y[0:3]).max() <= 1e-9


def test_team_matches_integrator_model(net26, fan26, ellipse500):
    ref = reference_configuration(net26, fan26.leader_positions)
    x0 = initial_state(affine_placement(ref, 0.95, 0.05, (0.5, 0.0, 0.0)), 26)
    gains = GainSet.uniform(26)
    a = TeamSimulator(net26, fan26.leader_positions, ellipse500, gains, x0)
    b = QuadcopterTeamSimulator(net26, fan26.leader_positions, ellipse500, gains, x0,
                                params=QuadParams(1.2))
    a.advance(500)
    b.advance(500)
    assert np.abs(a.state[:, 0] - b.state[:, 0]).max() <= 1e-8
    assert np.allclose(a.weights, b.weights, atol=1e-8)


def test_acceleration_hand_evaluation():
    from math import cos, sin
    phi, theta, psi = 0.1, -0.05, 0.2
    params = QuadParams(m=1.5)
    x = QuadState.hover([0, 0, 0], params).to_vector()
    x[6:9] = phi, theta, psi
    x[12] = 1.2 * params.m * GRAVITY
    want = 1.2 * GRAVITY * np.array([
        sin(phi) * sin(psi) + cos(phi) * cos(psi) * sin(theta),
        cos(phi) * sin(psi) * sin(theta) - sin(phi) * cos(psi),
        cos(phi) * cos(theta)]) - [0, 0, GRAVITY]
    assert np.allclose(quad_derivative(x, np.zeros(4), params)[3:6], want, atol=1e-12)


def test_yaw_control_values():
    from covnet.quadcopter import yaw_control
    assert yaw_control(0.2, 0.0, k6=1.0) == pytest.approx(-0.2)
    assert yaw_control(0.0, 0.0) == 0.0


def test_vertical_snap_from_hover():
    x = QuadState.hover([0, 0, 1.0]).to_vector()
    v = np.array([0.0, 0.0, 0.7])
    u = linearizing_input(x, v, 0.0)
    assert np.allclose(u, [0.7, 0, 0, 0], atol=1e-12)
    assert contract_error(x, v) <= 1e-3
