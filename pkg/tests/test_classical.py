import math

import numpy as np
import pytest

from dickescar.errors import DomainError
from dickescar.models import ModelParams
from dickescar.services.classical import (
    J_SYMPLECTIC, eom, energy_minimum, gradient, ground_energy, h_cl, hessian, integrate,
    integrate_tangent, jacobian, max_lyapunov, solve_flow, symplectic_defect
)

X = np.array([0.4, -0.7, 0.9, 0.5])


def test_ground_energy_superradiant(params):
    # gamma = 2 gamma_c: eps_0 = -(1/2)(1/4 + 4)
    assert ground_energy(params) == pytest.approx(-2.125)


def test_ground_energy_normal_phase():
    assert ground_energy(ModelParams(omega=1.0, omega0=1.3, gamma=0.2, j=5)) == -1.3


def test_energy_minimum_is_stationary(params):
    x = energy_minimum(params)
    assert h_cl(x, params) == pytest.approx(ground_energy(params), abs=1e-12)
    assert np.allclose(gradient(x.as_array(), params), 0.0, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(hessian(x, params)) > 0)


def test_energy_minimum_agrees_with_numerical_minimizer(params):
    from scipy.optimize import minimize

    res = minimize(lambda y: h_cl(y, params), x0=np.array([-1.0, 0.1, 1.0, 0.1]),
                   jac=lambda y: gradient(y, params), method='L-BFGS-B',
                   bounds=[(-5, 5), (-5, 5), (-1.4, 1.4), (-1.4, 1.4)], options={'gtol': 1e-12})
    assert res.fun == pytest.approx(ground_energy(params), abs=1e-9)


def test_h_cl_vectorized(params):
    points = np.stack([X, -X, 0.5 * X])
    values = h_cl(points, params)
    assert values.shape == (3,)
    assert values[0] == pytest.approx(h_cl(X, params))


def test_h_cl_rejects_points_outside_disk(params):
    with pytest.raises(DomainError):
        h_cl([0.0, 0.0, 2.0, 0.5], params)


def test_gradient_matches_finite_differences(params):
    step = 1e-6
    numeric = np.array([
        (h_cl(X + step * e, params) - h_cl(X - step * e, params)) / (2 * step) for e in np.eye(4)
    ])
    assert np.allclose(gradient(X, params), numeric, atol=1e-8)


def test_jacobian_matches_finite_differences(params):
    step = 1e-6
    numeric = np.column_stack([
        (eom(X + step * e, params) - eom(X - step * e, params)) / (2 * step) for e in np.eye(4)
    ])
    assert np.allclose(jacobian(X, params), numeric, atol=1e-7)


def test_eom_is_symplectic_gradient(params):
    assert np.allclose(eom(X, params), J_SYMPLECTIC @ gradient(X, params))


def test_energy_conserved(params):
    traj = integrate(X, 20.0, params, n_samples=200)
    assert traj.points.shape == (200, 4)
    assert traj.max_energy_drift < 1e-9
    assert traj.energy == pytest.approx(h_cl(X, params))


def test_zero_time_integration(params):
    traj = integrate(X, 0.0, params)
    assert np.array_equal(traj.points[0], X)
    tangent = integrate_tangent(X, 0.0, params)
    assert np.array_equal(tangent.matrix, np.eye(4))


def test_time_reversibility(params):
    forward = solve_flow(X, 5.0, params).y[:, -1]
    back = solve_flow(forward, -5.0, params).y[:, -1]
    assert np.allclose(back, X, atol=1e-8)


def test_tangent_map_is_symplectic(params):
    tangent = integrate_tangent(X, 10.0, params)
    assert symplectic_defect(tangent.matrix) < 1e-7


def test_tangent_map_matches_finite_differences(params):
    step = 1e-6
    t = 2.0
    numeric = np.column_stack([
        (solve_flow(X + step * e, t, params).y[:, -1] - solve_flow(X - step * e, t, params).y[:, -1])
        / (2 * step) for e in np.eye(4)
    ])
    assert np.allclose(integrate_tangent(X, t, params).matrix, numeric, atol=1e-5)


def test_uncoupled_flow_is_two_rotations(free_params):
    x0 = np.array([1.0, 0.0, 0.5, 0.0])
    t = 1.3
    end = solve_flow(x0, t, free_params).y[:, -1]
    w0 = free_params.omega0
    expected = [math.cos(t), -math.sin(t), 0.5 * math.cos(w0 * t), -0.5 * math.sin(w0 * t)]
    assert np.allclose(end, expected, atol=1e-10)


def test_lyapunov_vanishes_without_coupling(free_params):
    estimate = max_lyapunov([1.0, 0.0, 0.5, 0.0], 50.0, 1.0, free_params)
    assert abs(estimate.value) < 1e-6
    assert estimate.running.size == 50


def test_lyapunov_positive_in_chaotic_region(params):
    # eps = -0.5 at gamma = 2 gamma_c lies in the chaotic regime
    x0 = np.array([0.0, 1.0, 0.0, 0.0])
    assert h_cl(x0, params) == pytest.approx(-0.5)
    estimate = max_lyapunov(x0, 200.0, 1.0, params, seed=4)
    assert estimate.value > 0.02


def test_lyapunov_rejects_bad_intervals(params):
    with pytest.raises(DomainError):
        max_lyapunov(X, 1.0, 2.0, params)

