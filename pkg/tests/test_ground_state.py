import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from gsflow.ground_state import (CROSS, TURN, RadialProfile, ShootingError, classify_shot,
                                 decay_report, emden_fowler_residual, shoot, tail_shape,
                                 unit_sphere_area)
from gsflow.reaction import Nonlinearity


def test_one_dimensional_closed_forms(xi1, xi1_cubic):
    r = np.linspace(0, 20, 4001)
    assert np.max(np.abs(xi1(r) - 1.5 / np.cosh(r / 2) ** 2)) <= 1e-6
    assert np.max(np.abs(xi1_cubic(r) - math.sqrt(2) / np.cosh(r))) <= 1e-6


def test_closed_form_with_scaled_coefficients():
    # f = a0 t - a t^3 in 1D: sqrt(2 a0 / a) sech(sqrt(a0) r)
    nl = Nonlinearity.power(3, a=2.0, a0=4.0)
    p = shoot(nl, 1)
    r = np.linspace(0, 10, 2001)
    assert np.max(np.abs(p(r) - 2.0 / np.cosh(2.0 * r))) <= 1e-6


def test_three_dimensional_profile_matches_collocation_solver(xi3):
    # independent route: collocation BVP with the singular term and a Yukawa tail condition
    R = 20.0
    x = np.linspace(0, R, 2001)
    sol = solve_bvp(lambda r, y: np.vstack([y[1], y[0] - y[0] ** 2]),
                    lambda a, b: np.array([a[1], b[1] + (1 + 1 / R) * b[0]]),
                    x, np.vstack([4.2 * np.exp(-x**2 / 4), -2.1 * x * np.exp(-x**2 / 4)]),
                    S=np.array([[0.0, 0.0], [0.0, -2.0]]), tol=1e-10, max_nodes=200_000)
    assert sol.status == 0
    assert xi3.center_value == pytest.approx(float(sol.sol(0.0)[0]), rel=1e-9)
    rr = np.linspace(0, 12, 25)
    assert np.allclose(xi3(rr), sol.sol(rr)[0], rtol=1e-6, atol=1e-10)


def test_profile_positive_and_decreasing(xi3):
    assert np.all(xi3.xi > 0)
    assert np.all(np.diff(xi3.xi) < 0)
    assert np.all(xi3.dxi[1:] < 0)


def test_ode_residual_small(xi3):
    assert np.max(np.abs(xi3.ode_residual())) < 1e-4


def test_decay_band_and_log_derivative(xi3):
    d = decay_report(xi3, 8.0, 16.0)
    assert d.band_width_ratio <= 1.5
    assert 0.8 <= d.ratio_min <= d.ratio_max <= 1.3


def test_tail_law_for_three_dimensions():
    # K_{1/2}(r) / sqrt(r) is proportional to exp(-r) / r
    r = np.linspace(2, 30, 50)
    T, dT = tail_shape(3, 1.0, r)
    ratio = T * r * np.exp(r)
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
    assert np.allclose(dT / T, -(1 + 1 / r), rtol=1e-10)


def test_evaluation_beyond_profile_grid_uses_tail(xi3):
    r = np.array([25.0, 40.0, 70.0, 200.0])
    v = xi3(r)
    c = xi3.tail_coef
    T, _ = tail_shape(3, 1.0, r)
    assert np.allclose(v, c * T, rtol=1e-10)
    assert xi3(0.0) == xi3.center_value


def test_emden_fowler_residual_small(xi3):
    assert emden_fowler_residual(xi3) < 1e-5


def test_shot_classification_brackets_the_ground_state(quad, xi3):
    x0 = xi3.shoot_value
    assert classify_shot(quad, 3, 1.01 * x0, 20.0, 1e-3)[0] == CROSS
    assert classify_shot(quad, 3, 0.99 * x0, 20.0, 1e-3)[0] == TURN


def test_energy_of_three_dimensional_ground_state(xi3):
    # Pohozaev for f = t - t^2 in 3D: J = (1/3) int |xi'|^2
    grad = unit_sphere_area(3) * np.trapezoid(xi3.dxi**2 * xi3.r**2, xi3.r)
    assert xi3.energy() == pytest.approx(grad / 3, rel=1e-6)


def test_unit_sphere_areas():
    assert unit_sphere_area(1) == 2.0
    assert unit_sphere_area(2) == pytest.approx(2 * math.pi)
    assert unit_sphere_area(3) == pytest.approx(4 * math.pi)


def test_csv_round_trip(tmp_path, xi2):
    path = tmp_path / "xi.csv"
    xi2.to_csv(path, {"note": "x"})
    back = RadialProfile.from_csv(path)
    assert np.array_equal(back.xi, xi2.xi)
    assert back.shoot_value == xi2.shoot_value
    assert back(3.3) == pytest.approx(xi2(3.3), rel=1e-12)


@pytest.mark.parametrize("kw", [{"r_max": 10.0}, {"h": 0.1}, {"tol": 0.0}])
def test_invalid_shooting_parameters(quad, kw):
    with pytest.raises(ValueError):
        shoot(quad, 3, **kw)


def test_supercritical_case_has_no_ground_state():
    with pytest.raises(ShootingError):
        shoot(Nonlinearity.power(7.0), 3, max_expansions=8)
