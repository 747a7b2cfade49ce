import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsflow.field import RadialGrid, BoxGrid, discrete_ground_state, make_field, sample_radial
from gsflow.flow import (Event, FlowState, Stepper, dissipation_residual, drift,
                         exponential_rate_fit, run)
from gsflow.reaction import Nonlinearity


@pytest.fixture(scope="module")
def grid():
    return RadialGrid(3, 30.0, 2e-2)


@pytest.fixture(scope="module")
def xi_h(grid, xi3):
    return make_field(grid, sample_radial(xi3, grid))


def test_time_step_cap(grid, quad):
    with pytest.raises(ValueError):
        Stepper(grid, quad, 0.2)
    with pytest.raises(ValueError):
        Stepper(grid, Nonlinearity.power(2, a0=4.0), 0.05)


def test_small_data_vanish(grid, xi_h, quad):
    s = run(make_field(grid, 0.01 * xi_h.values), quad, 40.0, 1e-2)
    assert s.event == Event.VANISHED
    assert s.sup[-1] <= 1e-8 and s.J[-1] <= 1e-10


def test_large_data_blow_up(grid, xi_h, quad):
    s = run(make_field(grid, 3.0 * xi_h.values), quad, 5.0, 1e-2)
    assert s.event == Event.BLOWN_UP
    assert s.event_time < 1.0


def test_discrete_ground_state_is_stationary(grid, xi3, quad):
    xh = discrete_ground_state(xi3, grid)
    s = run(xh, quad, 3.0, 1e-2, stop_on_converged=False)
    assert np.max(np.abs(s.u.values - xh.values)) < 1e-6


@given(st.floats(0.2, 0.95), st.floats(1.0, 4.0))
@settings(max_examples=8, deadline=None)
def test_energy_nonincreasing(scale, width):
    nl = Nonlinearity.power(2)
    g = RadialGrid(3, 20.0, 0.05)
    u0 = make_field(g, scale * 4.0 * np.exp(-g.r**2 / (2 * width**2)) * (g.r < 20))
    s = run(u0, nl, 2.0, 1e-2, stop_on_converged=False, keep_plateau=False)
    assert np.all(np.diff(s.J) <= 1e-12 * max(1.0, abs(s.J[0])))


def test_dissipation_identity_closes_with_scheme_dissipation(xi3, quad):
    g = RadialGrid(3, 30.0, 1e-2)
    u0 = make_field(g, 0.9 * sample_radial(xi3, g))
    s = run(u0, quad, 3.0, 1e-3, stop_on_converged=False, keep_plateau=False)
    q = dissipation_residual(s, (1.0, 3.0))
    closed = dissipation_residual(s, (1.0, 3.0), rule="closed")
    mixed = dissipation_residual(s, (1.0, 3.0), rule="mixed")
    assert closed < 1e-6 and mixed < 1e-6
    assert 1e-4 < q < 1e-2  # first order in dt
    with pytest.raises(ValueError):
        dissipation_residual(s, (3.0, 1.0))
    with pytest.raises(ValueError):
        dissipation_residual(s, (1.0, 3.0), rule="other")


def test_drift_vanishes_at_discrete_ground_state(grid, xi3, quad):
    xh = discrete_ground_state(xi3, grid)
    assert np.max(np.abs(drift(xh.values, grid, quad))) < 1e-7


def test_cartesian_stepper_matches_radial_decay(xi3, quad):
    # linear regime: sup of a small bump decays identically on both grids
    gb = BoxGrid(3, 8.0, 0.25)
    gr = RadialGrid(3, 8.0 * math.sqrt(3), 0.05)
    f = lambda r: 0.01 * np.exp(-r**2)
    sb = run(make_field(gb, f(gb.distance(np.zeros(3)))), quad, 0.5, 1e-2, keep_plateau=False)
    sr = run(make_field(gr, f(gr.r)), quad, 0.5, 1e-2, keep_plateau=False)
    assert sb.sup[-1] == pytest.approx(sr.sup[-1], rel=2e-2)


def test_converged_event_at_discrete_ground_state(grid, xi3, quad):
    s = run(discrete_ground_state(xi3, grid), quad, 5.0, 1e-2)
    assert s.event == Event.CONVERGED
    assert s.event_time == pytest.approx(0.5, abs=0.02)


def test_decaying_run_not_labelled_converged():
    # ||u_t|| falls below any absolute tolerance long before u vanishes
    nl = Nonlinearity.power(2)
    g = RadialGrid(3, 15.0, 0.05)
    s = run(make_field(g, 0.05 * np.exp(-g.r**2)), nl, 30.0, 1e-2, conv_tol=1e-3)
    assert s.event == Event.VANISHED


def test_exponential_rate_fit_recovers_exact_rate():
    t = np.linspace(0, 5, 50)
    fit = exponential_rate_fit(t, 3.0 * np.exp(-1.7 * t))
    assert fit.slope == pytest.approx(-1.7, rel=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), rel=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        exponential_rate_fit(t, -np.ones_like(t))
    with pytest.raises(ValueError):
        exponential_rate_fit([], [])


def test_log_and_checkpoint(tmp_path, grid, xi_h, quad):
    s = run(make_field(grid, 0.5 * xi_h.values), quad, 0.5, 1e-2, sample_every=10)
    lines = s.log_csv().strip().splitlines()
    assert lines[0] == "t,J,dissipation,sup_u,L2_u,event"
    assert len(lines) == len(s.times) + 1
    s.save_checkpoint(tmp_path / "ck")
    back = FlowState.load_checkpoint(tmp_path / "ck")
    assert back.t == s.t and np.array_equal(back.u.values, s.u.values)


def test_negative_initial_data_rejected(grid, quad):
    bad = make_field(grid, -np.ones(grid.shape), check=False)
    with pytest.raises(ValueError):
        run(bad, quad, 1.0, 1e-2)
