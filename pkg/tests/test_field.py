import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsflow.field import (BoxGrid, Field, RadialGrid, discrete_ground_state, energy, inner,
                          integrate, l2_norm, make_field, norms, sample_bubble, sample_radial)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_radial_quadrature_of_gaussian(n):
    g = RadialGrid(n, 12.0, 1e-2)
    assert integrate(np.exp(-g.r**2), g) == pytest.approx(math.pi ** (n / 2), rel=1e-4)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_box_quadrature_of_gaussian(n):
    g = BoxGrid(n, 6.0, 0.1)
    assert integrate(np.exp(-g.distance(np.zeros(n)) ** 2), g) == pytest.approx(
        math.pi ** (n / 2), rel=1e-6)


def test_box_laplacian_of_quadratic_is_exact():
    g = BoxGrid(2, 2.0, 0.25)
    X, Y = g.coords()
    lap = g.laplacian(X**2 + 3 * Y**2)
    assert np.allclose(lap[g.interior], 8.0)


def test_radial_laplacian_converges_on_gaussian():
    # Delta e^{-r^2} = (4 r^2 - 2 n) e^{-r^2}
    errs = []
    for h in (0.02, 0.01):
        g = RadialGrid(3, 8.0, h)
        lap = g.laplacian(np.exp(-g.r**2))
        exact = (4 * g.r**2 - 6) * np.exp(-g.r**2)
        errs.append(np.max(np.abs(lap - exact)[:-1]))
    assert errs[1] < errs[0] / 3


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_radial_stiffness_is_symmetric_positive(seed):
    g = RadialGrid(3, 5.0, 0.1)
    x = np.random.default_rng(seed).normal(size=g.shape)
    x[-1] = 0
    K = g.stiffness
    assert abs((K - K.T).max()) == 0
    assert x[:-1] @ K @ x[:-1] > 0
    assert g.area * x[:-1] @ K @ x[:-1] == pytest.approx(2 * g.gradient_energy(x), rel=1e-12)


def test_energy_of_sampled_ground_state_matches_profile_energy(xi3):
    g = RadialGrid(3, 20.0, 5e-3)
    u = make_field(g, sample_radial(xi3, g))
    assert energy(u, xi3.nl) == pytest.approx(xi3.energy(), rel=1e-4)


def test_box_and_radial_energies_agree(xi2):
    gb = BoxGrid(2, 14.0, 0.1)
    gr = RadialGrid(2, 14.0, 0.01)
    eb = energy(sample_bubble(xi2, [[0, 0]], None, gb), xi2.nl)
    er = energy(sample_bubble(xi2, [[0]], None, gr), xi2.nl)
    assert eb == pytest.approx(er, rel=2e-3)


def test_discrete_ground_state_is_a_discrete_zero(xi3):
    g = RadialGrid(3, 20.0, 2e-2)
    xh = discrete_ground_state(xi3, g)
    res = g.stiffness @ xh.values[:-1] + g.volumes[:-1] * xi3.nl.f(xh.values[:-1])
    assert np.max(np.abs(res / g.volumes[:-1])[1:]) < 1e-8
    gap = np.max(np.abs(xh.values - sample_radial(xi3, g)))
    assert gap < 1e-3


def test_norms_and_inner_product():
    g = BoxGrid(1, 5.0, 0.01)
    u = make_field(g, np.exp(-g.axes[0] ** 2))
    nm = norms(u)
    assert nm.L2 ** 2 == pytest.approx(math.sqrt(math.pi / 2), rel=1e-6)
    assert inner(u, u) == pytest.approx(nm.L2 ** 2)
    assert l2_norm(u.values, g) == pytest.approx(nm.L2)


def test_field_binary_round_trip(tmp_path, xi3):
    for g in (BoxGrid(3, (6.0, 5.0, 5.0), 0.5), RadialGrid(3, 20.0, 0.1)):
        u = sample_bubble(xi3, [[0] * (1 if g.radial else 3)], [0.7], g)
        path = tmp_path / "u.field"
        u.save(path)
        back = Field.load(path)
        assert type(back) is type(u)
        assert back.grid == g
        assert np.array_equal(back.values, u.values)


def test_fields_are_immutable_and_nonnegative():
    g = RadialGrid(1, 2.0, 0.5)
    u = make_field(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        u.values[0] = 2.0
    with pytest.raises(ValueError):
        make_field(g, -np.ones(g.shape))


def test_bubble_too_close_to_boundary_rejected(xi3):
    with pytest.raises(ValueError):
        sample_bubble(xi3, [[10.0, 0, 0]], None, BoxGrid(3, 12.0, 0.5))
