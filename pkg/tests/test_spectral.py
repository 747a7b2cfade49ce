import numpy as np
import pytest

from gsflow.field import BoxGrid, RadialGrid
from gsflow.spectral import (CartesianQ, RadialQ, assemble_Q, constrained_coercivity,
                             harmonic_multiplicity, kernel_tolerance, spectrum)


@pytest.fixture(scope="module")
def q3(xi3, quad):
    return RadialQ(xi3, quad, RadialGrid(3, 30.0, 1e-3))


@pytest.mark.parametrize("n, expected", [(1, [1, 1, 0]), (2, [1, 2, 2]), (3, [1, 3, 5]),
                                         (4, [1, 4, 9])])
def test_harmonic_multiplicities(n, expected):
    assert [harmonic_multiplicity(n, l) for l in range(3)] == expected


def test_poschl_teller_spectrum(xi1_cubic, cubic):
    # -d^2 + 1 - 6 sech^2 has eigenvalues -3 (even) and 0 (odd)
    op = RadialQ(xi1_cubic, cubic, RadialGrid(1, 30.0, 1e-3))
    op.potential = 1.0 - 6.0 / np.cosh(op.grid.r) ** 2
    even, _ = op.eigen(0, 2)
    odd, _ = op.eigen(1, 1)
    assert even[0] == pytest.approx(-3.0, abs=1e-3)
    assert even[1] > 0
    assert abs(odd[0]) < 1e-3


def test_three_dimensional_structure(q3):
    rep = spectrum(q3, k=6)
    assert rep.n_negative == 1
    assert rep.kernel_dim == 3
    assert rep.eigenvalues[0] < -2
    assert rep.q_xi_xi_prime < 0 < rep.q_xi_prime_xi
    assert rep.identity_error <= 1e-4
    assert rep.kernel_tol == pytest.approx(kernel_tolerance(q3))
    assert rep.translation_residual < 1e-2


def test_first_sector_ground_mode_is_the_radial_derivative(q3):
    _, v = q3.eigen(1, 1)
    dxi = q3.dxi[1:-1]
    cos = abs(np.dot(q3._V[1:] * v[:, 0], dxi)) / np.sqrt(
        np.dot(q3._V[1:] * v[:, 0], v[:, 0]) * np.dot(q3._V[1:] * dxi, dxi))
    assert cos > 1 - 1e-6


def test_apply_is_consistent_with_pair(q3):
    rng = np.random.default_rng(0)
    u = rng.normal(size=q3.grid.shape)
    w = rng.normal(size=q3.grid.shape)
    u[-1] = w[-1] = 0
    assert q3.mass(q3.apply(u), w) == pytest.approx(q3.pair(u, w), rel=1e-10)
    assert q3.pair(u, w) == pytest.approx(q3.pair(w, u), rel=1e-12)


def test_constraints_make_the_form_coercive(xi3, quad):
    op = RadialQ(xi3, quad, RadialGrid(3, 20.0, 2e-2))
    c = constrained_coercivity(op, trials=100)
    assert c.constant > 0
    assert c.trials_used + c.trials_excluded == 100
    assert c.trial_minimum >= c.constant
    free = constrained_coercivity(op, trials=100, enforce_xi_prime=False)
    assert free.constant < 0
    with pytest.raises(ValueError):
        constrained_coercivity(op, trials=10)


def test_planar_cartesian_operator(xi2, quad):
    op = assemble_Q(xi2, quad, BoxGrid(2, 12.0, 0.1))
    assert isinstance(op, CartesianQ)
    rep = spectrum(op, k=5)
    assert rep.n_negative == 1 and rep.kernel_dim == 2
    radial = RadialQ(xi2, quad, RadialGrid(2, 12.0, 1e-2)).eigen(0, 1)[0][0]
    assert rep.eigenvalues[0] == pytest.approx(radial, rel=5e-3)
    c = constrained_coercivity(op, trials=100)
    assert c.constant > 0


def test_spectrum_needs_enough_eigenvalues(q3):
    with pytest.raises(ValueError):
        spectrum(q3, k=3)
