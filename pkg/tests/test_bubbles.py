import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad as scipy_quad

from gsflow.bubbles import (FitError, MBubble, WeightSystemError, best_match, deficit_report,
                            interaction_g, interaction_level, local_maxima, solve_weights,
                            tail_concavity_check, tail_remainder_fraction)
from gsflow.field import BoxGrid, RadialGrid, integrate, l2_norm, make_field, sample_bubble
from gsflow.reaction import Nonlinearity


@pytest.fixture(scope="module")
def box3():
    return BoxGrid(3, (22.0, 12.0, 12.0), 0.25)


@pytest.fixture(scope="module")
def box2():
    return BoxGrid(2, (16.0, 10.0), 0.1)


def test_single_bubble_recovered_in_the_plane(xi2, box2):
    c = np.array([1.3, -0.7])
    u = sample_bubble(xi2, [c], [1.0], box2)
    fit = best_match(u, xi2, 1, init_centers=[[1.0, -1.0]])
    assert np.linalg.norm(fit.bubble.centers[0] - c) < 1e-6
    assert fit.Gamma < 1e-6 * l2_norm(u.values, box2)
    assert fit.bubble.weights[0] == pytest.approx(1.0, abs=1e-8)


def test_weights_recovered_exactly(xi3, box3):
    truth = np.array([[-10.0, 0, 0], [10.0, 0, 0]])
    u = sample_bubble(xi3, truth, [1.2, 0.8], box3)
    fit = best_match(u, xi3, 2)
    order = np.argsort(fit.bubble.centers[:, 0])
    assert np.max(np.abs(fit.bubble.centers[order] - truth)) < box3.h
    assert np.allclose(fit.bubble.weights[order], [1.2, 0.8], atol=1e-8)
    assert fit.weights.diag_dominant


def test_unit_weight_diagonal_ratios_approach_one(xi3, box3):
    gaps = []
    for d in (3.0, 4.0, 5.0):
        u = sample_bubble(xi3, [[-d, 0, 0], [d, 0, 0]], None, box3)
        ws = solve_weights(u, [[-d, 0, 0], [d, 0, 0]], xi3)
        gaps.append(np.max(np.abs(ws.diagonal - 1)))
        assert np.allclose(ws.alpha, 1.0, atol=1e-8)
    assert gaps[0] > gaps[1] > gaps[2]


def test_diagonal_term_matches_closed_form(xi3):
    # Q(xi', xi) = -(n - 1) int xi' xi / r^2 for a single radial bubble
    g = RadialGrid(3, 20.0, 5e-3)
    u = sample_bubble(xi3, [[0.0]], None, g)
    ws = solve_weights(u, [[0.0]], xi3)
    r = xi3.r[1:]
    rhs = -2 * 4 * np.pi * np.trapezoid(xi3.dxi[1:] * xi3.xi[1:], r)
    assert ws.Q[0, 0] == pytest.approx(rhs, rel=1e-3)
    assert ws.Q[0, 0] > 0


def test_one_dimensional_diagonal_comes_from_the_kink(xi1):
    # xi'(|x|) has a kink at 0, so Q(xi', xi) = -2 f(xi(0)) xi(0) = 9/4 here
    g = BoxGrid(1, 30.0, 0.01)
    u = sample_bubble(xi1, [[-8.0], [8.0]], [1.1, 0.9], g)
    ws = solve_weights(u, [[-8.0], [8.0]], xi1)
    assert ws.Q[0, 0] == pytest.approx(2.25, rel=1e-4)
    assert np.allclose(ws.alpha, [1.1, 0.9], atol=1e-10)


def test_close_centres_rejected(xi3, box3):
    u = sample_bubble(xi3, [[0.0, 0, 0]], None, box3)
    with pytest.raises(WeightSystemError):
        solve_weights(u, [[-1.0, 0, 0], [1.0, 0, 0]], xi3)


def test_interaction_at_zero_is_squared_norm(xi3):
    g = RadialGrid(3, 20.0, 1e-3)
    u = sample_bubble(xi3, [[0.0]], None, g)
    assert interaction_g(xi3, 0.0) == pytest.approx(l2_norm(u.values, g) ** 2, rel=1e-6)


def test_interaction_matches_cylindrical_quadrature(xi3):
    x = 6.0
    vals = []
    for h in (0.04, 0.02):
        rho = np.arange(0, 25 + h / 2, h)
        z = np.arange(-25, 25 + x + h / 2, h)
        P, Z = np.meshgrid(rho, z, indexing="ij")
        f = xi3(np.hypot(P, Z)) * xi3(np.hypot(P, Z - x)) * 2 * np.pi * P
        vals.append(np.trapezoid(np.trapezoid(f, z, axis=1), rho))
    oracle = vals[1] + (vals[1] - vals[0]) / 3  # Richardson on the O(h^2) rule
    assert interaction_g(xi3, x) == pytest.approx(oracle, rel=1e-6)


def test_one_dimensional_interaction_matches_direct_integral(xi1):
    x = 10.0
    oracle, _ = scipy_quad(lambda y: xi1(abs(y)) * xi1(abs(y - x)), -40, 50, limit=400,
                           points=[0.0, x], epsabs=0, epsrel=1e-11)
    assert interaction_g(xi1, x) == pytest.approx(oracle, rel=1e-7)


def test_interaction_decreasing_and_comparable_to_profile(xi3):
    xs = np.linspace(10, 20, 11)
    gs = np.array([interaction_g(xi3, x) for x in xs])
    assert np.all(np.diff(gs) < 0)
    ratio = gs / xi3(xs)
    assert ratio.min() > 0 and ratio.max() / ratio.min() <= 10


def test_extrapolation_flag(xi3):
    _, flag = interaction_g(xi3, 30.0, return_flag=True)
    assert not flag
    val, flag = interaction_g(xi3, 60.0, return_flag=True)
    assert flag and 0 < val < interaction_g(xi3, 40.0)
    with pytest.raises(ValueError):
        interaction_g(xi3, -1.0)


def test_tail_remainder_fraction_decreasing(xi3):
    fr = [tail_remainder_fraction(xi3, 20.0, r) for r in (4.0, 6.0, 8.0)]
    assert 1 > fr[0] > fr[1] > fr[2] > 0


def test_interaction_level_on_grid_matches_pair_integral(xi3, box3):
    nu = interaction_level(xi3, box3, [[-5.0, 0, 0], [5.0, 0, 0]])
    assert nu == pytest.approx(interaction_g(xi3, 10.0), rel=1e-2)


def test_deficit_report_at_an_exact_bubble(xi3):
    g = RadialGrid(3, 25.0, 1e-2)
    u = sample_bubble(xi3, [[0.0]], None, g)
    fit = best_match(u, xi3, 1)
    rep = deficit_report(u, fit, xi3.nl, 1e-3)
    assert abs(rep.deficit) < 1e-4 * xi3.energy()
    assert rep.rho_L2 < 1e-10
    assert "qform" in rep.degenerate


def test_radial_grid_holds_one_bubble(xi3):
    g = RadialGrid(3, 25.0, 0.05)
    with pytest.raises(ValueError):
        best_match(sample_bubble(xi3, [[0.0]], None, g), xi3, 2)


def test_local_maxima_respect_separation(xi2, box2):
    u = sample_bubble(xi2, [[-6.0, 0], [6.0, 0]], [1.0, 0.9], box2)
    pts = local_maxima(u, 2, 2.0)
    assert np.allclose(sorted(pts[:, 0]), [-6.0, 6.0], atol=box2.h)
    with pytest.raises(FitError):
        local_maxima(u, 3, 2.0)


@given(st.lists(st.floats(0.0, 2.0), min_size=2, max_size=5))
@settings(max_examples=100)
def test_tail_concavity_check_property(xs):
    assert tail_concavity_check(Nonlinearity.power(2), xs)


def test_tail_concavity_check_rejects_negative_entries():
    with pytest.raises(ValueError):
        tail_concavity_check(Nonlinearity.power(2), [0.1, -0.2])


def test_mbubble_serialises(xi3):
    b = MBubble(np.array([[0.0, 0, 0]]), np.array([1.0]), xi3)
    assert b.is_simple and b.to_dict()["weights"] == [1.0]
