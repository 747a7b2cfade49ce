import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gsflow.geometry import (DuplicatePoints, brute_force_direction, cosines, is_hull_vertex,
                             min_separation, neighborhood_cert, neighborhood_cert_many,
                             sample_ball, separate, verify)


@st.composite
def point_sets(draw, max_m=6, max_n=4):
    m = draw(st.integers(2, max_m))
    n = draw(st.integers(1, max_n))
    P = draw(arrays(float, (m, n), elements=st.floats(-10, 10, allow_nan=False)))
    assume(min_separation(P) > 1e-3)
    return P


@given(point_sets())
@settings(max_examples=300, deadline=None)
def test_certificate_verifies(P):
    cert = separate(P)
    assert verify(cert)
    assert 1.0 - 1e-12 <= cert.ratio <= cert.D * (1 + 1e-12)
    assert cert.D <= cert.apriori
    assert abs(np.linalg.norm(cert.e) - 1) < 1e-12


@given(point_sets(), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_neighbourhood_certificate(P, seed):
    cert = separate(P)
    Z = sample_ball(cert.y, cert.Lprime, 200, np.random.default_rng(seed))
    assert np.all(neighborhood_cert_many(cert, Z))
    assert neighborhood_cert(cert, Z[0])


@given(point_sets(max_m=5, max_n=3))
@settings(max_examples=50, deadline=None)
def test_sampled_oracle_within_a_priori_factor(P):
    cert = separate(P)
    o = brute_force_direction(P, 2000, seed=0)
    assert cert.ratio <= cert.apriori * o.ratio * (1 + 1e-12)


@given(point_sets(max_n=2))
@settings(max_examples=100, deadline=None)
def test_selected_point_is_extreme_in_the_plane(P):
    assume(P.shape[1] == 2 and len(P) >= 3)
    assert is_hull_vertex(P, separate(P).y_index)


def test_two_points():
    cert = separate([[0.0, 0.0], [3.0, 4.0]])
    assert cert.D == 1.0 and cert.ratio == pytest.approx(1.0)
    assert cert.L == 5.0 and cert.Lprime == 2.5
    assert cert.D2 == 3.0


def test_collinear_points_pick_an_end():
    P = np.array([[0.0], [1.0], [2.5], [4.0]])
    cert = separate(P)
    assert cert.y_index in (0, 3)
    assert np.all(cosines(P, cert.y_index, cert.e) == pytest.approx(1.0))


def test_square_with_interior_point():
    P = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.2]], float)
    cert = separate(P)
    assert cert.y_index != 4
    assert verify(cert)


def test_duplicates_and_bad_input_rejected():
    with pytest.raises(DuplicatePoints):
        separate([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        separate([[0.0, 0.0]])
    with pytest.raises(ValueError):
        separate([[0.0, 0.0], [1.0, 1.0]], n=3)


def test_serialisation():
    cert = separate([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    d = cert.to_dict()
    assert len(d["ratios"]) == 2 and d["y"] == cert.y.tolist()
    assert '"D"' in cert.to_json()
