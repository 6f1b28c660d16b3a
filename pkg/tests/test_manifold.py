import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigoletto.errors import ConvergenceFailure, InvalidInput
from rigoletto.manifold import (
    Metric,
    airm_gradient,
    dist_airm,
    dist_logeuclid,
    distance,
    karcher_mean,
    mean_airm,
    mean_logeuclid,
    tangent_dim,
    tangent_map,
    tangent_unmap,
    transport_to_mean,
)
from rigoletto.spd import invsqrtm, matrix_exp, matrix_power, sqrtm

from conftest import random_orthogonal, random_spd

E = np.e


def test_metric_parse():
    assert Metric.parse("riemann") is Metric.AIRM
    assert Metric.parse("LE") is Metric.LOG_EUCLIDEAN
    assert Metric.parse(Metric.AIRM) is Metric.AIRM
    with pytest.raises(InvalidInput):
        Metric.parse("euclid")


def test_distance_examples():
    assert dist_airm(np.eye(2), E * np.eye(2)) == pytest.approx(np.sqrt(2), abs=1e-12)
    assert dist_logeuclid(np.eye(2), np.diag([E, E ** 2])) == pytest.approx(np.sqrt(5), abs=1e-12)
    A = np.diag([2.0, 3.0])
    assert dist_airm(A, A) == pytest.approx(0.0, abs=1e-14)
    assert dist_logeuclid(A, A) == 0.0
    assert distance(np.eye(2), E * np.eye(2), "airm") == distance(np.eye(2), E * np.eye(2), "le")


def test_distance_to_stack(rng):
    A = random_spd(rng, 4)
    B = random_spd(rng, 4, 5)
    d = dist_airm(A, B)
    assert d.shape == (5,)
    np.testing.assert_allclose(d, [dist_airm(A, b) for b in B], rtol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(InvalidInput):
        dist_airm(np.eye(2), np.eye(3))
    with pytest.raises(InvalidInput):
        dist_logeuclid(np.eye(2), np.eye(3))
    with pytest.raises(InvalidInput):
        tangent_map(np.eye(2), np.eye(3))


def test_airm_distance_against_generalized_eigenvalues(rng):
    import scipy.linalg
    A, B = random_spd(rng, 5, 2)
    w = scipy.linalg.eigh(B, A, eigvals_only=True)
    assert dist_airm(A, B) == pytest.approx(np.sqrt(np.sum(np.log(w) ** 2)), rel=1e-10)


def test_swelling():
    A, B = np.diag([4.0, 0.25]), np.diag([0.25, 4.0])
    assert np.linalg.det((A + B) / 2) > max(np.linalg.det(A), np.linalg.det(B))
    assert abs(np.linalg.det(mean_logeuclid([A, B])) - 1.0) <= 1e-12


def test_mean_logeuclid_examples(rng):
    A = random_spd(rng, 3)
    np.testing.assert_allclose(mean_logeuclid([A]), A, rtol=1e-12)
    np.testing.assert_allclose(mean_logeuclid([np.eye(2), E ** 2 * np.eye(2)]), E * np.eye(2), rtol=1e-14)
    with pytest.raises(InvalidInput):
        mean_logeuclid(np.empty((0, 2, 2)))


def test_mean_airm_examples(rng):
    A = random_spd(rng, 4)
    np.testing.assert_array_equal(mean_airm([A]), A)
    np.testing.assert_allclose(karcher_mean([A, A]), A, atol=1e-10)
    np.testing.assert_allclose(karcher_mean([A], "logeuclid"), A, rtol=1e-12)
    with pytest.raises(InvalidInput):
        mean_airm(np.empty((0, 2, 2)))


def test_mean_airm_commuting_matches_logeuclid(rng):
    X = np.stack([np.diag(np.exp(rng.uniform(-2, 2, 4))) for _ in range(7)])
    np.testing.assert_allclose(mean_airm(X), mean_logeuclid(X), atol=1e-8)


def test_mean_airm_two_point_midpoint(rng):
    A, B = random_spd(rng, 5, 2, cond=100)
    M = mean_airm([A, B])
    geodesic_mid = sqrtm(A) @ matrix_power(invsqrtm(A) @ B @ invsqrtm(A), 0.5) @ sqrtm(A)
    np.testing.assert_allclose(M, geodesic_mid, atol=1e-6)
    assert dist_airm(A, M) == pytest.approx(dist_airm(A, B) / 2, abs=1e-6)


def test_mean_airm_gradient_postcondition(rng):
    X = random_spd(rng, 6, 12, cond=1e3)
    M = mean_airm(X, tol=1e-10)
    assert np.linalg.norm(airm_gradient(M, X)) <= 1e-10


def test_mean_airm_nonconvergence_carries_iterate(rng):
    X = random_spd(rng, 5, 6, cond=1e3)
    with pytest.raises(ConvergenceFailure) as info:
        mean_airm(X, tol=1e-14, max_iter=1)
    assert info.value.iterate.shape == (5, 5)
    assert info.value.residual > 1e-14


def test_transport_examples(rng):
    X = random_spd(rng, 4, 6)
    M_train, M_test = random_spd(rng, 4, 2)
    np.testing.assert_allclose(transport_to_mean(X, M_train, M_train), X, atol=1e-10)
    np.testing.assert_allclose(transport_to_mean(M_test[None], M_train, M_test)[0], M_train, atol=1e-10)


def test_transport_moves_airm_mean(rng):
    X = random_spd(rng, 4, 10)
    target = random_spd(rng, 4)
    moved = transport_to_mean(X, target, mean_airm(X))
    np.testing.assert_allclose(mean_airm(moved), target, atol=1e-6)


def test_tangent_examples(rng):
    M = random_spd(rng, 4)
    X = random_spd(rng, 4)
    assert tangent_dim(4) == 10
    t = tangent_map(X, M)
    assert t.shape == (10,)
    np.testing.assert_allclose(tangent_map(M, M), np.zeros(10), atol=1e-12)
    assert np.linalg.norm(t) == pytest.approx(dist_airm(X, M), abs=1e-10)
    np.testing.assert_allclose(tangent_unmap(np.zeros(10), M), M, atol=1e-12)
    np.testing.assert_allclose(tangent_unmap(t, M), X, atol=1e-8)
    s = rng.standard_normal(10)
    np.testing.assert_allclose(tangent_map(tangent_unmap(s, M), M), s, atol=1e-8)
    with pytest.raises(InvalidInput):
        tangent_unmap(np.zeros(9), M)


def test_tangent_coordinates_weight_off_diagonal():
    # a unit off-diagonal entry of the logarithm maps to one coordinate sqrt(2)
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    t = tangent_map(matrix_exp(S), np.eye(2))
    assert sorted(np.round(np.abs(t), 12)) == [0.0, 0.0, round(np.sqrt(2), 12)]


seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(1, 8)


@settings(max_examples=100, deadline=None)
@given(dims, seeds)
def test_airm_invariances(n, seed):
    rng = np.random.default_rng(seed)
    A, B = random_spd(rng, n, 2, cond=1e3)
    W = rng.standard_normal((n, n)) + n * np.eye(n)
    d = dist_airm(A, B)
    assert dist_airm(W @ A @ W.T, W @ B @ W.T) == pytest.approx(d, abs=1e-8)
    assert dist_airm(np.linalg.inv(A), np.linalg.inv(B)) == pytest.approx(d, abs=1e-8)
    assert dist_airm(B, A) == pytest.approx(d, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(dims, seeds)
def test_logeuclid_orthogonal_invariance(n, seed):
    rng = np.random.default_rng(seed)
    A, B = random_spd(rng, n, 2, cond=1e3)
    Q = random_orthogonal(rng, n)
    assert dist_logeuclid(Q @ A @ Q.T, Q @ B @ Q.T) == pytest.approx(dist_logeuclid(A, B), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(dims, seeds, st.sampled_from(["airm", "logeuclid"]))
def test_triangle_inequality(n, seed, metric):
    A, B, C = random_spd(np.random.default_rng(seed), n, 3, cond=1e3)
    dab, dbc, dac = (distance(P, Q, metric) for P, Q in ((A, B), (B, C), (A, C)))
    assert min(dab, dbc, dac) >= 0
    assert dac <= dab + dbc + 1e-9


@settings(max_examples=60, deadline=None)
@given(dims, seeds)
def test_tangent_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    X, M = random_spd(rng, n, 2, cond=1e3)
    np.testing.assert_allclose(tangent_unmap(tangent_map(X, M), M), X, atol=1e-8 * np.linalg.norm(X))
