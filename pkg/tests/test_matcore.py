import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hrlatent.errors import (
    InvalidDimensionError,
    InvalidPrecisionError,
    InvalidVariogramError,
    SingularLatentBlockError,
)
from hrlatent.matcore import (
    check_precision,
    complement_basis,
    gamma_from_theta,
    is_valid_variogram,
    latent_effect,
    marginal_precision,
    pinv_sym,
    projection_matrix,
    sigma_from_theta,
    theta_from_gamma,
)
from hrlatent.simulate import SyntheticModelSpec, build_synthetic_model

from conftest import random_precision, random_variogram


def eig_pinv(A):
    """Independent pseudoinverse: full eigendecomposition, explicit cutoff."""
    w, V = np.linalg.eigh(A)
    inv = np.array([1.0 / x if abs(x) > 1e-9 * np.abs(w).max() else 0.0 for x in w])
    return (V * inv) @ V.T


def test_projection_p2():
    assert np.allclose(projection_matrix(2), [[0.5, -0.5], [-0.5, 0.5]], atol=0, rtol=0)


def test_projection_p3():
    assert np.allclose(projection_matrix(3), np.eye(3) - np.ones((3, 3)) / 3)


@given(st.integers(2, 40))
def test_projection_idempotent(p):
    P = projection_matrix(p)
    assert np.max(np.abs(P @ np.ones(p))) < 1e-14
    assert np.allclose(P @ P, P, atol=1e-14)
    assert np.array_equal(P, P.T)


def test_projection_rejects_small():
    with pytest.raises(InvalidDimensionError):
        projection_matrix(1)


@given(st.integers(2, 30))
def test_basis_orthonormal(p):
    U = complement_basis(p)
    assert U.shape == (p, p - 1)
    assert np.allclose(U.T @ U, np.eye(p - 1), atol=1e-13)
    assert np.allclose(U @ U.T, projection_matrix(p), atol=1e-13)


def test_basis_deterministic():
    assert np.array_equal(complement_basis(7), complement_basis(7))


def test_theta_2x2():
    G = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert np.allclose(theta_from_gamma(G), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-14)


@pytest.mark.parametrize("g", [0.5, 1.0, 2.0, 7.0])
def test_theta_2x2_closed_form(g):
    G = np.array([[0.0, g], [g, 0.0]])
    assert np.allclose(theta_from_gamma(G), (2.0 / g) * projection_matrix(2), atol=1e-13)


def test_theta_invariants_d6(rng):
    T = theta_from_gamma(random_variogram(rng, 6))
    assert np.max(np.abs(T @ np.ones(6))) < 1e-10
    assert np.linalg.eigvalsh(T)[0] >= -1e-10


def test_theta_exchangeable_d3_against_eig_pinv():
    G = 2.0 * (np.ones((3, 3)) - np.eye(3))
    P = projection_matrix(3)
    expected = eig_pinv(P @ (-G / 2) @ P)
    assert np.allclose(theta_from_gamma(G), expected, atol=1e-12)
    # exchangeable: equal diagonal, equal off-diagonal
    T = theta_from_gamma(G)
    assert np.ptp(np.diag(T)) < 1e-14 and np.ptp(T[~np.eye(3, dtype=bool)]) < 1e-14


def test_theta_rejects_invalid():
    with pytest.raises(InvalidVariogramError):
        theta_from_gamma(np.zeros((3, 3)))


def test_gamma_from_theta_2x2():
    for g in (0.3, 2.0, 5.0):
        G = gamma_from_theta((2.0 / g) * projection_matrix(2))
        assert G[0, 1] == pytest.approx(g, rel=1e-12)


def test_round_trip_20(rng):
    for _ in range(20):
        d = int(rng.integers(2, 13))
        G = random_variogram(rng, d)
        assert np.max(np.abs(gamma_from_theta(theta_from_gamma(G)) - G)) < 1e-8
        T = random_precision(rng, d)
        assert np.max(np.abs(theta_from_gamma(gamma_from_theta(T)) - T)) < 1e-8


def test_gamma_from_cycle_model():
    truth = build_synthetic_model(SyntheticModelSpec(p=6, h=0, seed=0))
    G = gamma_from_theta(truth.theta_star)
    assert np.array_equal(G, G.T)
    assert np.all(np.diag(G) == 0)
    assert G.min() >= 0


def test_gamma_from_theta_rejects_bad_null_space():
    with pytest.raises(InvalidPrecisionError):
        gamma_from_theta(np.eye(3))


def test_validity_examples():
    assert is_valid_variogram(np.array([[0.0, 2.0], [2.0, 0.0]]))
    rep = is_valid_variogram(np.zeros((3, 3)))
    assert not rep and "cnd" in rep.failures
    G = 2.0 * (np.ones((3, 3)) - np.eye(3))
    G[0, 1] = G[1, 0] = -0.1
    rep = is_valid_variogram(G)
    assert not rep and "nonnegativity" in rep.failures


def test_validity_diagnostics():
    G = 2.0 * (np.ones((3, 3)) - np.eye(3))
    G[0, 0] = 1.0
    assert "zero-diagonal" in is_valid_variogram(G).failures
    G = 2.0 * (np.ones((3, 3)) - np.eye(3))
    G[0, 1] = 3.0
    assert "symmetry" in is_valid_variogram(G).failures
    G[0, 1] = np.nan
    assert is_valid_variogram(G).failures == ("finite",)
    assert is_valid_variogram(np.zeros((2, 3))).failures == ("square",)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_theta_invariants_property(d, seed):
    G = random_variogram(np.random.default_rng(seed), d)
    T = theta_from_gamma(G)
    assert check_precision(T)
    assert np.max(np.abs(T @ np.ones(d))) <= 1e-8 * max(1.0, np.abs(T).max())
    w = np.linalg.eigvalsh(T)
    assert np.sum(w > 1e-10 * w[-1]) == d - 1


def test_basis_invariance(rng):
    d = 8
    G = random_variogram(rng, d)
    U = complement_basis(d)
    Q, _ = np.linalg.qr(rng.standard_normal((d - 1, d - 1)))
    assert np.max(np.abs(theta_from_gamma(G, basis=U @ Q) - theta_from_gamma(G))) < 1e-8


@pytest.mark.parametrize("t", [0.1, 1.0, 13.0])
def test_lemma_rank_one_completion(rng, t):
    d = 7
    T = random_precision(rng, d)
    lhs = np.linalg.inv(T + t * np.ones((d, d)))
    rhs = pinv_sym(T) + np.ones((d, d)) / (t * d * d)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_sigma_is_pseudoinverse(rng):
    T = random_precision(rng, 6)
    assert np.allclose(sigma_from_theta(T), eig_pinv(T), atol=1e-10)


def test_star_model_schur_parts():
    truth = build_synthetic_model(SyntheticModelSpec(p=4, h=1, graph_kind="star_factor", seed=2))
    S, L = latent_effect(truth.theta_star, truth.observed, truth.latent)
    assert np.count_nonzero(S - np.diag(np.diag(S))) == 0
    w = np.linalg.eigvalsh(L)
    assert np.sum(w > 1e-10 * w[-1]) == 1
    assert np.all(np.abs(L) > 0)


def test_marginal_no_latent(rng):
    T = random_precision(rng, 5)
    assert np.array_equal(marginal_precision(T, range(5), []), T)


def test_marginal_two_routes_d10(rng):
    T = random_precision(rng, 10, density=0.3)
    obs, lat = [0, 2, 3, 4, 6, 7, 8, 9], [1, 5]  # latent not at the end: gather by index
    via_schur = marginal_precision(T, obs, lat)
    G = gamma_from_theta(T)
    via_gamma = theta_from_gamma(G[np.ix_(obs, obs)])
    assert np.max(np.abs(via_schur - via_gamma)) < 1e-8
    assert check_precision(via_schur)


def test_marginal_singular_latent_block():
    T = np.zeros((4, 4))
    T[:3, :3] = 3 * np.eye(3) - np.ones((3, 3))
    with pytest.raises(SingularLatentBlockError):
        marginal_precision(T, [0, 1, 2], [3])


def test_marginal_bad_partition(rng):
    T = random_precision(rng, 5)
    with pytest.raises(InvalidDimensionError):
        marginal_precision(T, [0, 1, 2], [2, 3, 4])


def test_inputs_not_mutated(rng):
    G = random_variogram(rng, 5)
    G0 = G.copy()
    theta_from_gamma(G)
    is_valid_variogram(G)
    assert np.array_equal(G, G0)
