import numpy as np
import pytest

from hrlatent.matcore import gamma_from_theta
from hrlatent.simulate import SyntheticModelSpec, build_synthetic_model, n_for_k, sample_model
from hrlatent.variogram import empirical_variogram


def random_precision(rng, d, density=0.5):
    """Random valid HR precision: Laplacian of a connected weighted graph plus a dense part."""
    W = np.triu(rng.uniform(0.2, 2.0, (d, d)) * (rng.random((d, d)) < density), 1)
    for i in range(d - 1):  # a path keeps the graph connected
        W[i, i + 1] = max(W[i, i + 1], 0.5)
    W = W + W.T
    T = -W
    np.fill_diagonal(T, W.sum(axis=1))
    return T


def random_variogram(rng, d):
    return gamma_from_theta(random_precision(rng, d))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def desk_instance():
    """Cycle p=10, h=1 with k=5000 exceedances: (truth, train variogram, val variogram)."""
    truth = build_synthetic_model(SyntheticModelSpec(p=10, h=1, seed=3))
    n = n_for_k(5000)
    tr = empirical_variogram(sample_model(truth, n, 11))
    va = empirical_variogram(sample_model(truth, n, 12))
    return truth, tr, va


@pytest.fixture(scope="session")
def small_instance():
    """Cycle p=8, h=1 with k=1000."""
    truth = build_synthetic_model(SyntheticModelSpec(p=8, h=1, seed=1))
    n = n_for_k(1000)
    return truth, empirical_variogram(sample_model(truth, n, 21))
