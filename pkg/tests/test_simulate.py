import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import kstest
from scipy.stats import norm

from hrlatent import _backend
from hrlatent._fallback import extremal_functions as py_kernel
from hrlatent.errors import ConstructionFailedError, InvalidDimensionError, InvalidVariogramError
from hrlatent.matcore import check_precision, gamma_from_theta, marginal_precision
from hrlatent.rng import stream_key
from hrlatent.simulate import (
    GroundTruth,
    SyntheticModelSpec,
    build_synthetic_model,
    generate_graph,
    latent_wiring,
    n_for_k,
    rooted_gaussian_factors,
    sample_max_stable_hr,
    sample_model,
    sample_pareto_hr,
)
from hrlatent.variogram import averaged_variogram, empirical_variogram, rank_transform

G2 = np.array([[0.0, 2.0], [2.0, 0.0]])
G3_WEAK = np.array([[0.0, 0.5, 0.8], [0.5, 0.0, 1.0], [0.8, 1.0, 0.0]])


# ---------------------------------------------------------------- models

def test_cycle_p30_h2_has_30_edges():
    truth = build_synthetic_model(SyntheticModelSpec(p=30, h=2, seed=0))
    assert len(truth.conditional_edges) == 30
    assert truth.h == 2 and truth.theta_star.shape == (32, 32)


def test_cycle_edge_values_and_latent_weights():
    spec = SyntheticModelSpec(p=30, h=2, seed=4)
    truth = build_synthetic_model(spec)
    T = truth.theta_star
    for i, j in truth.conditional_edges:
        assert T[i, j] == -2.0
    lo, hi = 30 / np.sqrt(32), 60 / np.sqrt(32)
    w = -T[:30, 30:]
    assert np.all((w == 0) | ((w >= lo) & (w <= hi)))
    assert T[30, 31] == 0.0
    # latent 1 (1-based) reaches observed 2, 4, ..., 30 (1-based)
    assert np.flatnonzero(w[:, 0]).tolist() == list(range(1, 30, 2))
    assert np.flatnonzero(w[:, 1]).tolist() == list(range(2, 30, 2))


def test_star_factor_p4():
    truth = build_synthetic_model(SyntheticModelSpec(p=4, h=1, graph_kind="star_factor", seed=1))
    T = truth.theta_star
    block = T[:4, :4]
    assert np.count_nonzero(block - np.diag(np.diag(block))) == 0
    assert np.all(T[4, :4] != 0)
    assert truth.conditional_edges == []


def test_h0_cycle_is_pure_cycle():
    truth = build_synthetic_model(SyntheticModelSpec(p=5, h=0, seed=9))
    expected = 4.0 * np.eye(5)
    for i in range(5):
        expected[i, (i + 1) % 5] = expected[(i + 1) % 5, i] = -2.0
    assert np.array_equal(truth.theta_star, expected)


def test_erdos_renyi_wiring_offsets():
    assert latent_wiring(6, 2, "erdos_renyi") == [[2, 4], [3, 5]]
    assert latent_wiring(6, 2, "cycle") == [[1, 3, 5], [2, 4]]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["cycle", "erdos_renyi", "barabasi_albert", "star_factor"]),
       st.integers(4, 14), st.integers(0, 3), st.integers(0, 10**6))
def test_ground_truth_invariants(kind, p, h, seed):
    if kind == "star_factor" and h == 0:
        h = 1
    h = min(h, p // 2)  # every latent variable needs an observed neighbour
    truth = build_synthetic_model(SyntheticModelSpec(p=p, h=h, graph_kind=kind, prob=0.3,
                                                     seed=seed))
    T = truth.theta_star
    assert check_precision(T)
    assert np.max(np.abs(T.sum(axis=1))) < 1e-8
    # support of the observed block is exactly the edge set
    E = {tuple(e) for e in truth.conditional_edges}
    for i in range(p):
        for j in range(i + 1, p):
            assert (abs(T[i, j]) >= 1e-12) == ((i, j) in E)


def test_ba_edge_interval():
    truth = build_synthetic_model(SyntheticModelSpec(p=20, h=0, graph_kind="barabasi_albert", q=2,
                                                     seed=3))
    v = np.array([truth.theta_star[i, j] for i, j in truth.conditional_edges])
    assert np.all((v >= -5) & (v <= -2))
    assert truth.h == 0


def test_rejection_budget_exhausted():
    # no edges and no latent variables: the precision has rank 0 on every draw
    with pytest.raises(ConstructionFailedError, match="rank"):
        build_synthetic_model(SyntheticModelSpec(p=4, h=0, graph_kind="star_factor"))


def test_isolated_latent_is_rejected():
    # latent 3 of 3 would attach to observed 5, 8, ... on p = 4: no neighbours
    with pytest.raises(ConstructionFailedError):
        build_synthetic_model(SyntheticModelSpec(p=4, h=3, seed=0))


def test_spec_validation():
    with pytest.raises(InvalidDimensionError):
        SyntheticModelSpec(p=2)
    with pytest.raises(InvalidDimensionError):
        SyntheticModelSpec(p=5, prob=1.5)
    with pytest.raises(InvalidDimensionError):
        SyntheticModelSpec(p=5, latent_weight_interval=(3.0, 1.0))
    with pytest.raises(InvalidDimensionError):
        SyntheticModelSpec(p=5, graph_kind="lattice")


def test_ground_truth_json_round_trip():
    truth = build_synthetic_model(SyntheticModelSpec(p=6, h=1, seed=2))
    back = GroundTruth.from_dict(truth.to_dict())
    assert np.array_equal(back.theta_star, truth.theta_star)
    assert back.conditional_edges == truth.conditional_edges
    assert back.spec.weight_interval() == pytest.approx(truth.spec.weight_interval())
    assert back.spec.p == truth.spec.p and back.spec.seed == truth.spec.seed


# ---------------------------------------------------------------- graphs

def test_cycle_graph_p5():
    E = generate_graph("cycle", 5)
    assert len(E) == 5
    deg = np.bincount(np.ravel(E), minlength=5)
    assert np.all(deg == 2)


def test_ba_graph_20_2():
    E = generate_graph("barabasi_albert", 20, {"q": 2}, seed=1)
    assert set(np.ravel(E)) == set(range(20))
    assert len(E) == (20 - 2) * 2


def test_er_graph_deterministic_and_connected():
    a = generate_graph("erdos_renyi", 30, {"prob": 0.08}, seed=5)
    b = generate_graph("erdos_renyi", 30, {"prob": 0.08}, seed=5)
    assert a == b
    import networkx as nx
    g = nx.Graph(a)
    g.add_nodes_from(range(30))
    assert nx.is_connected(g)


def test_er_retry_budget():
    with pytest.raises(ConstructionFailedError):
        generate_graph("erdos_renyi", 30, {"prob": 0.001}, seed=0)


# ---------------------------------------------------------------- samplers

def test_max_stable_d2_variogram():
    X = sample_max_stable_hr(G2, 100_000, seed=1)
    rt = rank_transform(X)
    ev = averaged_variogram(rt, int(np.sqrt(1e5)))
    assert abs(ev.gamma_hat[0, 1] - 2.0) <= 0.15


def test_max_stable_frechet_margins_and_support():
    G = gamma_from_theta(build_synthetic_model(SyntheticModelSpec(p=5, h=1, seed=0)).theta_star)
    X = sample_max_stable_hr(G, 100_000, seed=2)
    assert np.all(X > 0)
    for j in range(X.shape[1]):
        # Frechet -> uniform through exp(-1/x)
        assert kstest(np.exp(-1.0 / X[:, j]), "uniform").statistic < 0.01


def test_max_stable_bivariate_cdf():
    # P(Z1 <= z, Z2 <= z) = exp(-(2/z) Phi(sqrt(G)/2)) for the bivariate HR law
    X = sample_max_stable_hr(G2, 200_000, seed=3)
    for z in (0.5, 1.0, 4.0):
        exact = np.exp(-(2.0 / z) * norm.cdf(np.sqrt(2.0) / 2))
        emp = np.mean(np.all(X <= z, axis=1))
        assert abs(emp - exact) < 4 * np.sqrt(exact * (1 - exact) / 200_000) + 1e-4


def test_backend_agreement():
    G = gamma_from_theta(build_synthetic_model(SyntheticModelSpec(p=6, h=2, seed=8)).theta_star)
    chol, shift = rooted_gaussian_factors(G)
    key = stream_key(5, "max-stable")
    a = py_kernel(chol, shift, 500, key)
    b = _backend.get_kernel()(chol, shift, 500, key)
    assert np.max(np.abs(a - b) / b) < 1e-12


def test_backend_name():
    assert _backend.BACKEND in ("compiled", "python")


def test_max_stable_deterministic():
    a = sample_max_stable_hr(G3_WEAK, 1000, seed=4)
    b = sample_max_stable_hr(G3_WEAK, 1000, seed=4)
    c = sample_max_stable_hr(G3_WEAK, 1000, seed=5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_sampler_rejects_invalid():
    with pytest.raises(InvalidVariogramError):
        sample_max_stable_hr(np.zeros((3, 3)), 10, 0)
    with pytest.raises(InvalidVariogramError):
        sample_pareto_hr(-G2, 10, 0)


def test_pareto_support():
    Y = sample_pareto_hr(G3_WEAK * 3, 20_000, seed=1)
    assert Y.shape == (20_000, 3)
    assert np.all(Y.max(axis=1) > 0)


def test_pareto_d2_conditional_variance():
    Y = sample_pareto_hr(G2, 100_000, seed=2)
    sel = Y[:, 1] > 1.0
    assert abs(np.var(Y[sel, 0] - Y[sel, 1], ddof=1) - 2.0) <= 0.1


def test_pareto_exchangeable_rooted_agree():
    G = 1.5 * (np.ones((3, 3)) - np.eye(3))
    reps = []
    for s in range(8):
        Y = sample_pareto_hr(G, 20_000, seed=10 + s)
        reps.append(averaged_variogram(rank_transform(Y), 1000, keep_per_root=True).per_root)
    reps = np.array(reps)  # (rep, root, i, j)
    mean = reps.mean(axis=0)
    se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
    for a in range(3):
        for b in range(a + 1, 3):
            bound = 3 * np.sqrt(se[a] ** 2 + se[b] ** 2)
            assert np.all(np.abs(mean[a] - mean[b]) <= bound + 1e-12)


def test_pareto_root_law_matches_conditioning():
    # under Y_m > 0 the excess of the root is standard exponential
    Y = sample_pareto_hr(G3_WEAK, 50_000, seed=3)
    ex = Y[Y[:, 0] > 0, 0]
    assert kstest(ex, "expon").statistic < 0.02


def test_consistency_rate_max_stable():
    # noise-dominated regime: with k = n**0.7 the error should shrink by about 4**-0.35
    err = []
    for s in range(8):
        e = []
        for n in (10_000, 40_000):
            X = sample_max_stable_hr(G3_WEAK, n, seed=s)
            e.append(np.abs(empirical_variogram(X).gamma_hat - G3_WEAK).max())
        err.append(e)
    m = np.mean(err, axis=0)
    assert m[1] / m[0] <= 0.75


def test_pareto_and_max_stable_tail_agree():
    ms, pa = [], []
    for s in range(8):
        ms.append(empirical_variogram(sample_max_stable_hr(G3_WEAK, 200_000, 100 + s),
                                      k=1000).gamma_hat)
        pa.append(empirical_variogram(sample_pareto_hr(G3_WEAK, 20_000, 200 + s),
                                      k=1000).gamma_hat)
    ms, pa = np.array(ms), np.array(pa)
    se = np.sqrt(ms.var(0, ddof=1) / len(ms) + pa.var(0, ddof=1) / len(pa))
    diff = np.abs(ms.mean(0) - pa.mean(0))
    assert np.all(diff <= 3 * se + 1e-12)


def test_sample_model_observed_columns():
    truth = build_synthetic_model(SyntheticModelSpec(p=5, h=2, seed=1))
    X = sample_model(truth, 200, 0)
    assert X.shape == (200, 5)
    Y = sample_model(truth, 200, 0, method="pareto")
    assert Y.shape == (200, 5)
    with pytest.raises(ValueError):
        sample_model(truth, 10, 0, method="gibbs")


def test_marginal_variogram_is_block():
    truth = build_synthetic_model(SyntheticModelSpec(p=6, h=1, seed=1))
    Gfull = truth.variogram()
    assert np.allclose(truth.observed_variogram(), Gfull[:6, :6], atol=1e-8)
    assert np.allclose(truth.observed_precision(),
                       marginal_precision(truth.theta_star, truth.observed, truth.latent))


@pytest.mark.parametrize("k", [25, 1000, 5000])
def test_n_for_k(k):
    n = n_for_k(k)
    assert np.floor(n ** 0.7) >= k > np.floor((n - 1) ** 0.7)


def test_n_for_5000():
    assert n_for_k(5000) == 192_417
