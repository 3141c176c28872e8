"""Synthetic latent Hüsler–Reiss models and samplers.

Index conventions are 0-based: observed variables are ``0..p-1`` and latent
variables ``p..p+h-1``. Edges are sorted pairs ``(i, j)`` with ``i < j``.
"""

from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from . import _backend
from .errors import ConstructionFailedError, InvalidDimensionError, InvalidVariogramError
from .matcore import check_precision, gamma_from_theta, is_valid_variogram, latent_effect
from .rng import generator, stream_key

GRAPH_KINDS = ("cycle", "erdos_renyi", "barabasi_albert", "star_factor")
MAX_REJECTIONS = 1000
MAX_GRAPH_RETRIES = 1000
CHOL_JITTER = 1e-10


@dataclass(frozen=True)
class SyntheticModelSpec:
    p: int
    h: int = 0
    graph_kind: str = "cycle"
    prob: float = 0.08
    q: int = 2
    edge_value: float = -2.0
    edge_interval: tuple = (-5.0, -2.0)
    latent_weight_interval: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.graph_kind not in GRAPH_KINDS:
            raise InvalidDimensionError(f"unknown graph kind {self.graph_kind!r}")
        if self.h < 0:
            raise InvalidDimensionError("h must be >= 0")
        if self.graph_kind != "star_factor" and self.p < 3:
            raise InvalidDimensionError("p must be >= 3")
        if self.p < 2:
            raise InvalidDimensionError("p must be >= 2")
        if not 0.0 < self.prob < 1.0:
            raise InvalidDimensionError("prob must lie in (0, 1)")
        lo, hi = self.weight_interval()
        if not 0.0 < lo <= hi:
            raise InvalidDimensionError("latent weight interval needs 0 < lo <= hi")

    def weight_interval(self):
        if self.latent_weight_interval is not None:
            return tuple(float(x) for x in self.latent_weight_interval)
        s = np.sqrt(self.p + self.h)
        return (30.0 / s, 60.0 / s)

    def to_dict(self):
        d = asdict(self)
        d["latent_weight_interval"] = list(self.weight_interval())
        d["edge_interval"] = list(self.edge_interval)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("edge_interval", "latent_weight_interval"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    theta_star: np.ndarray
    observed: list
    latent: list
    conditional_edges: list
    spec: SyntheticModelSpec = None
    tries: int = 1

    @property
    def h(self):
        return len(self.latent)

    @property
    def p(self):
        return len(self.observed)

    def sparse_and_lowrank(self):
        """Population ``(S*, L*)`` with ``S* - L*`` the observed precision."""
        return latent_effect(self.theta_star, self.observed, self.latent)

    def observed_precision(self):
        S, L = self.sparse_and_lowrank()
        return S - L

    def observed_variogram(self):
        return gamma_from_theta(self.observed_precision())

    def variogram(self):
        return gamma_from_theta(self.theta_star)

    def to_dict(self):
        return {
            "theta_star": self.theta_star.tolist(),
            "observed": list(self.observed),
            "latent": list(self.latent),
            "conditional_edges": [list(e) for e in self.conditional_edges],
            "h": self.h,
            "spec": None if self.spec is None else self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        spec = d.get("spec")
        return cls(
            theta_star=np.asarray(d["theta_star"], dtype=float),
            observed=list(d["observed"]),
            latent=list(d["latent"]),
            conditional_edges=[tuple(e) for e in d["conditional_edges"]],
            spec=None if spec is None else SyntheticModelSpec.from_dict(spec),
        )


def _is_connected(p, edges):
    g = nx.Graph()
    g.add_nodes_from(range(p))
    g.add_edges_from(edges)
    return nx.is_connected(g)


def generate_graph(kind, p, params=None, seed=0):
    """Edge list of a random or deterministic graph on ``p`` nodes."""
    params = params or {}
    if p < 3:
        raise InvalidDimensionError("graphs need p >= 3")
    if kind == "cycle":
        return sorted(tuple(sorted((i, (i + 1) % p))) for i in range(p))
    if kind == "star_factor":
        return []
    if kind == "barabasi_albert":
        q = int(params.get("q", 2))
        g = nx.barabasi_albert_graph(p, q, seed=int(generator(seed, "ba").integers(2**31)))
        return sorted(tuple(sorted(e)) for e in g.edges())
    if kind == "erdos_renyi":
        prob = float(params.get("prob", 0.08))
        rng = generator(seed, "er")
        iu, ju = np.triu_indices(p, 1)
        for _ in range(MAX_GRAPH_RETRIES):
            keep = rng.random(iu.size) < prob
            edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
            if _is_connected(p, edges):
                return edges
        raise ConstructionFailedError(
            f"no connected ER({p}, {prob}) graph in {MAX_GRAPH_RETRIES} draws")
    raise InvalidDimensionError(f"unknown graph kind {kind!r}")


def latent_wiring(p, h, kind):
    """Observed neighbours of each latent variable (0-based, observed ids).

    Cycle-style wiring attaches latent ``l`` (1-based) to observed nodes
    ``l - 1 + zeta*h``; the Erdős–Rényi variant uses ``l + zeta*h``.
    """
    offset = 0 if kind == "erdos_renyi" else -1
    wiring = []
    for l in range(1, h + 1):
        ks = [l + offset + z * h for z in range(1, p + 1)]
        wiring.append([k - 1 for k in ks if 1 <= k <= p])
    return wiring


def build_synthetic_model(spec):
    """Ground-truth joint precision for a latent model described by ``spec``."""
    p, h = spec.p, spec.h
    d = p + h
    rng = generator(spec.seed, "weights")
    if spec.graph_kind == "star_factor":
        edges = []
    else:
        edges = generate_graph(spec.graph_kind, p,
                               {"prob": spec.prob, "q": spec.q}, spec.seed)
    if spec.graph_kind == "star_factor":
        wiring = [list(range(p))] * h
    else:
        wiring = latent_wiring(p, h, spec.graph_kind)
    lo, hi = spec.weight_interval()
    last = None
    for attempt in range(1, MAX_REJECTIONS + 1):
        T = np.zeros((d, d))
        for i, j in edges:
            if spec.graph_kind == "barabasi_albert":
                v = rng.uniform(*sorted(spec.edge_interval))
            else:
                v = spec.edge_value
            T[i, j] = T[j, i] = v
        for l, nbrs in enumerate(wiring):
            w = rng.uniform(lo, hi, size=len(nbrs))
            # negative off-diagonal weights keep the diagonal positive
            T[p + l, nbrs] = -w
            T[nbrs, p + l] = -w
        np.fill_diagonal(T, 0.0)
        np.fill_diagonal(T, -T.sum(axis=1))
        last = check_precision(T)
        if last:
            return GroundTruth(T, list(range(p)), list(range(p, d)), edges, spec, attempt)
    raise ConstructionFailedError(
        f"no valid precision after {MAX_REJECTIONS} draws; last failures {last.failures}, "
        f"details {last.details}")


def rooted_gaussian_factors(G):
    """Per-root lower factors and means of the log spectral functions.

    For root j the Gaussian has covariance ``(G_ij + G_lj - G_il)/2`` and
    mean ``-G_ij/2``; row and column j of the factor are zero.
    """
    G = np.asarray(G, dtype=float)
    d = G.shape[0]
    chol = np.zeros((d, d, d))
    for j in range(d):
        Sig = 0.5 * (G[:, [j]] + G[[j], :] - G)
        others = [i for i in range(d) if i != j]
        sub = Sig[np.ix_(others, others)]
        try:
            C = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError:
            C = np.linalg.cholesky(sub + CHOL_JITTER * np.eye(d - 1))
        chol[j][np.ix_(others, others)] = C
    shift = -0.5 * G.T.copy()
    return chol, shift


def _check_gamma(G):
    rep = is_valid_variogram(G)
    if not rep:
        raise InvalidVariogramError(f"invalid variogram: failed {', '.join(rep.failures)}")


def sample_max_stable_hr(G, n, seed, backend=None):
    """``n`` Hüsler–Reiss max-stable draws with unit Fréchet margins."""
    G = np.asarray(G, dtype=float)
    _check_gamma(G)
    if n < 1:
        raise InvalidDimensionError("n must be >= 1")
    chol, shift = rooted_gaussian_factors(G)
    kernel = _backend.get_kernel(backend)
    return kernel(chol, shift, int(n), stream_key(seed, "max-stable"))


def sample_pareto_hr(G, n, seed):
    """``n`` Hüsler–Reiss multivariate Pareto draws on the exponential scale.

    Proposals pick a uniform root m, set ``Y_m ~ Exp(1)`` and add the rooted
    Gaussian increments; each proposal is kept with probability
    ``1 / #{i : Y_i > 0}``, which turns the root mixture into the law
    restricted to ``max(Y) > 0``.
    """
    G = np.asarray(G, dtype=float)
    _check_gamma(G)
    d = G.shape[0]
    chol, shift = rooted_gaussian_factors(G)
    rng = generator(seed, "pareto")
    out = []
    have = 0
    while have < n:
        m = max(64, int(1.2 * (n - have) * d))
        roots = rng.integers(d, size=m)
        z = rng.standard_normal((m, d))
        incr = np.einsum("mik,mk->mi", chol[roots], z) + shift[roots]
        Y = rng.standard_exponential(m)[:, None] + incr
        npos = np.sum(Y > 0, axis=1)
        keep = rng.random(m) * npos < 1.0
        out.append(Y[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


def sample_model(truth, n, seed, method="max_stable", backend=None):
    """Observed-variable samples from a ground-truth latent model."""
    G = truth.variogram()
    if method == "max_stable":
        X = sample_max_stable_hr(G, n, seed, backend=backend)
    elif method == "pareto":
        X = sample_pareto_hr(G, n, seed)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return X[:, truth.observed]


def n_for_k(k, exponent=0.7):
    """Smallest n with ``floor(n**exponent) >= k``."""
    n = max(4, int(np.floor(k ** (1.0 / exponent))) - 2)
    while int(np.floor(n ** exponent)) < k:
        n += 1
    return n
