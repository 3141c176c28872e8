"""Surrogate likelihood programs for Hüsler–Reiss precision matrices.

All programs share one ADMM splitting. With U an orthonormal basis of the
complement of 1, the precision is parameterized as ``S - L = U R U^T`` with
R symmetric positive definite of size p - 1, which makes the zero row sum
constraint exact. Each iteration does

* an R step: proximal map of ``-logdet`` (one eigendecomposition),
* an S step: soft-thresholding, or projection onto a support pattern,
* an L step: shifted eigenvalue clipping, or projection onto ``{B M B^T, M >= 0}``,

followed by scaled dual ascent on ``U R U^T - S + L = 0``. At exit the
returned pair is ``(U R U^T + L, L)``, so ``S - L`` is exactly the PD
iterate and L exactly PSD.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, InfeasibleRefitError, NotAttainableError
from .matcore import complement_basis, symmetrize
from .variogram import EmpiricalVariogram

TAU_PSD = 1e-8
EDGE_TOL = 1e-3
RANK_TOL = 1e-3


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 20000
    rho: float = 1.0
    adapt_rho: bool = True
    rho_min: float = 1e-4
    rho_max: float = 1e4
    balance_ratio: float = 10.0
    balance_every: int = 10
    penalize_diagonal: bool = True
    basis: np.ndarray = None
    track_objective: bool = False
    scale_dual: bool = True


@dataclass
class SolveReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective_value: float
    converged: bool
    rho_final: float
    dual: np.ndarray = field(default=None, repr=False)
    state: dict = field(default=None, repr=False)
    history: list = field(default=None, repr=False)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective_value": self.objective_value,
            "converged": self.converged,
            "rho_final": self.rho_final,
        }


@dataclass(frozen=True)
class LatentDecomposition:
    S: np.ndarray
    L: np.ndarray
    lam: float = 0.0
    gamma: float = 0.0

    @property
    def theta(self):
        return self.S - self.L

    def to_dict(self, report=None, factor_L=False):
        d = {"S": self.S.tolist(), "lambda": self.lam, "gamma": self.gamma}
        if factor_L:
            vals, vecs = np.linalg.eigh(self.L)
            keep = vals > RANK_TOL * max(vals.max(), 0.0) if vals.max() > 0 else vals > np.inf
            d["L"] = {"eigenvalues": vals[keep].tolist(), "eigenvectors": vecs[:, keep].tolist()}
        else:
            d["L"] = self.L.tolist()
        if report is not None:
            d["report"] = report.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        L = d["L"]
        S = np.asarray(d["S"], dtype=float)
        if isinstance(L, dict):
            V = np.asarray(L["eigenvectors"], dtype=float).reshape(S.shape[0], -1)
            L = (V * np.asarray(L["eigenvalues"])) @ V.T
        return cls(S, np.asarray(L, dtype=float), d.get("lambda", 0.0), d.get("gamma", 0.0))


@dataclass(frozen=True)
class StructureEstimate:
    edges: list
    latent_rank: int
    edge_tol: float
    rank_tol: float
    colspace: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {"edges": [list(e) for e in self.edges], "latent_rank": self.latent_rank,
                "edge_tol": self.edge_tol, "rank_tol": self.rank_tol}


def _gamma_array(G):
    if isinstance(G, EmpiricalVariogram):
        G = G.gamma_hat
    G = symmetrize(np.asarray(G, dtype=float))
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] < 2:
        raise ValueError(f"variogram must be square with p >= 2, got {G.shape}")
    return G


def _basis(p, opts):
    return complement_basis(p) if opts.basis is None else np.asarray(opts.basis, dtype=float)


def surrogate_objective(theta, G, basis=None):
    """``-logdet(U^T theta U) - tr(theta G)/2``; +inf outside the PD domain."""
    G = _gamma_array(G)
    U = complement_basis(G.shape[0]) if basis is None else basis
    sign, logdet = np.linalg.slogdet(symmetrize(U.T @ theta @ U))
    if sign <= 0:
        return np.inf
    return float(-logdet - 0.5 * np.sum(theta * G))


def l1_norm(S, penalize_diagonal=True):
    total = np.abs(S).sum()
    if not penalize_diagonal:
        total -= np.abs(np.diag(S)).sum()
    return float(total)


def eglatent_objective(S, L, G, lam, gamma, penalize_diagonal=True, basis=None):
    return (surrogate_objective(S - L, G, basis)
            + lam * (l1_norm(S, penalize_diagonal) + gamma * float(np.trace(L))))


def surrogate_mle(G, basis=None):
    """Closed-form minimizer ``(Pi (-G/2) Pi)^+`` of the unpenalized program."""
    G = _gamma_array(G)
    p = G.shape[0]
    U = complement_basis(p) if basis is None else basis
    C = symmetrize(U.T @ G @ U)
    top = np.linalg.eigvalsh(C)[-1]
    if not top < -1e-12 * max(1.0, np.max(np.abs(G))):
        raise NotAttainableError(
            "U^T G U is not negative definite; the surrogate likelihood is unbounded")
    return symmetrize(U @ np.linalg.solve(-0.5 * C, U.T))


def soft_threshold(A, t, penalize_diagonal=True):
    out = np.sign(A) * np.maximum(np.abs(A) - t, 0.0)
    if not penalize_diagonal:
        np.fill_diagonal(out, np.diag(A))
    return out


def psd_shrink(A, t):
    """Projection of ``A - t I`` onto the PSD cone."""
    vals, vecs = np.linalg.eigh(symmetrize(A))
    vals = np.maximum(vals - t, 0.0)
    return symmetrize((vecs * vals) @ vecs.T)


def _logdet_prox(A, rho):
    vals, vecs = np.linalg.eigh(symmetrize(A))
    x = 0.5 * (vals + np.sqrt(vals * vals + 4.0 / rho))
    return symmetrize((vecs * x) @ vecs.T), x


def _admm(G, s_step, l_step, opts, objective, warm=None):
    p = G.shape[0]
    U = _basis(p, opts)
    K = 0.5 * symmetrize(U.T @ G @ U)
    if warm is not None:
        S, L, Y, rho = (warm["S"].copy(), warm["L"].copy(), warm["Y"].copy(), warm["rho"])
    else:
        S, L, Y, rho = U @ U.T, np.zeros((p, p)), np.zeros((p, p)), float(opts.rho)
    best = None
    history = [] if opts.track_objective else None
    converged = False
    pr = du = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        try:
            Rt, x = _logdet_prox(U.T @ (S - L - Y) @ U + K / rho, rho)
            R = U @ Rt @ U.T
            S_new = s_step(R + L + Y, rho)
            L_new = l_step(S_new - R - Y, rho)
        except np.linalg.LinAlgError as exc:
            raise DivergenceError(f"eigendecomposition failed at iteration {it} ({exc}); "
                                  "try a smaller rho") from exc
        r = R - S_new + L_new
        Y = Y + r
        pr = np.linalg.norm(r) / p
        du = rho * np.sqrt(np.linalg.norm(S_new - S) ** 2 + np.linalg.norm(L_new - L) ** 2) / p
        S, L = S_new, L_new
        if not (np.isfinite(pr) and np.isfinite(du)):
            raise DivergenceError(f"non-finite residuals at iteration {it}; try a smaller rho")
        if history is not None:
            history.append((it, rho, objective(symmetrize(R) + L, L)))
        # a stationarity error e moves the precision by about |R|^2 e, so the
        # dual residual is measured in those units when scale_dual is on
        gap = max(pr, du * max(1.0, float(x[-1])) ** 2 if opts.scale_dual else du)
        if best is None or gap < best[0]:
            best = (gap, it, pr, du, Rt, S, L, Y, rho)
        if gap <= opts.tol:
            converged = True
            break
        if opts.adapt_rho and it % opts.balance_every == 0:
            if pr > opts.balance_ratio * du and rho * 2.0 <= opts.rho_max:
                rho *= 2.0
                Y = Y / 2.0
            elif du > opts.balance_ratio * pr and rho / 2.0 >= opts.rho_min:
                rho /= 2.0
                Y = Y * 2.0
    if not converged:
        _, it_best, pr, du, Rt, S, L, Y, rho = best
    else:
        it_best = it
    R = symmetrize(U @ Rt @ U.T)
    S_out, L_out = symmetrize(R + L), symmetrize(L)
    obj = objective(S_out, L_out)
    if not np.isfinite(obj):
        raise DivergenceError("objective is not finite at the returned iterate; try a smaller rho")
    report = SolveReport(
        iterations=it, primal_residual=float(pr), dual_residual=float(du),
        objective_value=float(obj), converged=converged, rho_final=float(rho),
        dual=rho * Y, state={"S": S, "L": L, "Y": Y, "rho": rho, "R": R, "best_iter": it_best},
        history=history)
    return S_out, L_out, report


def eglatent(G, lam, gamma, opts=None, warm=None):
    """Sparse-plus-low-rank fit: minimize the surrogate loss plus ``lam (|S|_1 + gamma tr L)``.

    Returns ``(LatentDecomposition, SolveReport)``. ``warm`` takes the
    ``report.state`` of a previous solve.
    """
    opts = opts or SolverOptions()
    G = _gamma_array(G)
    lam, gamma = float(lam), float(gamma)
    if not (np.isfinite(lam) and lam >= 0 and np.isfinite(gamma) and gamma >= 0):
        raise ValueError("lam and gamma must be finite and nonnegative")
    _guard_degenerate(G)
    pd = opts.penalize_diagonal
    U = _basis(G.shape[0], opts)

    def s_step(A, rho):
        return soft_threshold(A, lam / rho, pd)

    def l_step(A, rho):
        return psd_shrink(A, lam * gamma / rho)

    def objective(S, L):
        return eglatent_objective(S, L, G, lam, gamma, pd, U)

    S, L, rep = _admm(G, s_step, l_step, opts, objective, warm)
    return LatentDecomposition(S, L, lam, gamma), rep


def eglearn_baseline(G, lam, opts=None, warm=None):
    """Plain l1-penalized surrogate likelihood (L fixed at zero).

    A graphical-lasso style baseline that ignores latent variables.
    """
    opts = opts or SolverOptions()
    G = _gamma_array(G)
    lam = float(lam)
    _guard_degenerate(G)
    pd = opts.penalize_diagonal
    U = _basis(G.shape[0], opts)
    zero = np.zeros_like(G)

    def s_step(A, rho):
        return soft_threshold(A, lam / rho, pd)

    def l_step(A, rho):
        return zero

    def objective(S, L):
        return eglatent_objective(S, L, G, lam, 0.0, pd, U)

    S, L, rep = _admm(G, s_step, l_step, opts, objective, warm)
    return LatentDecomposition(S, L, lam, np.inf), rep


def _guard_degenerate(G):
    if np.max(np.abs(G)) == 0.0:
        raise NotAttainableError("variogram is identically zero; the likelihood is unbounded")


def support_mask(p, support):
    """Boolean p x p mask from an edge list; the diagonal is always included."""
    M = np.eye(p, dtype=bool)
    for i, j in support:
        M[i, j] = M[j, i] = True
    return M


def _connected(mask):
    from scipy.sparse.csgraph import connected_components

    n, _ = connected_components(mask.astype(np.int8), directed=False)
    return n == 1


def refit(G, support, colspace=None, opts=None, warm=None):
    """Unpenalized refit with ``supp(S)`` inside ``support`` and col-space(L) inside ``colspace``.

    ``support`` is an edge list (diagonal implied) or a boolean mask;
    ``colspace`` an orthonormal p x r basis (None or r = 0 for L = 0).
    """
    opts = opts or SolverOptions()
    G = _gamma_array(G)
    p = G.shape[0]
    mask = np.asarray(support, dtype=bool) if np.ndim(support) == 2 and np.shape(support) == (p, p) \
        else support_mask(p, support)
    mask = mask | np.eye(p, dtype=bool)
    B = None if colspace is None else np.asarray(colspace, dtype=float).reshape(p, -1)
    if B is not None and B.shape[1] == 0:
        B = None
    if B is None and not _connected(mask):
        raise InfeasibleRefitError("support graph is disconnected and no latent part is allowed")
    U = _basis(p, opts)
    zero = np.zeros((p, p))

    def s_step(A, rho):
        return np.where(mask, A, 0.0)

    if B is None:
        def l_step(A, rho):
            return zero
    else:
        def l_step(A, rho):
            return B @ psd_shrink(B.T @ A @ B, 0.0) @ B.T

    def objective(S, L):
        return surrogate_objective(S - L, G, U)

    S, L, rep = _admm(G, s_step, l_step, opts, objective, warm)
    if not rep.converged:
        Rt = U.T @ (S - L) @ U
        ev = np.linalg.eigvalsh(symmetrize(Rt))
        if ev[0] <= 1e-8 * ev[-1] or rep.primal_residual > 1e3 * opts.tol:
            raise InfeasibleRefitError(
                f"refit did not reach a feasible PD point (primal residual "
                f"{rep.primal_residual:.2e}, min eig {ev[0]:.2e})")
    return LatentDecomposition(S, L, 0.0, 0.0), rep


def extract_structure(dec, edge_tol=EDGE_TOL, rank_tol=RANK_TOL):
    """Edges from ``|S_ij| > edge_tol * max(1, |S|_inf)``; rank from the spectrum of L."""
    S, L = dec.S, dec.L
    p = S.shape[0]
    thr = edge_tol * max(1.0, float(np.max(np.abs(S))))
    iu, ju = np.triu_indices(p, 1)
    keep = np.abs(S[iu, ju]) > thr
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    vals, vecs = np.linalg.eigh(symmetrize(L))
    top = vals[-1]
    if top <= TAU_PSD:
        rank, C = 0, np.zeros((p, 0))
    else:
        sel = vals > rank_tol * top
        rank, C = int(sel.sum()), vecs[:, sel]
    return StructureEstimate(edges, rank, edge_tol, rank_tol, C)


def kkt_residual(dec, report, G, penalize_diagonal=True, edge_tol=EDGE_TOL,
                 rank_tol=RANK_TOL, basis=None, latent=True):
    """Optimality-system residuals of a penalized solve, using the solver's dual.

    With ``Lam`` the multiplier of ``U R U^T = S - L``:

    * ``stationarity``: ``U^T(Lam + grad)U`` where grad is the gradient of the
      smooth loss at ``S - L``, in Frobenius norm over p like the solver residuals;
    * ``sparse``: entrywise distance of ``Lam`` from the subdifferential of ``lam |S|_1``;
    * ``lowrank``: negative part of ``lam*gamma I + Lam`` and its size on col-space(L).
    """
    G = _gamma_array(G)
    p = G.shape[0]
    U = complement_basis(p) if basis is None else basis
    lam, gamma = dec.lam, dec.gamma
    Lam = symmetrize(report.dual)
    Rt = symmetrize(U.T @ dec.theta @ U)
    K = 0.5 * symmetrize(U.T @ G @ U)
    stat = float(np.linalg.norm(-np.linalg.inv(Rt) - K + U.T @ Lam @ U) / p)
    st = extract_structure(dec, edge_tol, rank_tol)
    on = np.zeros((p, p), dtype=bool)
    for i, j in st.edges:
        on[i, j] = on[j, i] = True
    diag = np.eye(p, dtype=bool)
    if penalize_diagonal:
        on |= diag & (np.abs(dec.S) > 0)
        sgn = np.sign(dec.S)
        dev_on = np.abs(Lam - lam * sgn)[on]
        dev_off = np.maximum(np.abs(Lam) - lam, 0.0)[~on]
    else:
        sgn = np.sign(dec.S)
        off_diag_on = on & ~diag
        dev_on = np.concatenate([np.abs(Lam - lam * sgn)[off_diag_on], np.abs(np.diag(Lam))])
        dev_off = np.maximum(np.abs(Lam) - lam, 0.0)[~on & ~diag]
    sparse = float(max(dev_on.max(initial=0.0), dev_off.max(initial=0.0)))
    lowrank = 0.0
    if latent:
        W = lam * gamma * np.eye(p) + Lam
        lowrank = max(0.0, -float(np.linalg.eigvalsh(W)[0]))
        if st.latent_rank:
            C = st.colspace
            lowrank = max(lowrank, float(np.max(np.abs(C.T @ W @ C))))
    return {"stationarity": stat, "sparse": sparse, "lowrank": lowrank,
            "max": max(stat, sparse, lowrank)}


def default_lambda_grid(G, n_points=30, ratio=1e-3, top_factor=10.0):
    """Descending log-spaced grid from ``top_factor * max_{i != j} |Sigma_ij|`` down by ``ratio``.

    ``Sigma = Pi (-G/2) Pi`` sets the natural scale of the l1 dual variable;
    the factor 10 starts the path safely in the empty-graph regime.
    """
    G = _gamma_array(G)
    p = G.shape[0]
    P = np.eye(p) - 1.0 / p
    Sig = P @ (-0.5 * G) @ P
    off = np.abs(Sig[~np.eye(p, dtype=bool)])
    top = top_factor * (float(off.max()) if off.size and off.max() > 0 else 0.1)
    return np.geomspace(top, top * ratio, int(n_points))


def solve_path(G, lambdas, gamma, opts=None, method="eglatent", warm_start=True):
    """Solve along a descending lambda grid, warm-starting each point."""
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("empty lambda grid")
    if any(a < b for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be sorted in descending order")
    out = []
    warm = None
    for lam in lambdas:
        if method == "eglatent":
            dec, rep = eglatent(G, lam, gamma, opts, warm)
        elif method == "eglearn":
            dec, rep = eglearn_baseline(G, lam, opts, warm)
        else:
            raise ValueError(f"unknown method {method!r}")
        out.append((dec, rep))
        warm = rep.state if warm_start else None
    return out


def stage1_refit(G, dec, opts=None, edge_tol=EDGE_TOL, rank_tol=RANK_TOL):
    """Refit on the support and column space selected by a penalized solve."""
    st = extract_structure(dec, edge_tol, rank_tol)
    ref, rep = refit(G, st.edges, st.colspace, opts)
    return ref, rep, st


def with_options(opts, **kw):
    return replace(opts or SolverOptions(), **kw)
