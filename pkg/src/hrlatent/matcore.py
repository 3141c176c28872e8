"""Hüsler–Reiss matrix calculus.

Variogram matrices and precision matrices are plain symmetric ``ndarray``
objects; the functions here validate them at the boundary and never mutate
their inputs. Index sets are explicit sorted integer lists and blocks are
always gathered, never assumed contiguous.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidDimensionError,
    InvalidPrecisionError,
    InvalidVariogramError,
    SingularLatentBlockError,
)

TAU_NULL = 1e-8
TAU_CND = 1e-10
TAU_RANK = 1e-10


def projection_matrix(p):
    """Return ``I_p - 1 1^T / p``, the projector onto the complement of 1."""
    p = int(p)
    if p < 2:
        raise InvalidDimensionError(f"projection needs p >= 2, got {p}")
    return np.eye(p) - np.full((p, p), 1.0 / p)


def complement_basis(p):
    """Orthonormal p x (p-1) basis of the orthogonal complement of 1_p.

    Built from the Householder reflector that maps e_1 to 1/sqrt(p), so the
    result is deterministic and needs no SVD.
    """
    p = int(p)
    if p < 2:
        raise InvalidDimensionError(f"basis needs p >= 2, got {p}")
    w = np.full(p, 1.0 / np.sqrt(p))
    w[0] -= 1.0
    H = np.eye(p) - 2.0 * np.outer(w, w) / (w @ w)
    return H[:, 1:].copy()


def symmetrize(A):
    return 0.5 * (A + A.T)


def pinv_sym(A, tau_rank=TAU_RANK):
    """Moore–Penrose pseudoinverse of a symmetric matrix via eigh.

    Eigenvalues with modulus below ``tau_rank * max|eig|`` count as zero.
    """
    vals, vecs = np.linalg.eigh(symmetrize(np.asarray(A, dtype=float)))
    scale = np.max(np.abs(vals)) if vals.size else 0.0
    keep = np.abs(vals) > tau_rank * scale
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return symmetrize((vecs * inv) @ vecs.T)


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of a matrix validity check; truthy iff every check passed."""

    valid: bool
    failures: tuple = ()
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.valid


def is_valid_variogram(G, tau_cnd=TAU_CND, atol=1e-12):
    """Check membership in the cone of conditionally negative definite variograms.

    Total function: never raises on square input, returns a ValidityReport
    naming each failed check ("square", "finite", "symmetry", "zero-diagonal",
    "nonnegativity", "cnd").
    """
    G = np.asarray(G, dtype=float)
    failures = []
    details = {}
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] < 2:
        return ValidityReport(False, ("square",), {"shape": G.shape})
    if not np.all(np.isfinite(G)):
        return ValidityReport(False, ("finite",), {})
    scale = max(1.0, float(np.max(np.abs(G))))
    asym = float(np.max(np.abs(G - G.T)))
    details["asymmetry"] = asym
    if asym > atol * scale:
        failures.append("symmetry")
    diag = float(np.max(np.abs(np.diag(G))))
    details["max_abs_diagonal"] = diag
    if diag > atol * scale:
        failures.append("zero-diagonal")
    details["min_entry"] = float(G.min())
    if G.min() < -atol * scale:
        failures.append("nonnegativity")
    U = complement_basis(G.shape[0])
    top = float(np.linalg.eigvalsh(symmetrize(U.T @ G @ U)).max())
    details["max_eig_compressed"] = top
    if not top < -tau_cnd * scale:
        failures.append("cnd")
    return ValidityReport(not failures, tuple(failures), details)


def check_precision(T, tau_null=TAU_NULL, tau_rank=TAU_RANK):
    """Validate the precision invariants: symmetric PSD, null space exactly span(1)."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 2:
        return ValidityReport(False, ("square",), {"shape": T.shape})
    failures = []
    scale = max(1.0, float(np.max(np.abs(T))))
    details = {"asymmetry": float(np.max(np.abs(T - T.T)))}
    if details["asymmetry"] > 1e-10 * scale:
        failures.append("symmetry")
    details["max_row_sum"] = float(np.max(np.abs(T.sum(axis=1))))
    if details["max_row_sum"] > tau_null * scale:
        failures.append("null-space")
    vals = np.linalg.eigvalsh(symmetrize(T))
    details["min_eig"] = float(vals[0])
    top = max(float(vals[-1]), 0.0)
    if vals[0] < -tau_null * scale:
        failures.append("psd")
    rank = int(np.sum(vals > tau_rank * top)) if top > 0 else 0
    details["rank"] = rank
    if rank != T.shape[0] - 1:
        failures.append("rank")
    return ValidityReport(not failures, tuple(failures), details)


def theta_from_gamma(G, check=True, basis=None):
    """Precision ``(Pi (-G/2) Pi)^+`` of a variogram.

    Computed as ``U (U^T (-G/2) U)^{-1} U^T`` for an orthonormal basis U of
    the complement of 1; any such basis gives the same matrix.
    """
    G = np.asarray(G, dtype=float)
    if check:
        rep = is_valid_variogram(G)
        if not rep:
            raise InvalidVariogramError(f"invalid variogram: failed {', '.join(rep.failures)}")
    d = G.shape[0]
    U = complement_basis(d) if basis is None else basis
    # the compression U^T (-G/2) U is negative of a PD matrix on a valid input
    C = symmetrize(U.T @ (-0.5 * G) @ U)
    return symmetrize(U @ np.linalg.solve(C, U.T))


def sigma_from_theta(T):
    """``Theta^+`` for a precision with null space span(1)."""
    d = T.shape[0]
    U = complement_basis(d)
    return symmetrize(U @ np.linalg.inv(symmetrize(U.T @ T @ U)) @ U.T)


def gamma_from_theta(T, check=True):
    """Variogram ``G_ij = S_ii + S_jj - 2 S_ij`` with ``S = Theta^+``."""
    T = np.asarray(T, dtype=float)
    if check:
        rep = check_precision(T)
        if not rep:
            raise InvalidPrecisionError(f"invalid precision: failed {', '.join(rep.failures)}")
    S = sigma_from_theta(T)
    s = np.diag(S)
    G = s[:, None] + s[None, :] - 2.0 * S
    np.fill_diagonal(G, 0.0)
    return symmetrize(G)


def _index_list(idx, d, name):
    idx = sorted(int(i) for i in idx)
    if len(set(idx)) != len(idx) or any(i < 0 or i >= d for i in idx):
        raise InvalidDimensionError(f"bad {name} index set {idx} for dim {d}")
    return idx


def marginal_precision(T, observed, latent):
    """Schur complement ``T_O - T_OH T_H^{-1} T_HO`` of the latent block."""
    T = np.asarray(T, dtype=float)
    d = T.shape[0]
    obs = _index_list(observed, d, "observed")
    lat = _index_list(latent, d, "latent")
    if set(obs) & set(lat) or len(obs) + len(lat) != d:
        raise InvalidDimensionError("observed and latent must partition the index range")
    if len(obs) < 2:
        raise InvalidDimensionError("need at least two observed variables")
    T_O = T[np.ix_(obs, obs)]
    if not lat:
        return T_O.copy()
    T_OH = T[np.ix_(obs, lat)]
    T_H = T[np.ix_(lat, lat)]
    vals = np.linalg.eigvalsh(symmetrize(T_H))
    if vals[0] <= TAU_RANK * max(1.0, abs(vals[-1])):
        raise SingularLatentBlockError(f"latent block is singular (min eig {vals[0]:.3e})")
    return symmetrize(T_O - T_OH @ np.linalg.solve(T_H, T_OH.T))


def latent_effect(T, observed, latent):
    """Return ``(T_O, T_OH T_H^{-1} T_HO)``, the sparse and low-rank parts."""
    obs = _index_list(observed, T.shape[0], "observed")
    lat = _index_list(latent, T.shape[0], "latent")
    T_O = T[np.ix_(obs, obs)].copy()
    if not lat:
        return T_O, np.zeros_like(T_O)
    return T_O, T_O - marginal_precision(T, obs, lat)
