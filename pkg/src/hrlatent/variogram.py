"""Empirical extremal variogram estimation.

Margins are standardized with ``F_hat = rank / (n + 1)`` (average ranks for
ties) and mapped to the exponential scale by ``-log(1 - F_hat)``. The
variogram rooted at node m is the sample variance (denominator k - 1) of the
pairwise differences over the exactly-k rows with the largest values in
column m; ties go to the earlier row.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import IngestionError, InsufficientExceedancesError
from .matcore import is_valid_variogram


@dataclass(frozen=True)
class RankTransformed:
    values: np.ndarray
    ranks: np.ndarray
    cdf: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class EmpiricalVariogram:
    gamma_hat: np.ndarray
    k: int
    n: int
    per_root: np.ndarray = None
    valid: bool = True
    rule: dict = None

    @property
    def p(self):
        return self.gamma_hat.shape[0]

    def metadata(self):
        return {"n": self.n, "k": self.k, "p": self.p,
                "exponent_or_threshold": self.rule, "valid_flag": bool(self.valid)}


def _check_data(data):
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise IngestionError(f"expected an n x p matrix, got shape {X.shape}")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise IngestionError(f"non-finite value at row {r}, column {c}")
    if X.shape[0] < 2:
        raise IngestionError("need at least two rows")
    return X


def rank_transform(data):
    X = _check_data(data)
    n = X.shape[0]
    avg = rankdata(X, method="average", axis=0)
    ranks = rankdata(X, method="ordinal", axis=0).astype(np.int64)
    F = avg / (n + 1.0)
    return RankTransformed(values=-np.log1p(-F), ranks=ranks, cdf=F)


def exceedance_rows(rt, m, k):
    """Indices of the k rows with the largest values in column m."""
    col = rt.values[:, m]
    order = np.lexsort((np.arange(rt.n), -col))
    return np.sort(order[:k])


def _variance_of_differences(V):
    C = np.cov(V, rowvar=False, ddof=1)
    s = np.diag(C)
    G = s[:, None] + s[None, :] - 2.0 * C
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 0.0)
    return np.maximum(G, 0.0)


def rooted_variogram(rt, m, k):
    k = int(k)
    if k < 2:
        raise InsufficientExceedancesError(f"k = {k}; need at least 2 exceedances")
    if k > rt.n:
        raise InsufficientExceedancesError(f"k = {k} exceeds n = {rt.n}")
    return _variance_of_differences(rt.values[exceedance_rows(rt, m, k)])


def averaged_variogram(rt, k, keep_per_root=False, rule=None):
    """Mean of the p rooted variograms, flagged (not rejected) if invalid."""
    per_root = np.stack([rooted_variogram(rt, m, k) for m in range(rt.p)])
    G = per_root.mean(axis=0)
    valid = bool(is_valid_variogram(G))
    if not valid:
        warnings.warn("empirical variogram is not conditionally negative definite",
                      RuntimeWarning, stacklevel=2)
    return EmpiricalVariogram(G, int(k), rt.n, per_root if keep_per_root else None,
                              valid, rule)


def choose_k(n, exponent=0.7, threshold=None):
    """Effective sample size: ``floor(n**exponent)`` or ``floor((1 - threshold) * n)``.

    Clamped to ``[2, n // 2]``.
    """
    n = int(n)
    if threshold is not None:
        # round first so that 0.15 * 3603 is not nudged across an integer
        k = math.floor(round((1.0 - float(threshold)) * n, 9))
    else:
        k = math.floor(round(n ** float(exponent), 9))
    return int(min(max(k, 2), max(n // 2, 2)))


def k_rule(exponent=0.7, threshold=None):
    if threshold is not None:
        return {"threshold": float(threshold)}
    return {"exponent": float(exponent)}


def empirical_variogram(data, exponent=0.7, threshold=None, k=None, keep_per_root=False):
    """Rank-transform raw data and return the averaged empirical variogram."""
    rt = rank_transform(data)
    if k is None:
        k = choose_k(rt.n, exponent, threshold)
        rule = k_rule(exponent, threshold)
    else:
        rule = {"k": int(k)}
    return averaged_variogram(rt, k, keep_per_root, rule)
