"""Pure-numpy kernels, used when the compiled extension is unavailable.

Results agree with ``_kernels`` up to floating-point rounding: both read
their random numbers from the same counter positions.
"""

import numpy as np

from .rng import hash_uniform

CANDIDATE_STRIDE = 1 << 20


def _counters(rows, d, j, c):
    stride = 2 * d + 1
    return ((rows.astype(np.uint64) * np.uint64(d) + np.uint64(j)) * np.uint64(CANDIDATE_STRIDE)
            + np.uint64(c)) * np.uint64(stride)


def extremal_functions(chol, shift, n, key):
    """Max-stable samples (unit Fréchet margins) by the extremal-functions method.

    ``chol[j]`` is a lower factor of the covariance of the log spectral
    function rooted at site j (row and column j zero), ``shift[j]`` its mean.
    """
    chol = np.ascontiguousarray(chol, dtype=np.float64)
    shift = np.ascontiguousarray(shift, dtype=np.float64)
    d = chol.shape[0]
    Z = np.zeros((n, d))
    rows = np.arange(n, dtype=np.uint64)
    offsets = np.arange(1, 2 * d + 1, dtype=np.uint64)
    for j in range(d):
        E = -np.log(hash_uniform(key, _counters(rows, d, j, 0)))
        zeta = 1.0 / E
        idx = np.flatnonzero(zeta > Z[:, j])
        c = 0
        while idx.size:
            base = _counters(idx, d, j, c)
            u = hash_uniform(key, base[:, None] + offsets[None, :])
            z = np.sqrt(-2.0 * np.log(u[:, 0::2])) * np.cos(2.0 * np.pi * u[:, 1::2])
            W = np.exp(z @ chol[j].T + shift[j])
            cand = zeta[idx, None] * W
            if j:
                ok = np.all(cand[:, :j] < Z[idx, :j], axis=1)
            else:
                ok = np.ones(idx.size, dtype=bool)
            hit = idx[ok]
            Z[hit] = np.maximum(Z[hit], cand[ok])
            c += 1
            E[idx] -= np.log(hash_uniform(key, _counters(idx, d, j, c)))
            zeta[idx] = 1.0 / E[idx]
            idx = idx[zeta[idx] > Z[idx, j]]
    return Z
