# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same contract and random-number layout as ``_fallback``."""

import numpy as np

from libc.math cimport cos, exp, log, sqrt, M_PI
from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t CANDIDATE_STRIDE = 1ULL << 20
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline double _uniform(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t z = key + (counter + 1ULL) * GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return (<double>(z >> 11) + 0.5) * TWO_M53


def extremal_functions(chol, shift, Py_ssize_t n, uint64_t key):
    cdef double[:, :, ::1] C = np.ascontiguousarray(chol, dtype=np.float64)
    cdef double[:, ::1] mu = np.ascontiguousarray(shift, dtype=np.float64)
    cdef Py_ssize_t d = C.shape[0]
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] Z = out
    cdef double[::1] z = np.empty(d, dtype=np.float64)
    cdef double[::1] cand = np.empty(d, dtype=np.float64)
    cdef uint64_t stride = 2 * d + 1
    cdef uint64_t base, c
    cdef Py_ssize_t t, j, i, k
    cdef double E, zeta, g
    cdef bint ok
    with nogil:
        for t in range(n):
            for j in range(d):
                c = 0
                base = ((<uint64_t>t * d + j) * CANDIDATE_STRIDE + c) * stride
                E = -log(_uniform(key, base))
                zeta = 1.0 / E
                while zeta > Z[t, j]:
                    for k in range(d):
                        if k != j:
                            z[k] = sqrt(-2.0 * log(_uniform(key, base + 2 * k + 1))) * cos(
                                2.0 * M_PI * _uniform(key, base + 2 * k + 2))
                        else:
                            z[k] = 0.0
                    ok = True
                    # factor rows are lower triangular; column j is zero
                    for i in range(d):
                        g = 0.0
                        for k in range(i + 1):
                            g = g + C[j, i, k] * z[k]
                        cand[i] = zeta * exp(g + mu[j, i])
                        if i < j and cand[i] >= Z[t, i]:
                            ok = False
                            break
                    if ok:
                        for i in range(d):
                            if cand[i] > Z[t, i]:
                                Z[t, i] = cand[i]
                    c += 1
                    base = ((<uint64_t>t * d + j) * CANDIDATE_STRIDE + c) * stride
                    E = E - log(_uniform(key, base))
                    zeta = 1.0 / E
    return out
