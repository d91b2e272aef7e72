# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled column sweep of the conditional-expectations LAP rounder.

Every per-nonzero factor is precomputed by the caller, so this loop only
accumulates and multiplies.  Accumulation order (row order within a column,
upper term before lower term) matches the pure-Python fallback exactly.
"""
import numpy as np
cimport numpy as cnp

ctypedef cnp.int64_t i64


def sweep(const i64[::1] indptr, const i64[::1] indices,
          const double[::1] a1u, const double[::1] a0u,
          const double[::1] a1l, const double[::1] a0l,
          const double[::1] f1u, const double[::1] f0u,
          const double[::1] f1l, const double[::1] f0l,
          const i64[::1] colmap, const double[::1] u,
          double[::1] phi_up, double[::1] phi_lo):
    cdef Py_ssize_t ncols = colmap.shape[0]
    cdef cnp.ndarray[cnp.int8_t, ndim=1] out = np.zeros(ncols, dtype=np.int8)
    cdef cnp.int8_t[::1] v = out
    cdef Py_ssize_t c, p, k, lo, hi
    cdef i64 d
    cdef double uj, d1, d0
    with nogil:
        for c in range(ncols):
            d = colmap[c]
            uj = u[d]
            if uj <= 0.0:
                continue
            if uj >= 1.0:
                v[c] = 1
                continue
            lo = indptr[d]
            hi = indptr[d + 1]
            d1 = 0.0
            d0 = 0.0
            for p in range(lo, hi):
                k = indices[p]
                d1 += phi_up[k] * a1u[p]
                d1 += phi_lo[k] * a1l[p]
            for p in range(lo, hi):
                k = indices[p]
                d0 += phi_up[k] * a0u[p]
                d0 += phi_lo[k] * a0l[p]
            if d1 < d0:
                v[c] = 1
                for p in range(lo, hi):
                    k = indices[p]
                    phi_up[k] = phi_up[k] * f1u[p]
                    phi_lo[k] = phi_lo[k] * f1l[p]
            else:
                for p in range(lo, hi):
                    k = indices[p]
                    phi_up[k] = phi_up[k] * f0u[p]
                    phi_lo[k] = phi_lo[k] * f0l[p]
    return out
