"""Pure-Python column sweep; bit-identical to the compiled kernel.

``np.cumsum`` accumulates left to right, matching the compiled ``s += x``
loop, so both backends pick the same bit in every column.
"""
import numpy as np


def sweep(indptr, indices, a1u, a0u, a1l, a0l, f1u, f0u, f1l, f0l, colmap, u, phi_up, phi_lo):
    ncols = colmap.shape[0]
    v = np.zeros(ncols, dtype=np.int8)
    for c in range(ncols):
        d = colmap[c]
        uj = u[d]
        if uj <= 0.0:
            continue
        if uj >= 1.0:
            v[c] = 1
            continue
        lo, hi = indptr[d], indptr[d + 1]
        if hi == lo:
            continue
        rows = indices[lo:hi]
        pu = phi_up[rows]
        pl = phi_lo[rows]
        terms = np.empty(2 * (hi - lo))
        terms[0::2] = pu * a1u[lo:hi]
        terms[1::2] = pl * a1l[lo:hi]
        d1 = np.cumsum(terms)[-1]
        terms[0::2] = pu * a0u[lo:hi]
        terms[1::2] = pl * a0l[lo:hi]
        d0 = np.cumsum(terms)[-1]
        if d1 < d0:
            v[c] = 1
            phi_up[rows] = pu * f1u[lo:hi]
            phi_lo[rows] = pl * f1l[lo:hi]
        else:
            phi_up[rows] = pu * f0u[lo:hi]
            phi_lo[rows] = pl * f0l[lo:hi]
    return v
