"""Lattice approximation: round a fractional vector while keeping every row's
linear form close to its mean.

The rounder fixes columns one at a time by conditional expectations over a
sum of two-sided Chernoff pessimistic estimators, one pair per row.  For
``A`` in ``[0, 1]`` with ``R`` rows and ``L = ln(4R)`` it guarantees

    D_k <= sqrt(3 mu_k L) + 2 L,        mu_k = sum_j A_kj u_j.

Real matrices are split into positive and negative parts scaled by the row
maximum ``Delta_k``; each split row obeys the unit bound, so
``D_k <= Delta_k (t(mu_k^+) + t(mu_k^-))`` at ``2m`` rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels

# Tilts beyond this only matter where the estimator is already negligible.
LAMBDA_CAP = 50.0


@dataclass(frozen=True)
class LapInstance:
    A: object  # dense ndarray or scipy.sparse matrix, shape (m, n)
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).reshape(-1)
        if np.any(u < 0) or np.any(u > 1) or not np.all(np.isfinite(u)):
            raise ValueError("u must lie in [0, 1]")
        A = self.A if sp.issparse(self.A) else np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        if A.shape[1] != u.size:
            raise ValueError(f"A has {A.shape[1]} columns but u has {u.size} entries")
        data = A.data if sp.issparse(A) else A
        if not np.all(np.isfinite(data)):
            raise ValueError("A must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "A", A)

    @property
    def shape(self):
        return self.A.shape


@dataclass(frozen=True)
class LapSolution:
    v: np.ndarray      # int8 in {0, 1}
    disc: np.ndarray   # D_k
    mu: np.ndarray     # sum_j |A_kj| u_j
    delta: np.ndarray  # max_j |A_kj|
    bound: np.ndarray  # closed-form per-row guarantee
    phi0: float        # initial estimator value (< 1 by construction)


def discrepancy(A, u, v) -> np.ndarray:
    A = A.toarray() if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=np.float64))
    diff = np.asarray(u, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    return np.abs(A @ diff)


def unit_bound(mu, num_rows: int) -> np.ndarray:
    """``sqrt(3 mu ln 4R) + 2 ln 4R`` realized by the estimator."""
    L = np.log(4.0 * max(num_rows, 1))
    return np.sqrt(3.0 * np.asarray(mu, dtype=np.float64) * L) + 2.0 * L


def real_bound(A, u) -> np.ndarray:
    """Per-row guarantee of ``solve_real``: ``Delta (t(mu+) + t(mu-))`` at 2m rows."""
    A = A.toarray() if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=np.float64))
    u = np.asarray(u, dtype=np.float64)
    delta = np.abs(A).max(axis=1) if A.shape[1] else np.zeros(A.shape[0])
    keep = delta > 0
    out = np.zeros(A.shape[0])
    if not keep.any():
        return out
    Ak = A[keep] / delta[keep, None]
    rows = 2 * int(keep.sum())
    mu_p = np.maximum(Ak, 0) @ u
    mu_n = np.maximum(-Ak, 0) @ u
    out[keep] = delta[keep] * (unit_bound(mu_p, rows) + unit_bound(mu_n, rows))
    return out


def _round_grouped(Acsc: sp.csc_matrix, u_d: np.ndarray, colmap: np.ndarray, backend: str | None = None):
    """Round a matrix whose columns are ``Acsc[:, colmap[c]]``.

    ``Acsc`` holds the distinct columns (entries in ``[0, 1]``), ``u_d`` their
    rates.  Returns ``(v, mu, phi0)`` with ``v`` aligned to ``colmap``.
    """
    R, nd = Acsc.shape
    colmap = np.ascontiguousarray(colmap, dtype=np.int64)
    counts = np.bincount(colmap, minlength=nd).astype(np.float64)
    L = np.log(4.0 * max(R, 1))
    mu = Acsc @ (u_d * counts)
    t = np.sqrt(3.0 * mu * L) + 2.0 * L
    pos = mu > 0
    safe_mu = np.where(pos, mu, 1.0)
    lam_up = np.where(pos, np.minimum(np.log1p(t / safe_mu), LAMBDA_CAP), 1.0)
    lower = pos & (t < mu)
    lam_lo = np.where(lower, np.minimum(-np.log1p(-np.where(lower, t / safe_mu, 0.0)), LAMBDA_CAP), 0.0)

    indptr = np.ascontiguousarray(Acsc.indptr, dtype=np.int64)
    indices = np.ascontiguousarray(Acsc.indices, dtype=np.int64)
    a = Acsc.data
    col_of = np.repeat(np.arange(nd), np.diff(indptr))
    uu = u_d[col_of]
    g_up = np.expm1(lam_up[indices] * a)
    g_lo = np.expm1(-lam_lo[indices] * a)

    # exact initial estimator, assembled in log space
    count_nz = counts[col_of]
    log_up = np.bincount(indices, weights=count_nz * np.log1p(uu * g_up), minlength=R)
    log_lo = np.bincount(indices, weights=count_nz * np.log1p(uu * g_lo), minlength=R)
    phi_up = np.exp(log_up - lam_up * (mu + t))
    phi_lo = np.where(lower, np.exp(log_lo + lam_lo * (mu - t)), 0.0)
    phi0 = float(phi_up.sum() + phi_lo.sum())
    if not phi0 < 1.0:
        raise RuntimeError(f"pessimistic estimator starts at {phi0} >= 1")

    den_up = 1.0 + uu * g_up
    den_lo = 1.0 + uu * g_lo
    f1u = (1.0 + g_up) / den_up
    f0u = 1.0 / den_up
    f1l = (1.0 + g_lo) / den_lo
    f0l = 1.0 / den_lo
    sweep = kernels.sweep if backend is None else kernels.get_sweep(backend)
    v = sweep(
        indptr, indices,
        np.ascontiguousarray(f1u - 1.0), np.ascontiguousarray(f0u - 1.0),
        np.ascontiguousarray(f1l - 1.0), np.ascontiguousarray(f0l - 1.0),
        f1u, f0u, f1l, f0l,
        colmap, np.ascontiguousarray(u_d, dtype=np.float64),
        np.ascontiguousarray(phi_up), np.ascontiguousarray(phi_lo),
    )
    return np.asarray(v, dtype=np.int8), mu, phi0


def _as_csc(A) -> sp.csc_matrix:
    M = sp.csc_matrix(A, dtype=np.float64)
    M.eliminate_zeros()
    M.sum_duplicates()
    M.sort_indices()
    return M


def solve_unit(inst: LapInstance, backend: str | None = None) -> LapSolution:
    A = _as_csc(inst.A)
    if A.nnz and (A.data.min() < 0 or A.data.max() > 1):
        raise ValueError("solve_unit needs entries in [0, 1]; use solve_real")
    m, n = A.shape
    v, mu, phi0 = _round_grouped(A, inst.u, np.arange(n), backend)
    delta = np.asarray(abs(A).max(axis=1).todense()).reshape(-1) if n else np.zeros(m)
    return LapSolution(v, discrepancy(A, inst.u, v), mu, delta, unit_bound(mu, m), phi0)


def split_rows(A: sp.csc_matrix):
    """Positive / negative parts of each nonzero row, scaled to ``[0, 1]``.

    Returns ``(split, delta, keep)``; split row ``2i`` (``2i+1``) is the
    positive (negative) part of kept row ``i``.
    """
    A = _as_csc(A)
    delta = np.asarray(abs(A).max(axis=1).todense()).reshape(-1) if A.shape[1] else np.zeros(A.shape[0])
    keep = np.flatnonzero(delta > 0)
    coo = A.tocoo()
    row_pos = np.full(A.shape[0], -1, dtype=np.int64)
    row_pos[keep] = np.arange(keep.size)
    r = row_pos[coo.row]
    scaled = coo.data / delta[coo.row]
    new_row = np.where(scaled > 0, 2 * r, 2 * r + 1)
    split = sp.csc_matrix((np.abs(scaled), (new_row, coo.col)), shape=(2 * keep.size, A.shape[1]))
    return _as_csc(split), delta, keep


def solve_real(inst: LapInstance, backend: str | None = None) -> LapSolution:
    A = _as_csc(inst.A)
    m, n = A.shape
    split, delta, keep = split_rows(A)
    if keep.size == 0:
        v = np.zeros(n, dtype=np.int8)
        v[inst.u >= 1.0] = 1
        phi0 = 0.0
    else:
        v, _, phi0 = _round_grouped(split, inst.u, np.arange(n), backend)
    mu = abs(A) @ inst.u
    return LapSolution(v, discrepancy(A, inst.u, v), mu, delta, real_bound(A, inst.u), phi0)


def solve_real_grouped(A_distinct: np.ndarray, u_distinct: np.ndarray, colmap: np.ndarray, backend: str | None = None):
    """Real-matrix rounding where many columns repeat one of a few distinct ones.

    ``A_distinct`` is ``(rows, distinct)``; column ``c`` of the full instance is
    ``A_distinct[:, colmap[c]]``.  Returns the bit per full column.
    """
    colmap = np.asarray(colmap, dtype=np.int64)
    split, _, keep = split_rows(A_distinct)
    if keep.size == 0:
        return (u_distinct[colmap] >= 1.0).astype(np.int8)
    v, _, _ = _round_grouped(split, np.asarray(u_distinct, dtype=np.float64), colmap, backend)
    return v
