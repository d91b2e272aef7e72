"""Sparsify a distribution given through a prediction structure into a uniform one.

Starting from ``m`` copies of the empty prefix, each level rounds one more
index bit of every copy by a lattice-approximation solve whose rows are the
tracked states and whose columns are the copies.  With a certified size the
per-level error is at most ``epsilon * alpha / depth``, so the final uniform
distribution satisfies ``|T_D(s,w) - T_E(s,w)| <= epsilon * alpha(s,w,E)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .automata import Automaton, DrivestreamDistribution, fold_states
from .config import MAX_ENUMERATION
from .lattice import solve_real_grouped
from .prediction import PredictionStructure


@dataclass(frozen=True)
class ReduceConfig:
    epsilon: float
    C: float = 4.0
    size_cap: int | None = None      # uncertified when it binds
    exact_if_small: bool = False     # return E itself when |supp E| <= m
    certify: bool = True             # raise m until the per-level bound closes

    def __post_init__(self):
        # the closed endpoint 1/2 is admitted: the acceptance suites use it
        if not 0.0 < self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in (0, 1/2]")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.size_cap is not None and self.size_cap < 1:
            raise ValueError("size_cap must be >= 1")


@dataclass
class ReduceInfo:
    m: int
    depth: int
    C_effective: float
    certified: bool
    exact: bool = False
    level_means: list = field(default_factory=list)  # T_{D_i}(s) per level when traced


def certified_size(epsilon: float, depth: int, num_rows: int) -> int:
    """Smallest m with ``(sqrt(6 L m) + 4 L) / m <= epsilon / depth``, ``L = ln(8 rows)``."""
    if depth == 0:
        return 1
    L = math.log(8.0 * max(num_rows, 1))
    r = epsilon / depth
    x = (math.sqrt(6 * L) + math.sqrt(6 * L + 16 * L * r)) / (2 * r)
    m = max(1, math.ceil(x * x) - 2)
    while (math.sqrt(6 * L * m) + 4 * L) / m > r:
        m += 1
    return m


def per_level_bound(m: int, num_rows: int) -> float:
    """Relative per-level error guaranteed by the LAP solve (multiply by alpha)."""
    L = math.log(8.0 * max(num_rows, 1))
    return (math.sqrt(6 * L * m) + 4 * L) / m


def target_size(depth: int, num_states: int, num_rows: int, cfg: ReduceConfig) -> tuple[int, float, bool]:
    """``(m, effective C, certified)``."""
    if depth == 0:
        return 1, cfg.C, True
    log_eta = math.log(max(num_states, 2))
    m = max(1, math.ceil(cfg.C * depth * depth * log_eta / cfg.epsilon ** 2))
    certified = False
    if cfg.certify:
        m = max(m, certified_size(cfg.epsilon, depth, num_rows))
        certified = True
    if cfg.size_cap is not None and m > cfg.size_cap:
        m = cfg.size_cap
        certified = False
    c_eff = m * cfg.epsilon ** 2 / (depth * depth * log_eta)
    return m, c_eff, certified


def reduce_detailed(Q: PredictionStructure, F: Automaton, w, cfg: ReduceConfig, trace: bool = False,
                    backend: str | None = None):
    """Run the level-by-level rounding; returns ``(distribution, info)``."""
    depth = Q.depth
    m, c_eff, certified = target_size(depth, F.num_states, Q.states.size, cfg)
    info = ReduceInfo(m=m, depth=depth, C_effective=c_eff, certified=certified)

    if cfg.exact_if_small:
        idx, probs = Q.support()
        if idx.size <= m:
            info.exact = True
            info.m = int(idx.size)
            return DrivestreamDistribution.build(Q.start, Q.entries_at(idx), probs / probs.sum()), info

    H = np.zeros(m, dtype=np.int64)
    for i in range(depth):
        uniq, inv = np.unique(H, return_inverse=True)
        inv = inv.reshape(-1)
        p_b = Q.probs_at(i, uniq)
        p_b1 = Q.probs_at(i + 1, 2 * uniq + 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(p_b > 0, p_b1 / np.where(p_b > 0, p_b, 1.0), 0.0)
        u = np.clip(u, 0.0, 1.0)
        T1 = Q.expect_at(i + 1, 2 * uniq + 1)
        T0 = Q.expect_at(i + 1, 2 * uniq)
        if trace:
            counts = np.bincount(inv, minlength=uniq.size).astype(np.float64)
            info.level_means.append(counts @ Q.expect_at(i, uniq) / m)
        A = (T1 - T0).T
        # forced columns contribute nothing; zeroing keeps Delta_k within alpha
        A[:, (u <= 0.0) | (u >= 1.0)] = 0.0
        v = solve_real_grouped(np.ascontiguousarray(A), u, inv, backend)
        H = 2 * H + v
    if trace:
        uniq, inv = np.unique(H, return_inverse=True)
        counts = np.bincount(inv.reshape(-1), minlength=uniq.size).astype(np.float64)
        info.level_means.append(counts @ Q.expect_at(depth, uniq) / m)

    # zero-probability leaves cannot survive (their rate is exactly 0), but
    # guard anyway by remapping onto the first real entry
    p_leaf = Q.probs_at(depth, H)
    if np.any(p_leaf <= 0):
        first = Q.support()[0][0]
        H = np.where(p_leaf > 0, H, first)
    entries = Q.entries_at(H)
    return DrivestreamDistribution.build(Q.start, entries, np.full(m, 1.0 / m)), info


def reduce(Q: PredictionStructure, F: Automaton, w, cfg: ReduceConfig) -> DrivestreamDistribution:
    return reduce_detailed(Q, F, w, cfg)[0]


def sensitivity(F: Automaton, E: DrivestreamDistribution, s, w) -> np.ndarray | float:
    """``max - min`` of ``w`` over final states reachable from ``s`` via supp(E)."""
    if E.size > MAX_ENUMERATION:
        raise ValueError("support too large to enumerate")
    w = np.asarray(w, dtype=np.float64)
    states = np.atleast_1d(np.asarray(s, dtype=np.int64))
    live = E.entries[E.probs > 0]
    vals = w[fold_states(F, E.start, live, states)]
    alpha = vals.max(axis=0) - vals.min(axis=0)
    return float(alpha[0]) if np.ndim(s) == 0 else alpha
