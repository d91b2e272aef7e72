"""Bottom-up construction of a small distribution fooling an automaton.

Level ``i`` holds one distribution per aligned window of length ``h = 2**i``.
Adjacent windows ``(t, h)`` and ``(t + h, h)`` are merged by sparsifying their
(virtual) product against the approximate suffix vector ``Vhat[t + 2h]``.
With exact suffix vectors the output satisfies, for every tracked start state,

    |T_D(s, W) - T_Omega(s, W)| <= epsilon * V(s) + 3 * beta * n.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .automata import (
    Automaton,
    DrivestreamDistribution,
    ProbabilitySpace,
    distribution_expectation,
    exact_suffix_expectations,
    is_power_of_two,
    reachable_sets,
)
from .config import EPS64
from .prediction import build_product
from .reduce import ReduceConfig, ReduceInfo, reduce_detailed, target_size


@dataclass(frozen=True)
class FoolConfig:
    epsilon: float
    C: float = 4.0
    size_cap: int | None = None
    certify: bool = True
    exact_if_small: bool = True
    workers: int = 1
    vhat_mode: str = "exact-dp"  # exact-dp | matrix-product | application-supplied

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.vhat_mode not in ("exact-dp", "matrix-product", "application-supplied"):
            raise ValueError(f"unknown vhat_mode {self.vhat_mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def delta(self, n: int) -> float:
        """Per-merge error parameter ``epsilon / (20 (1 + lg n))``."""
        return self.epsilon / (20.0 * (1.0 + math.log2(n)))


@dataclass(frozen=True)
class VhatProvider:
    vectors: np.ndarray  # (n + 1, num_states); row n is W
    beta: float

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=np.float64)
        if V.ndim != 2 or not np.all(np.isfinite(V)):
            raise ValueError("vhat must be a finite (n+1, num_states) array")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        object.__setattr__(self, "vectors", V)

    @property
    def n(self) -> int:
        return self.vectors.shape[0] - 1

    def padded(self, n_new: int) -> "VhatProvider":
        """Extend to a padded horizon; identity steps keep the final weight."""
        extra = n_new - self.n
        if extra <= 0:
            return self
        tail = np.repeat(self.vectors[-1:], extra, axis=0)
        return VhatProvider(np.concatenate([self.vectors, tail]), self.beta)


@dataclass
class FoolInfo:
    n: int
    delta: float
    level_sizes: list = field(default_factory=list)  # max |D_{i,t}| per level
    merges: list = field(default_factory=list)        # (level, t, m, certified, exact)
    certified: bool = True
    size: int = 0

    @property
    def any_exact(self) -> bool:
        return any(x[4] for x in self.merges)


def fixed_order_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``A @ B`` with the inner sum accumulated strictly in index order."""
    out = np.zeros((A.shape[0], B.shape[1]))
    for k in range(A.shape[1]):
        out += A[:, k : k + 1] * B[k : k + 1, :]
    return out


def fixed_order_matvec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros(A.shape[0])
    for k in range(A.shape[1]):
        out += A[:, k] * x[k]
    return out


def step_matrix(space: ProbabilitySpace, F: Automaton, t: int) -> np.ndarray:
    states = np.arange(F.num_states)
    T = np.zeros((F.num_states, F.num_states))
    st = space.steps[t]
    for j in range(st.size):
        if st.probs[j] > 0:
            T[states, F.next_states(t, j, states)] += st.probs[j]
    return T


def compute_vhat_generic(space: ProbabilitySpace, F: Automaton, W) -> VhatProvider:
    """Suffix vectors from dyadic transition matrices, top-down.

    Requires ``n`` to be a power of two.  ``beta`` is a conservative
    floating-point model: ``2 n eta eps64 max|W|``.
    """
    n = space.n
    if not is_power_of_two(n):
        raise ValueError("compute_vhat_generic needs n to be a power of two")
    W = np.asarray(W, dtype=np.float64)
    eta = F.num_states
    # mats[i][t // 2**i] = T_{t, t + 2**i}
    mats = [[step_matrix(space, F, t) for t in range(n)]]
    while len(mats[-1]) > 1:
        prev = mats[-1]
        mats.append([fixed_order_matmul(prev[2 * k], prev[2 * k + 1]) for k in range(len(prev) // 2)])
    V = np.empty((n + 1, eta))
    V[n] = W
    V[0] = fixed_order_matvec(mats[-1][0], W)
    for i in range(len(mats) - 2, -1, -1):
        h = 1 << i
        for a in range(0, n, 2 * h):
            V[a + h] = fixed_order_matvec(mats[i][(a + h) // h], V[a + 2 * h])
    beta = 2.0 * n * eta * EPS64 * float(np.max(np.abs(W))) if W.size else 0.0
    return VhatProvider(V, beta)


def exact_vhat(space: ProbabilitySpace, F: Automaton, W) -> VhatProvider:
    return VhatProvider(exact_suffix_expectations(space, F, W), 0.0)


def _positive_product(D1: DrivestreamDistribution, D2: DrivestreamDistribution) -> DrivestreamDistribution:
    a = np.flatnonzero(D1.probs > 0)
    b = np.flatnonzero(D2.probs > 0)
    entries = np.concatenate([np.repeat(D1.entries[a], b.size, axis=0), np.tile(D2.entries[b], (a.size, 1))], axis=1)
    probs = (D1.probs[a][:, None] * D2.probs[b][None, :]).reshape(-1)
    return DrivestreamDistribution.build(D1.start, entries, probs / probs.sum())


def _merge(args):
    D1, D2, F, w, states, rcfg = args
    if rcfg.exact_if_small:
        # same outcome as reducing, without building the prediction structure
        depth = D1.depth + D2.depth
        m, c_eff, certified = target_size(depth, F.num_states, len(states), rcfg)
        support = int(np.count_nonzero(D1.probs > 0)) * int(np.count_nonzero(D2.probs > 0))
        if support <= m:
            return _positive_product(D1, D2), ReduceInfo(support, depth, c_eff, certified, exact=True)
    Q = build_product(D1, D2, F, w, states)
    return reduce_detailed(Q, F, w, rcfg)


def fool_detailed(space: ProbabilitySpace, F: Automaton, W, cfg: FoolConfig,
                  vhat: VhatProvider | None = None, starts=None):
    """Run the construction; returns ``(distribution over (0, n), info)``.

    ``starts`` restricts the LAP rows to states reachable from those start
    states (the guarantee then covers exactly those starts).
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (F.num_states,):
        raise ValueError("W must cover every state")
    n_orig = space.n
    space = space.padded()
    n = space.n
    if vhat is None:
        if cfg.vhat_mode == "matrix-product":
            vhat = compute_vhat_generic(space, F, W)
        else:
            vhat = exact_vhat(space, F, W)
    if vhat.vectors.shape[1] != F.num_states:
        raise ValueError("vhat dimension does not match the automaton")
    if vhat.n not in (n_orig, n):
        raise ValueError("vhat horizon does not match the space")
    vhat = vhat.padded(n)
    if not np.array_equal(vhat.vectors[n], W):
        raise ValueError("vhat[n] must equal W exactly")

    delta = cfg.delta(n)
    rcfg = ReduceConfig(min(delta, 0.5), C=cfg.C, size_cap=cfg.size_cap,
                        exact_if_small=cfg.exact_if_small, certify=cfg.certify)
    if starts is None:
        reach = [np.arange(F.num_states)] * (n + 1)
    else:
        reach = reachable_sets(space, F, starts)
    info = FoolInfo(n=n, delta=delta)
    level = [DrivestreamDistribution.from_step(space, t) for t in range(n)]
    info.level_sizes.append(max(d.num_real for d in level))
    h = 1
    i = 0
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        while h < n:
            jobs = [(level[2 * k], level[2 * k + 1], F, vhat.vectors[t + 2 * h], reach[t], rcfg)
                    for k, t in enumerate(range(0, n, 2 * h))]
            results = list(pool.map(_merge, jobs)) if cfg.workers > 1 else [_merge(j) for j in jobs]
            level = []
            for (D, rinfo), t in zip(results, range(0, n, 2 * h)):
                level.append(D)
                info.merges.append((i, t, rinfo.m, rinfo.certified, rinfo.exact))
                info.certified = info.certified and (rinfo.certified or rinfo.exact)
            info.level_sizes.append(max(d.num_real for d in level))
            h *= 2
            i += 1
    D = level[0]
    info.size = D.num_real
    return D, info


def fool(space, F, W, cfg: FoolConfig, vhat: VhatProvider | None = None, starts=None) -> DrivestreamDistribution:
    return fool_detailed(space, F, W, cfg, vhat, starts)[0]


@dataclass(frozen=True)
class FoolingReport:
    states: np.ndarray
    error: np.ndarray    # |T_D(s,W) - T_Omega(s,W)|
    bound: np.ndarray    # epsilon V(s) + 3 beta n
    slack: np.ndarray    # bound + float budget of the check itself - error

    @property
    def failures(self) -> np.ndarray:
        return self.states[self.slack < 0]

    @property
    def ok(self) -> bool:
        return bool(np.all(self.slack >= 0))


def verify_fooling(D: DrivestreamDistribution, space: ProbabilitySpace, F: Automaton, W,
                   variability, epsilon: float, beta: float = 0.0, starts=None) -> FoolingReport:
    """Per-state slack of the end-to-end guarantee, exact DP for ``T_Omega``.

    ``variability`` is indexed like ``starts`` (default: every state).
    """
    W = np.asarray(W, dtype=np.float64)
    states = np.arange(F.num_states) if starts is None else np.asarray(starts, dtype=np.int64)
    exact = exact_suffix_expectations(space, F, W)[0][states]
    got = distribution_expectation(F, D, W, states)
    err = np.abs(got - exact)
    n = space.padded().n
    bound = epsilon * np.asarray(variability, dtype=np.float64) + 3.0 * beta * n
    # roundoff of the two sums being compared (|D| terms, n steps over eta states)
    fp = 4.0 * (D.size + n * F.num_states) * EPS64 * float(np.max(np.abs(W), initial=0.0))
    return FoolingReport(states, err, bound, bound + fp - err)


def best_entry(scores: np.ndarray) -> int:
    """Index of the first maximizer (deterministic tie-break)."""
    return int(np.argmax(scores))
