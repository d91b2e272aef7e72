"""Gale-Berlekamp switching game by fooling one truncated counter per row.

Row ``i`` counts ``sum_j A_ij y_j`` for a uniform sign stream ``y``; the
damped weight ``potential(c) |c|`` lower-bounds ``|c|``.  After fooling all
rows at once, the best ``y`` in the small distribution (first maximizer) with
the sign-rule ``x`` has imbalance at least the distribution's mean damped
weight, which is at least the certified bound when every merge certified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .automata import ProbabilitySpace, StepDistribution, exact_suffix_expectations, fold_states, total_variability
from .config import EPS64
from .counters import CounterBank, damped_weight, span_for
from .fool import FoolConfig, VhatProvider, best_entry, fool_detailed

BRUTE_FORCE_MAX_N = 16


@dataclass(frozen=True)
class GBInstance:
    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError("A must be a non-empty square matrix")
        if not np.all(np.abs(A) == 1):
            raise ValueError("entries must be exactly +1 or -1")
        object.__setattr__(self, "A", A.astype(np.int64))

    @property
    def n(self) -> int:
        return int(self.A.shape[0])


@dataclass(frozen=True)
class GBConfig:
    epsilon_scale: float = 1.0   # epsilon = scale / sqrt(n ln n)
    b_scale: float = 0.1         # replaces the literal 100 of the span formula
    delta_exponent: float = 10.0  # delta = n ** -exponent
    size_cap: int | None = 256
    C: float = 4.0
    workers: int = 1

    def epsilon(self, n: int) -> float:
        # ln n vanishes at n = 1; the cap keeps the per-merge parameter admissible
        return min(0.49, self.epsilon_scale / math.sqrt(n * max(math.log(n), 1.0)))

    def delta(self, n: int) -> float:
        return min(0.5, float(n) ** -self.delta_exponent)


@dataclass
class GBResult:
    x: np.ndarray
    y: np.ndarray
    imbalance: int
    certified_bound: float
    distribution_size: int
    empirical_bound: float       # E_D[sum_i W~_i], always <= imbalance
    expected_omega: float        # sum_i E_Omega[W~_i]
    variability: np.ndarray      # per row
    epsilon: float
    beta: float
    B: int
    delta: float
    certified: bool               # every merge certified (or exact)
    merges: list = field(default_factory=list)

    @property
    def ratio_to_n32(self) -> float:
        n = self.x.size
        return self.imbalance / n ** 1.5


def imbalance(A, x, y) -> int:
    A = np.asarray(A, dtype=np.int64)
    return int(np.asarray(x, dtype=np.int64) @ A @ np.asarray(y, dtype=np.int64))


def sign_rule(A, y) -> np.ndarray:
    s = np.asarray(A, dtype=np.int64) @ np.asarray(y, dtype=np.int64)
    return np.where(s > 0, 1, -1).astype(np.int64)


def gb_expected_weight_oracle(n: int) -> float:
    """``E|S_n|`` for a sum of ``n`` uniform signs: ``2 k C(n, k) / 2^n``, ``k = ceil(n/2)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n <= 30:
        tot = sum(math.comb(n, j) * abs(n - 2 * j) for j in range(n + 1))
        return tot / 2 ** n
    k = (n + 1) // 2
    log_val = math.log(2 * k) + math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) - n * math.log(2)
    return math.exp(log_val)


def brute_force_gb(A) -> tuple[int, np.ndarray]:
    """Optimum over all ``y`` with sign-rule ``x``; returns ``(I, y)`` first maximizer."""
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError("instance too large for brute force")
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    Y = 2 * bits - 1
    vals = np.abs(Y @ A.T).sum(axis=1)
    k = int(np.argmax(vals))
    return int(vals[k]), Y[k]


def build_row_counters(inst: GBInstance, B: int):
    """Counter bank and damped weights for all rows; symbol 0 is -1, symbol 1 is +1."""
    n = inst.n
    signs = np.array([-1, 1], dtype=np.int64)
    incs = [signs[:, None] * inst.A[:, t][None, :] for t in range(n)]
    bank = CounterBank(incs, B)
    W = np.tile(damped_weight(lambda c: np.abs(c).astype(np.float64), B), n)
    return bank, W


def run_gb(inst: GBInstance, cfg: GBConfig = GBConfig()) -> GBResult:
    n = inst.n
    eps = cfg.epsilon(n)
    delta = cfg.delta(n)
    B = span_for(1.0, float(n), n, delta, cfg.b_scale)
    space = ProbabilitySpace(tuple(StepDistribution.uniform([-1, 1]) for _ in range(n)))
    bank, W = build_row_counters(inst, B)
    starts = bank.start_states()
    V = exact_suffix_expectations(space, bank, W)
    # each DP step adds two products per state: 2 roundings per step
    beta = 2.0 * n * EPS64 * float(np.max(np.abs(W)))
    vhat = VhatProvider(V, beta)
    fcfg = FoolConfig(eps, C=cfg.C, size_cap=cfg.size_cap, workers=cfg.workers, vhat_mode="application-supplied")
    D, info = fool_detailed(space, bank, W, fcfg, vhat, starts=starts)

    variability = total_variability(space, bank, V, starts)
    n_pad = info.n
    expected = V[0][starts]
    certified_bound = float(np.sum(expected - eps * variability - 3.0 * beta * n_pad))

    live = D.entries[: D.num_real]
    Y = np.array([-1, 1], dtype=np.int64)[live[:, :n]]
    scores = np.abs(Y @ inst.A.T).sum(axis=1)
    k = best_entry(scores)
    y = Y[k]
    x = sign_rule(inst.A, y)
    I = imbalance(inst.A, x, y)

    finals = fold_states(bank, 0, live, starts)  # (|D|, rows)
    empirical = float(D.probs[: D.num_real] @ W[finals].sum(axis=1))
    return GBResult(
        x=x, y=y, imbalance=I, certified_bound=certified_bound, distribution_size=int(D.num_real),
        empirical_bound=empirical, expected_omega=float(expected.sum()), variability=variability,
        epsilon=eps, beta=beta, B=B, delta=delta, certified=info.certified, merges=info.merges,
    )
