"""Truncated counter automata.

A counter tracks ``sum_t f_t(r_t)`` relative to integer anchors
``a_t = round(sum_{i<=t} mu_i)`` (ties to even).  The truncated version keeps
only offsets in ``[-B, B]`` plus an absorbing reject state; offset ``c`` has
state index ``c + B`` and reject has index ``2B + 1``.

``CounterBank`` runs many such counters side by side on one stream, which is
how the applications fool all rows at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .automata import Automaton, ProbabilitySpace, exact_suffix_expectations

TRUTHFUL_GUARD = 1_000_000


def round_half_even(x):
    return np.rint(np.asarray(x, dtype=np.float64)).astype(np.int64)


def span_for(M: float, kappa: float, n: int, delta: float, b_scale: float) -> int:
    """``ceil(b_scale (1 + M + sqrt(kappa)) ln(n / delta))``, at least 1."""
    return max(1, math.ceil(b_scale * (1.0 + M + math.sqrt(kappa)) * math.log(max(n, 1) / delta)))


@dataclass(frozen=True)
class CounterSpec:
    f: tuple            # per step: int array over the step's support
    probs: tuple        # per step: probabilities (copied from the space)
    delta: float
    b_scale: float
    B: int
    mu: np.ndarray
    M_t: np.ndarray
    M: float
    kappa: float
    anchors: np.ndarray  # a_0 .. a_{n-1}

    @classmethod
    def build(cls, space: ProbabilitySpace, f, delta: float, b_scale: float = 100.0, B: int | None = None):
        """``f[t]`` lists ``f_t`` over step ``t``'s support; ``B`` defaults to the span formula."""
        f = tuple(np.asarray(ft, dtype=np.int64) for ft in f)
        if len(f) != space.n:
            raise ValueError("need one f table per step")
        probs = tuple(st.probs for st in space.steps)
        for ft, p in zip(f, probs):
            if ft.shape != p.shape:
                raise ValueError("f table does not match the step support")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        mu = np.array([float(np.dot(p, ft)) for ft, p in zip(f, probs)])
        var = np.array([float(np.dot(p, (ft - m) ** 2)) for ft, p, m in zip(f, probs, mu)])
        M_t = np.array([float(np.max(np.abs(ft[p > 0] - m))) for ft, p, m in zip(f, probs, mu)])
        M = float(M_t.max()) if M_t.size else 0.0
        kappa = float(var.sum())
        span = span_for(M, kappa, space.n, delta, b_scale)
        if B is not None:
            if B < span:
                raise ValueError(f"B={B} is below the span formula value {span}")
            span = int(B)
        anchors = round_half_even(np.cumsum(mu)) if mu.size else np.zeros(0, dtype=np.int64)
        return cls(f, probs, delta, b_scale, span, mu, M_t, M, kappa, anchors)

    @property
    def n(self) -> int:
        return len(self.f)

    def increments(self) -> list[np.ndarray]:
        """Per-step offset increments ``f_t(r) - a_t + a_{t-1}``."""
        prev = np.concatenate([[0], self.anchors[:-1]])
        return [ft - (a - ap) for ft, a, ap in zip(self.f, self.anchors, prev)]


class CounterBank(Automaton):
    """``rows`` truncated counters of span ``B``; row ``i`` owns a block of ``2B+2`` states.

    ``increments[t]`` has shape ``(symbols_t, rows)``.
    """

    def __init__(self, increments, B: int):
        self.B = int(B)
        self.increments = [np.ascontiguousarray(x, dtype=np.int64) for x in increments]
        self.rows = int(self.increments[0].shape[1]) if self.increments else 1
        self.width = 2 * self.B + 2
        self.num_states = self.rows * self.width
        self.horizon = len(self.increments)

    @property
    def bottom(self) -> int:
        return 2 * self.B + 1

    def start_states(self) -> np.ndarray:
        """Offset 0 of every row."""
        return np.arange(self.rows, dtype=np.int64) * self.width + self.B

    def _next(self, t, sym, states):
        row = states // self.width
        local = states - row * self.width
        inc = self.increments[t][sym, row]
        nc = local + inc  # index space: offset + B
        dead = (local == self.bottom) | (nc < 0) | (nc > 2 * self.B)
        return row * self.width + np.where(dead, self.bottom, nc)

    def offsets(self) -> np.ndarray:
        """Offset per local index; reject is marked with a huge sentinel."""
        c = np.arange(self.width, dtype=np.int64) - self.B
        c[self.bottom] = np.iinfo(np.int64).max // 4
        return c


def build_truncated(spec: CounterSpec) -> CounterBank:
    return CounterBank([inc[:, None] for inc in spec.increments()], spec.B)


class TruthfulCounter(Automaton):
    """Exact offset counter on ``[-K, K]`` (index ``c + K``), no reject state.

    With ``K`` from ``build_truthful`` no walk started in ``[-B, B]`` at any
    time reaches the edge; transitions out of range clamp so that DP sweeps
    over all states stay defined on the unreachable corners.
    """

    def __init__(self, increments, K: int):
        self.K = int(K)
        self.increments = [np.asarray(x, dtype=np.int64) for x in increments]
        self.num_states = 2 * self.K + 1
        self.horizon = len(self.increments)

    def _next(self, t, sym, states):
        return np.clip(states + self.increments[t][sym], 0, self.num_states - 1)

    def offsets(self) -> np.ndarray:
        return np.arange(self.num_states, dtype=np.int64) - self.K


def build_truthful(spec: CounterSpec, guard: int = TRUTHFUL_GUARD) -> TruthfulCounter:
    """Covers every offset reachable from any start in ``[-B, B]``."""
    incs = spec.increments()
    K = spec.B + int(sum(int(np.max(np.abs(x))) for x in incs))
    if 2 * K + 1 > guard:
        raise ValueError("truthful counter exceeds the memory guard")
    return TruthfulCounter(incs, K)


def potential(c, B: int):
    """Damping in [0, 1]: 1 for |c| <= B/3, 0 for |c| >= 2B/3 or reject (``None``)."""
    if c is None:
        return 0.0
    a = np.abs(np.asarray(c, dtype=np.float64))
    # (2B/3 - |c|) / (B/3) written without divisions by 3
    val = np.clip((2.0 * B - 3.0 * a) / B, 0.0, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def potential_on_offsets(offsets: np.ndarray, B: int) -> np.ndarray:
    """``potential`` over offsets; anything with |c| > B counts as reject."""
    phi = potential(offsets, B)
    return np.where(np.abs(offsets) > B, 0.0, phi)


def damped_weight(W, spec_or_B) -> np.ndarray:
    """``W~(c) = potential(c) W(c)`` on truncated states, ``W~(reject) = 0``.

    ``W`` is a vectorized callable on integer offsets.
    """
    B = spec_or_B.B if isinstance(spec_or_B, CounterSpec) else int(spec_or_B)
    c = np.arange(-B, B + 1)
    out = np.zeros(2 * B + 2)
    out[: 2 * B + 1] = potential(c, B) * np.asarray(W(c), dtype=np.float64)
    return out


def damped_weight_truthful(W, B: int, truthful: TruthfulCounter) -> np.ndarray:
    c = truthful.offsets()
    return potential_on_offsets(c, B) * np.asarray(W(c), dtype=np.float64)


def measure_escape(spec: CounterSpec, samples: int, rng: np.random.Generator, frac: float = 0.15):
    """Monte Carlo of ``P(some window sum of f - mu reaches frac * B)``.

    Returns ``(p_hat, p_hat + 3 sigma)`` with ``sigma`` floored at one
    success so a zero count still carries sampling slack.
    """
    n = spec.n
    walk = np.zeros((samples, n + 1))
    for t in range(n):
        p = spec.probs[t]
        idx = rng.choice(p.size, size=samples, p=p)
        walk[:, t + 1] = walk[:, t] + (spec.f[t][idx] - spec.mu[t])
    rng_width = walk.max(axis=1) - walk.min(axis=1)
    p_hat = float(np.mean(rng_width >= frac * spec.B))
    sigma = math.sqrt(max(p_hat, 1.0 / samples) * (1.0 - p_hat) / samples)
    return p_hat, min(1.0, p_hat + 3.0 * sigma)


@dataclass(frozen=True)
class TruncationReport:
    B: int
    Delta: float
    Delta_tilde: float
    gap_a: float          # max_{t,|c|<=B} |T~_{t,n}(c,W~) - T_{t,n}(c,W~)|
    gap_b: float          # |T~_{0,n}(0,W~) - T_{0,n}(0,W)|
    confusion: np.ndarray  # (n, 2B+1) for the truncated automaton and W~
    lipschitz: np.ndarray  # (n, 2B+1) for the truthful automaton and W
    bound_c: np.ndarray    # lipschitz + 2 Delta delta + 6 Delta~ M_t / B

    def worst_c_excess(self) -> float:
        return float(np.max(self.confusion - self.bound_c))


def _reachable_suffix_offsets(incs, probs, t_from: int, width: int):
    """Boolean sets of sums of increments over steps ``t_from..n-1`` (index shift ``width``)."""
    cur = np.zeros(2 * width + 1, dtype=bool)
    cur[width] = True
    for t in range(len(incs) - 1, t_from - 1, -1):
        vals = incs[t][probs[t] > 0]
        nxt = np.zeros_like(cur)
        for v in vals:
            nxt |= np.roll(cur, int(v))
        cur = nxt
    return cur


def truncation_error_report(spec: CounterSpec, space: ProbabilitySpace, W, delta: float | None = None,
                            guard: int = TRUTHFUL_GUARD) -> TruncationReport:
    """Exact-DP comparison of truncated vs truthful counters.

    ``W`` is a vectorized callable on offsets; ``delta`` defaults to the
    counter's own (use a measured escape probability at relaxed spans).
    """
    delta = spec.delta if delta is None else delta
    B = spec.B
    Ft = build_truncated(spec)
    Ff = build_truthful(spec, guard)
    Wt = damped_weight(W, spec)
    Wf_damped = damped_weight_truthful(W, B, Ff)
    Wf = np.asarray(W(Ff.offsets()), dtype=np.float64)
    Vt = exact_suffix_expectations(space, Ft, Wt)
    Vfd = exact_suffix_expectations(space, Ff, Wf_damped)
    Vf = exact_suffix_expectations(space, Ff, Wf)
    idx_t = np.arange(2 * B + 1)
    idx_f = idx_t + (Ff.K - B)
    gap_a = float(np.max(np.abs(Vt[:, idx_t] - Vfd[:, idx_f])))
    gap_b = float(abs(Vt[0, B] - Vf[0, Ff.K]))
    Delta = float(np.max(np.abs(Wf)))
    near = np.abs(Ff.offsets()) <= 2 * B
    Delta_tilde = float(np.max(np.abs(Wf[near])))

    n = spec.n
    incs = spec.increments()
    conf = np.zeros((n, 2 * B + 1))
    lip = np.zeros((n, 2 * B + 1))
    width = Ff.K
    for t in range(n):
        syms = np.flatnonzero(spec.probs[t] > 0)
        nxt = Ft.next_states(t, syms[:, None], idx_t[None, :])
        vals = Vt[t + 1][nxt]
        conf[t] = vals.max(axis=0) - vals.min(axis=0)
        # Lipschitz of the truthful automaton: vary step t, fix any suffix
        suf = np.flatnonzero(_reachable_suffix_offsets(incs, spec.probs, t + 1, width)) - width
        c = np.arange(-B, B + 1)
        for a in syms:
            for b in syms:
                if b <= a:
                    continue
                z1 = c[:, None] + incs[t][a] + suf[None, :]
                z2 = c[:, None] + incs[t][b] + suf[None, :]
                d = np.abs(np.asarray(W(z1), dtype=np.float64) - np.asarray(W(z2), dtype=np.float64))
                lip[t] = np.maximum(lip[t], d.max(axis=1))
    bound_c = lip + 2.0 * Delta * delta + 6.0 * Delta_tilde * spec.M_t[:, None] / B
    return TruncationReport(B, Delta, Delta_tilde, gap_a, gap_b, conf, lip, bound_c)
