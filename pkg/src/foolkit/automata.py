"""Automaton model, product probability spaces and drivestream distributions.

Conventions
-----------
* A drivestream over window ``(t, h)`` is stored as an integer array of
  symbol *indices*: entry ``j`` indexes the support of step ``t + j``.
* Automata consume symbol indices.  Steps at or beyond an automaton's
  ``horizon`` act as the identity, which is how power-of-two padding with
  singleton steps is realized.
* Every floating-point reduction runs in a fixed order (sequential over
  symbols / entries) so results never depend on scheduling.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .config import MAX_ENUMERATION, TOL


class Symbol(NamedTuple):
    """A symbol of step ``step_index``; ``index`` points into that step's support."""

    step_index: int
    index: int


@dataclass(frozen=True)
class StepDistribution:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64).reshape(-1)
        probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise ValueError("step distribution needs a non-empty support")
        if values.shape != probs.shape:
            raise ValueError("values and probs must have the same length")
        if np.unique(values).size != values.size:
            raise ValueError("symbol values must be unique within a step")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > TOL.prob_sum:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @classmethod
    def uniform(cls, values) -> "StepDistribution":
        values = np.asarray(values, dtype=np.int64)
        return cls(values, np.full(values.size, 1.0 / values.size))

    @classmethod
    def point(cls, value: int = 0) -> "StepDistribution":
        return cls(np.array([value]), np.array([1.0]))


@dataclass(frozen=True)
class ProbabilitySpace:
    """The product space of independent per-step symbol distributions."""

    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def sigma(self) -> int:
        return sum(s.size for s in self.steps)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.steps], dtype=np.int64)

    def total_drivestreams(self, t: int = 0, t_end: int | None = None) -> int:
        t_end = self.n if t_end is None else t_end
        out = 1
        for s in self.steps[t:t_end]:
            out *= s.size
        return out

    def padded(self) -> "ProbabilitySpace":
        """Append singleton steps until ``n`` is a power of two (n=0 -> 1)."""
        target = 1
        while target < self.n:
            target *= 2
        extra = [StepDistribution.point(0) for _ in range(target - self.n)]
        return ProbabilitySpace(self.steps + tuple(extra))

    @classmethod
    def uniform_bits(cls, n: int) -> "ProbabilitySpace":
        return cls(tuple(StepDistribution.uniform([0, 1]) for _ in range(n)))


def is_power_of_two(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


# ---------------------------------------------------------------------------
# Automata
# ---------------------------------------------------------------------------


class Automaton:
    """Deterministic automaton on states ``0..num_states-1``.

    Subclasses implement ``_next(t, sym, states)`` for ``t < horizon`` on
    broadcast-compatible integer arrays.
    """

    num_states: int
    horizon: int

    def next_states(self, t: int, sym, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        sym = np.asarray(sym, dtype=np.int64)
        if t >= self.horizon:
            return np.broadcast_to(states, np.broadcast_shapes(sym.shape, states.shape)).copy()
        return self._next(t, sym, states)

    def _next(self, t: int, sym: np.ndarray, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class TableAutomaton(Automaton):
    """Automaton given by explicit per-step tables ``tables[t][symbol, state]``."""

    def __init__(self, tables: Sequence[np.ndarray]):
        self.tables = [np.ascontiguousarray(tb, dtype=np.int64) for tb in tables]
        if not self.tables:
            raise ValueError("need at least one step table")
        self.num_states = int(self.tables[0].shape[1])
        for tb in self.tables:
            if tb.ndim != 2 or tb.shape[1] != self.num_states:
                raise ValueError("every table must have shape (symbols, num_states)")
            if tb.min() < 0 or tb.max() >= self.num_states:
                raise ValueError("transition output out of range")
        self.horizon = len(self.tables)

    def _next(self, t, sym, states):
        return self.tables[t][sym, states]

    @classmethod
    def from_function(cls, space: ProbabilitySpace, num_states: int, fn) -> "TableAutomaton":
        """Tabulate ``fn(t, value, state) -> state`` over the space's supports."""
        tables = []
        for t, step in enumerate(space.steps):
            tb = np.empty((step.size, num_states), dtype=np.int64)
            for j, val in enumerate(step.values):
                for s in range(num_states):
                    tb[j, s] = fn(t, int(val), s)
            tables.append(tb)
        return cls(tables)

    @classmethod
    def random(cls, space: ProbabilitySpace, num_states: int, rng: np.random.Generator) -> "TableAutomaton":
        return cls([rng.integers(0, num_states, size=(step.size, num_states)) for step in space.steps])


class ProductAutomaton(Automaton):
    """Disjoint union of automata reading the same stream; blocks never mix."""

    def __init__(self, blocks: Sequence[Automaton]):
        if not blocks:
            raise ValueError("need at least one block")
        self.blocks = list(blocks)
        sizes = [b.num_states for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.num_states = int(self.offsets[-1])
        self.horizon = max(b.horizon for b in self.blocks)

    def block_of(self, states) -> np.ndarray:
        return np.searchsorted(self.offsets, states, side="right") - 1

    def _next(self, t, sym, states):
        shape = np.broadcast_shapes(sym.shape, states.shape)
        states_b = np.broadcast_to(states, shape)
        sym_b = np.broadcast_to(sym, shape)
        out = np.empty(shape, dtype=np.int64)
        for b, blk in enumerate(self.blocks):
            lo, hi = self.offsets[b], self.offsets[b + 1]
            mask = (states_b >= lo) & (states_b < hi)
            if mask.any():
                out[mask] = blk.next_states(t, sym_b[mask], states_b[mask] - lo) + lo
        return out


def product_automaton(items: Sequence[tuple[Automaton, np.ndarray]], space: ProbabilitySpace | None = None):
    """Combine ``(automaton, weights)`` pairs into one automaton.

    Returns ``(automaton, weights, offsets)``.  With ``space`` given, each
    block's tables are checked against the space's alphabet sizes.
    """
    autos = [a for a, _ in items]
    if space is not None:
        for a in autos:
            if isinstance(a, TableAutomaton):
                for t, tb in enumerate(a.tables):
                    if t < space.n and tb.shape[0] != space.steps[t].size:
                        raise ValueError(f"alphabet mismatch at step {t}")
    weights = [np.asarray(w, dtype=np.float64) for _, w in items]
    for a, w in zip(autos, weights):
        if w.shape != (a.num_states,):
            raise ValueError("weight vector must cover every state of its block")
    prod = ProductAutomaton(autos)
    return prod, np.concatenate(weights), prod.offsets.copy()


def step(F: Automaton, s: int, r: Symbol, space: ProbabilitySpace | None = None) -> int:
    """Single validated transition ``F(r, s)``."""
    if not 0 <= s < F.num_states:
        raise ValueError(f"state {s} out of range [0, {F.num_states})")
    if r.step_index < 0 or r.index < 0:
        raise ValueError("negative symbol coordinates")
    if space is not None:
        if r.step_index >= space.n or r.index >= space.steps[r.step_index].size:
            raise ValueError("symbol not in the space")
    elif isinstance(F, TableAutomaton) and r.step_index < F.horizon:
        if r.index >= F.tables[r.step_index].shape[0]:
            raise ValueError("symbol index out of range")
    return int(F.next_states(r.step_index, r.index, s))


# ---------------------------------------------------------------------------
# Drivestreams and distributions over them
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Drivestream:
    start: int
    indices: np.ndarray

    @property
    def window(self) -> tuple[int, int]:
        return (self.start, int(len(self.indices)))

    def validate(self, space: ProbabilitySpace) -> None:
        t, h = self.window
        if t + h > space.n:
            raise ValueError("drivestream runs past the end of the space")
        for j, idx in enumerate(self.indices):
            step_ = space.steps[t + j]
            if not 0 <= idx < step_.size or step_.probs[idx] <= 0:
                raise ValueError(f"symbol {idx} at step {t + j} has zero probability")


@dataclass(frozen=True)
class DrivestreamDistribution:
    """Explicit distribution over drivestreams of window ``(start, horizon)``.

    ``entries[j]`` is a drivestream and ``probs[j]`` its probability.  The
    size is always a power of two; ``build`` appends zero-probability dummies.
    """

    start: int
    entries: np.ndarray
    probs: np.ndarray
    num_real: int = field(default=-1)

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.int64)
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != probs.shape[0]:
            raise ValueError("entries must be (size, horizon) matching probs")
        if not is_power_of_two(entries.shape[0]):
            raise ValueError("distribution size must be a power of two")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > TOL.prob_sum:
            raise ValueError("distribution probabilities must be >= 0 and sum to 1")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "probs", probs)
        if self.num_real < 0:
            object.__setattr__(self, "num_real", int(entries.shape[0]))

    @classmethod
    def build(cls, start: int, entries, probs) -> "DrivestreamDistribution":
        entries = np.asarray(entries, dtype=np.int64)
        probs = np.asarray(probs, dtype=np.float64)
        if entries.ndim == 1:
            entries = entries[:, None]
        k = entries.shape[0]
        if k == 0:
            raise ValueError("empty distribution")
        size = 1
        while size < k:
            size *= 2
        if size > k:
            pad = np.repeat(entries[:1], size - k, axis=0)
            entries = np.concatenate([entries, pad])
            probs = np.concatenate([probs, np.zeros(size - k)])
        return cls(start, entries, probs, num_real=k)

    @classmethod
    def from_step(cls, space: ProbabilitySpace, t: int) -> "DrivestreamDistribution":
        st = space.steps[t]
        return cls.build(t, np.arange(st.size)[:, None], st.probs)

    @classmethod
    def full(cls, space: ProbabilitySpace, t: int = 0, t_end: int | None = None) -> "DrivestreamDistribution":
        """Materialize ``Omega_{t, t_end}`` (test oracle; guarded)."""
        t_end = space.n if t_end is None else t_end
        if space.total_drivestreams(t, t_end) > MAX_ENUMERATION:
            raise ValueError("space too large to enumerate")
        steps = space.steps[t:t_end]
        idx = np.array(list(itertools.product(*[range(s.size) for s in steps])), dtype=np.int64)
        idx = idx.reshape(-1, len(steps))
        probs = np.ones(idx.shape[0])
        for j, s in enumerate(steps):
            probs = probs * s.probs[idx[:, j]]
        return cls.build(t, idx, probs)

    @property
    def horizon(self) -> int:
        return int(self.entries.shape[1])

    @property
    def window(self) -> tuple[int, int]:
        return (self.start, self.horizon)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @property
    def depth(self) -> int:
        return self.size.bit_length() - 1

    def drivestream(self, j: int) -> Drivestream:
        return Drivestream(self.start, self.entries[j].copy())

    def values(self, space: ProbabilitySpace) -> np.ndarray:
        """Symbol values, shape ``(size, horizon)``."""
        out = np.empty_like(self.entries)
        for j in range(self.horizon):
            out[:, j] = space.steps[self.start + j].values[self.entries[:, j]]
        return out

    def support_mask(self) -> np.ndarray:
        return self.probs > 0


def product_distribution(D1: DrivestreamDistribution, D2: DrivestreamDistribution) -> DrivestreamDistribution:
    """Materialize ``D1 x D2`` with D1 indices as the high-order bits."""
    if D1.start + D1.horizon != D2.start:
        raise ValueError("windows are not adjacent")
    a = np.repeat(np.arange(D1.size), D2.size)
    b = np.tile(np.arange(D2.size), D1.size)
    entries = np.concatenate([D1.entries[a], D2.entries[b]], axis=1)
    return DrivestreamDistribution(D1.start, entries, D1.probs[a] * D2.probs[b])


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


def fold_states(F: Automaton, start: int, entries: np.ndarray, states) -> np.ndarray:
    """``out[j, k] = F(entries[j], states[k])`` by a left-to-right fold."""
    entries = np.asarray(entries, dtype=np.int64)
    states = np.asarray(states, dtype=np.int64)
    cur = np.broadcast_to(states[None, :], (entries.shape[0], states.size))
    for j in range(entries.shape[1]):
        cur = F.next_states(start + j, entries[:, j : j + 1], cur)
    return np.ascontiguousarray(cur)


def state_map(F: Automaton, rvec: Drivestream) -> np.ndarray:
    """All final states ``F(rvec, s)`` by recursive-doubling composition."""
    t, h = rvec.window
    all_states = np.arange(F.num_states, dtype=np.int64)
    if h == 0:
        return all_states
    maps = [F.next_states(t + j, int(rvec.indices[j]), all_states) for j in range(h)]
    while len(maps) > 1:
        merged = [maps[k + 1][maps[k]] for k in range(0, len(maps) - 1, 2)]
        if len(maps) % 2:
            merged.append(maps[-1])
        maps = merged
    return maps[0]


@dataclass(frozen=True)
class TransitionMatrix:
    rows: np.ndarray
    window: tuple

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > TOL.row_sum):
            raise ValueError("transition matrix must be row-stochastic")
        object.__setattr__(self, "rows", rows)


def transition_matrix(F: Automaton, D: DrivestreamDistribution) -> TransitionMatrix:
    states = np.arange(F.num_states)
    finals = fold_states(F, D.start, D.entries, states)
    T = np.zeros((F.num_states, F.num_states))
    for j in range(D.size):
        if D.probs[j] > 0:
            T[states, finals[j]] += D.probs[j]
    return TransitionMatrix(T, D.window)


def expected_weight(T: TransitionMatrix, s: int, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (T.rows.shape[1],):
        raise ValueError("weight vector dimension mismatch")
    return float(np.dot(T.rows[s], w))


def distribution_expectation(F: Automaton, D: DrivestreamDistribution, w, states=None) -> np.ndarray:
    """``T_D(s, w)`` for each requested state (default: all states)."""
    w = np.asarray(w, dtype=np.float64)
    states = np.arange(F.num_states) if states is None else np.asarray(states, dtype=np.int64)
    finals = fold_states(F, D.start, D.entries, states)
    out = np.zeros(states.size)
    for j in range(D.size):
        if D.probs[j] > 0:
            out += D.probs[j] * w[finals[j]]
    return out


def exact_suffix_expectations(space: ProbabilitySpace, F: Automaton, W) -> np.ndarray:
    """Backward DP: ``V[t, s] = sum_r p_t(r) V[t+1, F(r, s)]``, ``V[n] = W``."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (F.num_states,):
        raise ValueError("final weight must cover all states")
    states = np.arange(F.num_states)
    V = np.empty((space.n + 1, F.num_states))
    V[space.n] = W
    for t in range(space.n - 1, -1, -1):
        st = space.steps[t]
        acc = np.zeros(F.num_states)
        for j in range(st.size):
            if st.probs[j] > 0:
                acc += st.probs[j] * V[t + 1][F.next_states(t, j, states)]
        V[t] = acc
    return V


def reachable_sets(space: ProbabilitySpace, F: Automaton, starts) -> list[np.ndarray]:
    """Sorted arrays of states reachable at each time ``0..n`` from ``starts``."""
    cur = np.unique(np.asarray(starts, dtype=np.int64))
    out = [cur]
    for t in range(space.n):
        if t < F.horizon:
            syms = np.flatnonzero(space.steps[t].probs > 0)
            cur = np.unique(np.concatenate([F.next_states(t, j, cur) for j in syms]))
        out.append(cur)
    return out


def _spread(space: ProbabilitySpace, F: Automaton, V: np.ndarray, t: int, states: np.ndarray) -> np.ndarray:
    syms = np.flatnonzero(space.steps[t].probs > 0)
    first = V[t + 1][F.next_states(t, syms[0], states)]
    lo, hi = first.copy(), first
    for j in syms[1:]:
        x = V[t + 1][F.next_states(t, j, states)]
        lo = np.minimum(lo, x)
        hi = np.maximum(hi, x)
    return hi - lo


def confusion_vectors(space: ProbabilitySpace, F: Automaton, V: np.ndarray) -> np.ndarray:
    """``C[t, s]``: spread of ``V[t+1](F(r, s))`` over symbols ``r`` of step ``t``."""
    states = np.arange(F.num_states)
    return np.stack([_spread(space, F, V, t, states) for t in range(space.n)]) if space.n else np.zeros((0, F.num_states))


def total_variability(space: ProbabilitySpace, F: Automaton, V: np.ndarray, starts) -> np.ndarray:
    """Total variability of each start state, reachability taken on ``F`` itself.

    Confusion is only evaluated on states reachable from some start.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1)
    per_start = [reachable_sets(space, F, [s]) for s in starts]
    out = np.zeros(starts.size)
    for t in range(space.n):
        union = np.unique(np.concatenate([r[t] for r in per_start])) if starts.size else np.zeros(0, np.int64)
        C_t = _spread(space, F, V, t, union) if union.size else union.astype(np.float64)
        for i, r in enumerate(per_start):
            out[i] += float(C_t[np.searchsorted(union, r[t])].max())
    return out


@dataclass(frozen=True)
class AnalysisMetrics:
    lipschitz: np.ndarray    # (num_states, n)
    confusion: np.ndarray    # (num_states, n)
    variability: np.ndarray  # (num_states,)


def analysis_metrics(space: ProbabilitySpace, F: Automaton, W, max_drivestreams: int = MAX_ENUMERATION) -> AnalysisMetrics:
    """Exhaustive Lipschitz / confusion / variability oracle (test-only)."""
    if space.total_drivestreams() > max_drivestreams:
        raise ValueError("space too large for the exhaustive metrics oracle")
    W = np.asarray(W, dtype=np.float64)
    eta, n = F.num_states, space.n
    states = np.arange(eta)
    V = exact_suffix_expectations(space, F, W)
    lip = np.zeros((eta, n))
    for t in range(n):
        syms = np.flatnonzero(space.steps[t].probs > 0)
        after = F.next_states(t, syms[:, None], states[None, :])  # (k, eta)
        if t + 1 < n:
            suffix = DrivestreamDistribution.full(space, t + 1)
            live = suffix.entries[: suffix.num_real][suffix.probs[: suffix.num_real] > 0]
            fin = W[fold_states(F, t + 1, live, states)]  # (suffixes, eta)
        else:
            fin = W[None, :]
        vals = fin[:, after]  # (suffixes, k, eta)
        lip[:, t] = (vals.max(axis=1) - vals.min(axis=1)).max(axis=0)
    conf = confusion_vectors(space, F, V).T.copy()
    var = total_variability(space, F, V, list(range(eta)))
    return AnalysisMetrics(lip, conf, var)
