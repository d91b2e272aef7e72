"""Prefix-probability / prefix-expectation structures over drivestream distributions.

A distribution of size ``2**depth`` is viewed as a complete binary tree whose
leaf ``j`` is entry ``j``.  A bitstring ``b`` of length ``i`` addresses the
node of level ``i`` with index ``int(b, 2)``; ``D[b*]`` is the conditional
distribution on its subtree.  Zero-probability nodes report expectation 0.
"""
from __future__ import annotations

import numpy as np

from .automata import Automaton, DrivestreamDistribution, fold_states


def _state_lookup(num_states: int, states: np.ndarray) -> np.ndarray:
    pos = np.full(num_states, -1, dtype=np.int64)
    pos[states] = np.arange(states.size)
    return pos


def _build_levels(probs: np.ndarray, leaf_values: np.ndarray):
    """Level-indexed probabilities and conditional expectations, leaves up.

    Each internal node combines exactly its two children, so the summation
    order is fixed by the tree shape.
    """
    depth = probs.size.bit_length() - 1
    P = [None] * (depth + 1)
    Tn = [None] * (depth + 1)
    P[depth] = probs.copy()
    leaf = leaf_values * (probs > 0)[:, None]
    Tn[depth] = leaf
    mass = probs[:, None] * leaf
    for i in range(depth - 1, -1, -1):
        p = P[i + 1][0::2] + P[i + 1][1::2]
        mass = mass[0::2] + mass[1::2]
        with np.errstate(invalid="ignore", divide="ignore"):
            T = np.where(p[:, None] > 0, mass / np.where(p > 0, p, 1.0)[:, None], 0.0)
        P[i] = p
        Tn[i] = T
    return P, Tn


class PredictionStructure:
    """Answers ``p_D(b*)`` and ``T_{D[b*]}(s, w)`` for states in ``states``."""

    def __init__(self, depth: int, states: np.ndarray, num_states: int):
        self.depth = int(depth)
        self.states = np.asarray(states, dtype=np.int64)
        self._pos = _state_lookup(num_states, self.states)

    # -- vectorized interface -------------------------------------------
    def probs_at(self, level: int, idx) -> np.ndarray:
        raise NotImplementedError

    def expect_at(self, level: int, idx) -> np.ndarray:
        """Shape ``(len(idx), len(states))``."""
        raise NotImplementedError

    def root_expect(self) -> np.ndarray:
        return self.expect_at(0, np.zeros(1, dtype=np.int64))[0]

    def entries_at(self, idx) -> np.ndarray:
        """Drivestreams (symbol indices) of leaves ``idx``."""
        raise NotImplementedError

    def support(self):
        """``(leaf indices, probs)`` of the positive-probability leaves, in index order."""
        raise NotImplementedError

    def column(self, s: int) -> int:
        if not 0 <= s < self._pos.size or self._pos[s] < 0:
            raise KeyError(f"state {s} not tracked by this structure")
        return int(self._pos[s])

    def _check(self, level: int, idx: np.ndarray):
        if not 0 <= level <= self.depth:
            raise ValueError(f"bitstring length {level} exceeds depth {self.depth}")
        if idx.size and (idx.min() < 0 or idx.max() >= (1 << level)):
            raise ValueError("prefix index out of range")


class GenericPrediction(PredictionStructure):
    """Dense level arrays built from the explicit distribution."""

    def __init__(self, probs: np.ndarray, leaf_values: np.ndarray, states: np.ndarray, num_states: int,
                 entries: np.ndarray | None = None, start: int = 0):
        super().__init__(probs.size.bit_length() - 1, states, num_states)
        self._P, self._T = _build_levels(np.asarray(probs, dtype=np.float64), np.asarray(leaf_values, dtype=np.float64))
        self.entries = entries
        self.start = start

    def entries_at(self, idx):
        return self.entries[np.asarray(idx, dtype=np.int64)]

    def support(self):
        leaves = self._P[self.depth]
        idx = np.flatnonzero(leaves > 0)
        return idx, leaves[idx]

    def probs_at(self, level, idx):
        idx = np.asarray(idx, dtype=np.int64)
        self._check(level, idx)
        return self._P[level][idx]

    def expect_at(self, level, idx):
        idx = np.asarray(idx, dtype=np.int64)
        self._check(level, idx)
        return self._T[level][idx]

    def level_probs(self, level: int) -> np.ndarray:
        return self._P[level]

    def level_expect(self, level: int) -> np.ndarray:
        return self._T[level]


class ProductPrediction(PredictionStructure):
    """Virtual structure for ``D1 x D2``; the product is never materialized.

    Levels up to ``lg|D1|`` come from a structure over D1 whose leaf weight is
    ``w2(s) = T_{D2}(s, w)``; deeper levels combine a D1 leaf with a D2 node.
    """

    def __init__(self, D1, D2, F: Automaton, w, states):
        if D1.start + D1.horizon != D2.start:
            raise ValueError("windows are not adjacent")
        states = np.asarray(states, dtype=np.int64)
        super().__init__(D1.depth + D2.depth, states, F.num_states)
        self.depth1 = D1.depth
        self.p1 = D1.probs
        finals1 = fold_states(F, D1.start, D1.entries, states)  # (|D1|, S)
        mids = np.unique(finals1)
        self.mid_states = mids
        self._mid_idx = np.searchsorted(mids, finals1)
        self.q2 = build_generic(D2, F, w, mids)
        w2 = self.q2.root_expect()
        self.q1 = GenericPrediction(D1.probs, w2[self._mid_idx], states, F.num_states)
        self.materialized_entries = D1.size + D2.size
        self.start = D1.start
        self._e1 = D1.entries
        self._e2 = D2.entries
        self._p2 = D2.probs

    def entries_at(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        k = self.depth - self.depth1
        return np.concatenate([self._e1[idx >> k], self._e2[idx & ((1 << k) - 1)]], axis=1)

    def support(self):
        a = np.flatnonzero(self.p1 > 0)
        b = np.flatnonzero(self._p2 > 0)
        k = self.depth - self.depth1
        idx = ((a[:, None] << k) | b[None, :]).reshape(-1)
        return idx, (self.p1[a][:, None] * self._p2[b][None, :]).reshape(-1)

    def probs_at(self, level, idx):
        idx = np.asarray(idx, dtype=np.int64)
        self._check(level, idx)
        if level <= self.depth1:
            return self.q1.probs_at(level, idx)
        k = level - self.depth1
        return self.p1[idx >> k] * self.q2.probs_at(k, idx & ((1 << k) - 1))

    def expect_at(self, level, idx):
        idx = np.asarray(idx, dtype=np.int64)
        self._check(level, idx)
        if level <= self.depth1:
            return self.q1.expect_at(level, idx)
        k = level - self.depth1
        b1 = idx >> k
        b2 = idx & ((1 << k) - 1)
        T2 = self.q2.expect_at(k, b2)  # (len, |mids|)
        out = np.take_along_axis(T2, self._mid_idx[b1], axis=1)
        alive = (self.p1[b1] > 0) & (self.q2.probs_at(k, b2) > 0)
        return out * alive[:, None]


def build_generic(D: DrivestreamDistribution, F: Automaton, w, states=None) -> GenericPrediction:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (F.num_states,):
        raise ValueError("weight vector must cover all states")
    states = np.arange(F.num_states) if states is None else np.asarray(states, dtype=np.int64)
    finals = fold_states(F, D.start, D.entries, states)
    return GenericPrediction(D.probs, w[finals], states, F.num_states, D.entries, D.start)


def build_product(D1, D2, F: Automaton, w, states=None) -> ProductPrediction:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (F.num_states,):
        raise ValueError("weight vector must cover all states")
    states = np.arange(F.num_states) if states is None else states
    return ProductPrediction(D1, D2, F, w, states)


def _parse_bits(b) -> tuple[int, int]:
    if isinstance(b, str):
        if b and set(b) - {"0", "1"}:
            raise ValueError("bitstring must contain only 0/1")
        return len(b), (int(b, 2) if b else 0)
    bits = list(b)
    idx = 0
    for x in bits:
        if x not in (0, 1):
            raise ValueError("bitstring must contain only 0/1")
        idx = 2 * idx + x
    return len(bits), idx


def query_prob(Q: PredictionStructure, b) -> float:
    level, idx = _parse_bits(b)
    return float(Q.probs_at(level, np.array([idx]))[0])


def query_expect(Q: PredictionStructure, b, s: int) -> float:
    level, idx = _parse_bits(b)
    return float(Q.expect_at(level, np.array([idx]))[0, Q.column(s)])
