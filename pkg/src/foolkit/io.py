"""Whitespace-separated text formats; every parser has an exact inverse writer.

Floats are written with ``repr`` (shortest round-trip), so ``parse(write(x))``
reproduces ``x`` bit for bit.

Formats:

* GB matrix: ``n`` then ``n`` rows of ``n`` entries in ``{-1, 1}``.
* Graph: ``n m`` then ``m`` lines ``i j w``.
* SDP embedding: one vector per line (``n`` lines).
* LAP instance: ``m n``, ``m`` rows of ``A``, then one line with ``u``.
* Space: ``n``, then per step a line of values and a line of probabilities.
* Automaton: ``eta``, a line with ``W``, then for each step ``t`` and each of
  its symbols one line of ``eta`` next-state indices.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .automata import ProbabilitySpace, StepDistribution, TableAutomaton


def _lines(text: str) -> list[list[str]]:
    out = []
    for raw in text.splitlines():
        raw = raw.split("#", 1)[0].strip()
        if raw:
            out.append(raw.split())
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def _read(src) -> str:
    if isinstance(src, Path):
        return src.read_text()
    if isinstance(src, str) and "\n" not in src and Path(src).exists():
        return Path(src).read_text()
    return str(src)


class FormatError(ValueError):
    pass


def _expect(cond: bool, msg: str):
    if not cond:
        raise FormatError(msg)


# -- Gale-Berlekamp -----------------------------------------------------------

def parse_gb(src) -> np.ndarray:
    rows = _lines(_read(src))
    _expect(len(rows) >= 1 and len(rows[0]) == 1, "GB header must be a single integer n")
    n = int(rows[0][0])
    _expect(len(rows) == n + 1, f"expected {n} matrix rows")
    A = np.array([[int(x) for x in r] for r in rows[1:]], dtype=np.int64)
    _expect(A.shape == (n, n), "matrix must be n x n")
    return A


def write_gb(A) -> str:
    A = np.asarray(A, dtype=np.int64)
    return "\n".join([str(A.shape[0])] + [" ".join(str(int(x)) for x in r) for r in A]) + "\n"


# -- graphs and embeddings ------------------------------------------------------

def parse_graph(src) -> tuple[int, list[tuple[int, int, float]]]:
    rows = _lines(_read(src))
    _expect(len(rows) >= 1 and len(rows[0]) == 2, "graph header must be 'n m'")
    n, m = int(rows[0][0]), int(rows[0][1])
    _expect(len(rows) == m + 1, f"expected {m} edge lines")
    edges = []
    for r in rows[1:]:
        _expect(len(r) == 3, "edge lines are 'i j w'")
        i, j, w = int(r[0]), int(r[1]), float(r[2])
        _expect(0 <= i < n and 0 <= j < n, "edge endpoint out of range")
        edges.append((i, j, w))
    return n, edges


def write_graph(n: int, edges) -> str:
    lines = [f"{n} {len(edges)}"] + [f"{int(i)} {int(j)} {_fmt(w)}" for i, j, w in edges]
    return "\n".join(lines) + "\n"


def parse_sdp(src) -> np.ndarray:
    rows = _lines(_read(src))
    _expect(len(rows) >= 1, "empty embedding file")
    V = np.array([[float(x) for x in r] for r in rows])
    _expect(V.ndim == 2, "all vectors must have the same length")
    return V


def write_sdp(V) -> str:
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    return "\n".join(" ".join(_fmt(x) for x in r) for r in V) + "\n"


# -- lattice approximation ------------------------------------------------------

def parse_lap(src) -> tuple[np.ndarray, np.ndarray]:
    rows = _lines(_read(src))
    _expect(len(rows) >= 1 and len(rows[0]) == 2, "LAP header must be 'm n'")
    m, n = int(rows[0][0]), int(rows[0][1])
    _expect(len(rows) == m + 2, f"expected {m} rows and a u line")
    A = np.array([[float(x) for x in r] for r in rows[1 : m + 1]]).reshape(m, n)
    u = np.array([float(x) for x in rows[m + 1]])
    _expect(u.shape == (n,), "u must have n entries")
    return A, u


def write_lap(A, u) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    lines = [f"{A.shape[0]} {A.shape[1]}"] + [" ".join(_fmt(x) for x in r) for r in A]
    lines.append(" ".join(_fmt(x) for x in np.asarray(u, dtype=np.float64)))
    return "\n".join(lines) + "\n"


# -- spaces and automata --------------------------------------------------------

def parse_space(src) -> ProbabilitySpace:
    rows = _lines(_read(src))
    _expect(len(rows) >= 1 and len(rows[0]) == 1, "space header must be a single integer n")
    n = int(rows[0][0])
    _expect(len(rows) == 2 * n + 1, f"expected {n} value/probability line pairs")
    steps = []
    for t in range(n):
        vals = [int(x) for x in rows[1 + 2 * t]]
        probs = [float(x) for x in rows[2 + 2 * t]]
        steps.append(StepDistribution(np.array(vals), np.array(probs)))
    return ProbabilitySpace(tuple(steps))


def write_space(space: ProbabilitySpace) -> str:
    lines = [str(space.n)]
    for st in space.steps:
        lines.append(" ".join(str(int(v)) for v in st.values))
        lines.append(" ".join(_fmt(p) for p in st.probs))
    return "\n".join(lines) + "\n"


def parse_automaton(src, space: ProbabilitySpace) -> tuple[TableAutomaton, np.ndarray]:
    rows = _lines(_read(src))
    _expect(len(rows) >= 2 and len(rows[0]) == 1, "automaton header must be a single integer eta")
    eta = int(rows[0][0])
    W = np.array([float(x) for x in rows[1]])
    _expect(W.shape == (eta,), "W must have eta entries")
    need = sum(st.size for st in space.steps)
    _expect(len(rows) == 2 + need, f"expected {need} transition lines")
    tables = []
    k = 2
    for st in space.steps:
        tb = np.array([[int(x) for x in rows[k + j]] for j in range(st.size)], dtype=np.int64)
        _expect(tb.shape == (st.size, eta), "transition lines must have eta entries")
        tables.append(tb)
        k += st.size
    return TableAutomaton(tables), W


def write_automaton(F: TableAutomaton, W) -> str:
    W = np.asarray(W, dtype=np.float64)
    lines = [str(F.num_states), " ".join(_fmt(x) for x in W)]
    for tb in F.tables:
        lines.extend(" ".join(str(int(x)) for x in row) for row in tb)
    return "\n".join(lines) + "\n"
