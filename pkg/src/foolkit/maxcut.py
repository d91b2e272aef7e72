"""MAX-CUT by derandomized hyperplane rounding of an SDP embedding.

The Gaussian direction is replaced by a quantized, truncated one: coordinate
``k`` takes the value ``k_sym * gamma`` with ``|k_sym| <= R / gamma``.  Vertex
``i`` lands on the side ``v_i * r >= 0`` where ``*`` is the rounded inner
product ``gamma * sum_k round(v_ik r_k / gamma)``.  Each edge gets a pair of
truncated counters and a damped weight that is positive only on cut states;
fooling all edge automata at once and searching the small distribution for
the best cut derandomizes the rounding.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.special import ndtr

from .automata import (
    Automaton,
    ProbabilitySpace,
    StepDistribution,
    fold_states,
    total_variability,
)
from .config import EPS64, TOL
from .counters import potential, round_half_even, span_for
from .fool import FoolConfig, VhatProvider, best_entry, fool_detailed

BRUTE_FORCE_MAX_N = 22
DEFAULT_FFT_THRESHOLD = 4096
CONV_GUARD = 50_000_000  # max cells of one convolution output


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantizationParams:
    epsilon: float
    n: int          # number of coordinates (steps)
    C: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n < 1:
            raise ValueError("need at least one coordinate")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.R < 1.0:
            raise ValueError(f"R = {self.R} < 1; raise C or lower epsilon")

    @property
    def log_term(self) -> float:
        return math.log(self.n / self.epsilon)

    @property
    def gamma(self) -> float:
        return self.epsilon / (self.C * math.sqrt(self.n * self.log_term))

    @property
    def R(self) -> float:
        return self.C * self.log_term

    @property
    def K(self) -> int:
        """Largest symbol: multiples ``k * gamma`` with ``|k| <= K`` lie in ``[-R, R]``."""
        return int(math.floor(self.R / self.gamma))


def gaussian_alphabet(params: QuantizationParams) -> StepDistribution:
    """Symbols ``-K..K``; mass of ``k`` is the normal mass rounding to ``k gamma``.

    Rounding cells are clipped to ``[-R, R]``; the tail ``|X| > R`` goes to 0.
    """
    K, g, R = params.K, params.gamma, params.R
    ks = np.arange(1, K + 1, dtype=np.float64)
    lo = (ks - 0.5) * g
    hi = np.minimum((ks + 0.5) * g, R)
    hi[-1] = R
    # upper-tail differences keep precision far from the origin
    pos = np.maximum(ndtr(-lo) - ndtr(-hi), 0.0)
    zero = 1.0 - 2.0 * pos.sum()
    probs = np.concatenate([pos[::-1], [zero], pos])
    values = np.arange(-K, K + 1, dtype=np.int64)
    return StepDistribution(values, probs)


def star_product(v, r, gamma: float) -> float:
    """Rounded inner product ``gamma * sum_k round(v_k r_k / gamma)`` (ties to even)."""
    v = np.asarray(v, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if v.shape != r.shape:
        raise ValueError("lengths differ")
    return float(gamma * np.sum(np.rint(v * r / gamma)))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SdpSolution:
    vectors: np.ndarray   # (num_vertices, dim)
    edges: tuple          # ((i, j, w), ...)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if not np.all(np.isfinite(V)):
            raise ValueError("vectors must be finite")
        norms = np.linalg.norm(V, axis=1)
        if np.any(np.abs(norms - 1.0) > TOL.unit_norm):
            raise ValueError("SDP vectors must have unit norm")
        edges = []
        for e in self.edges:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= i < V.shape[0] and 0 <= j < V.shape[0]) or i == j:
                raise ValueError(f"bad edge {e!r}")
            if not w > 0:
                raise ValueError("edge weights must be positive")
            edges.append((i, j, w))
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def num_vertices(self) -> int:
        return int(self.vectors.shape[0])

    def reduced(self) -> np.ndarray:
        """Vectors restricted to the coordinates that are nonzero somewhere."""
        keep = np.any(self.vectors != 0.0, axis=0)
        return self.vectors[:, keep]

    def edge_targets(self) -> np.ndarray:
        """``arccos(v_i . v_j) / pi`` per edge."""
        out = [math.acos(max(-1.0, min(1.0, float(self.vectors[i] @ self.vectors[j])))) / math.pi
               for i, j, _ in self.edges]
        return np.array(out)

    def sdp_value(self) -> float:
        return float(sum(w * (1.0 - self.vectors[i] @ self.vectors[j]) / 2.0 for i, j, w in self.edges))


def cut_weight(edges, S) -> float:
    """Total weight of edges with exactly one endpoint in ``S`` (a boolean mask)."""
    S = np.asarray(S, dtype=bool)
    return float(sum(w for i, j, w in edges if S[i] != S[j]))


def brute_force_maxcut(num_vertices: int, edges) -> tuple[float, np.ndarray]:
    """Exact optimum and a maximizing side mask (vertex 0 fixed outside)."""
    if num_vertices > BRUTE_FORCE_MAX_N:
        raise ValueError("graph too large for brute force")
    if num_vertices <= 1 or not edges:
        return 0.0, np.zeros(num_vertices, dtype=bool)
    ii = np.array([e[0] for e in edges])
    jj = np.array([e[1] for e in edges])
    ww = np.array([e[2] for e in edges], dtype=np.float64)
    best, best_mask = -1.0, 0
    total = 1 << (num_vertices - 1)
    chunk = 1 << 16
    for lo in range(0, total, chunk):
        masks = np.arange(lo, min(total, lo + chunk), dtype=np.int64) << 1
        crossing = ((masks[:, None] >> ii) ^ (masks[:, None] >> jj)) & 1
        vals = crossing @ ww
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_mask = float(vals[k]), int(masks[k])
    S = ((best_mask >> np.arange(num_vertices)) & 1).astype(bool)
    return best, S


# ---------------------------------------------------------------------------
# Pair-counter edge automata
# ---------------------------------------------------------------------------


def edge_weight(ci, cj, epsilon: float, gamma: float, B: int):
    """Damped cut weight of a pair state; ``None`` marks a rejected coordinate.

    Sides follow the cut rule ``c >= 0``, so a positive weight always means
    the edge is cut.
    """
    if ci is None or cj is None:
        return 0.0
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)
    differ = (ci >= 0) != (cj >= 0)
    ramp = np.minimum(1.0, gamma * np.abs(ci - cj) / epsilon)
    val = np.where(differ, ramp * potential(ci, B) * potential(cj, B), 0.0)
    return float(val) if np.ndim(val) == 0 else val


def weight_box(epsilon: float, gamma: float, B: int) -> np.ndarray:
    """``W~`` over ``[-B, B]^2`` (row index ``c_i + B``, column ``c_j + B``)."""
    c = np.arange(-B, B + 1)
    return edge_weight(c[:, None], c[None, :], epsilon, gamma, B)


class PairCounterBank(Automaton):
    """One block of ``(2B+2)^2`` states per edge: both endpoint counters.

    Local state ``a * w + b`` with ``w = 2B + 2``; ``a = c_i + B`` or the
    reject index ``2B + 1`` (likewise ``b``).
    """

    def __init__(self, increments, edges, B: int):
        self.B = int(B)
        self.increments = [np.ascontiguousarray(x, dtype=np.int64) for x in increments]  # (symbols, vertices)
        self.ei = np.array([e[0] for e in edges], dtype=np.int64)
        self.ej = np.array([e[1] for e in edges], dtype=np.int64)
        self.num_edges = int(self.ei.size)
        self.w = 2 * self.B + 2
        self.block = self.w * self.w
        self.num_states = self.num_edges * self.block
        self.horizon = len(self.increments)

    @property
    def bottom(self) -> int:
        return 2 * self.B + 1

    def start_states(self) -> np.ndarray:
        return np.arange(self.num_edges, dtype=np.int64) * self.block + self.B * self.w + self.B

    def _advance(self, local, inc):
        nc = local + inc
        dead = (local == self.bottom) | (nc < 0) | (nc > 2 * self.B)
        return np.where(dead, self.bottom, nc)

    def _next(self, t, sym, states):
        e = states // self.block
        loc = states - e * self.block
        a, b = loc // self.w, loc % self.w
        inc = self.increments[t]
        na = self._advance(a, inc[sym, self.ei[e]])
        nb = self._advance(b, inc[sym, self.ej[e]])
        return e * self.block + na * self.w + nb

    def block_weights(self, epsilon: float, gamma: float) -> np.ndarray:
        """``W~`` over one block (reject rows and columns are 0)."""
        out = np.zeros((self.w, self.w))
        out[: 2 * self.B + 1, : 2 * self.B + 1] = weight_box(epsilon, gamma, self.B)
        return out.reshape(-1)


def vertex_increments(vectors: np.ndarray, alphabet: StepDistribution) -> list[np.ndarray]:
    """``round(v_ik * k)`` per step ``k``: shape ``(symbols, vertices)``."""
    k = alphabet.values.astype(np.float64)
    return [round_half_even(k[:, None] * vectors[:, t][None, :]) for t in range(vectors.shape[1])]


def common_span(increments, alphabet: StepDistribution, delta: float, b_scale: float) -> int:
    """Largest span-formula value over the vertex counters (means are 0)."""
    p = alphabet.probs
    n = len(increments)
    B = 1
    for v in range(increments[0].shape[1]) if increments else []:
        cols = [x[:, v] for x in increments]
        M = max(float(np.max(np.abs(c[p > 0]))) for c in cols)
        kappa = sum(float(p @ (c.astype(np.float64) ** 2)) for c in cols)
        B = max(B, span_for(M, kappa, n, delta, b_scale))
    return B


# ---------------------------------------------------------------------------
# Suffix vectors by 2-D convolution
# ---------------------------------------------------------------------------


@dataclass
class _Dist2:
    """Distribution on a centered grid: ``arr[ci, cj]`` is the mass of offset ``(ci - oi, cj - oj)``."""

    arr: np.ndarray
    oi: int
    oj: int


def _pair_step(inc_i: np.ndarray, inc_j: np.ndarray, probs: np.ndarray) -> _Dist2:
    live = probs > 0
    ei = int(np.max(np.abs(inc_i[live])))
    ej = int(np.max(np.abs(inc_j[live])))
    arr = np.zeros((2 * ei + 1, 2 * ej + 1))
    np.add.at(arr, (inc_i[live] + ei, inc_j[live] + ej), probs[live])
    return _Dist2(arr, ei, ej)


@dataclass
class _ConvStats:
    renorm: float = 0.0   # total mass moved by clipping and renormalizing
    fft_calls: int = 0
    direct_calls: int = 0


def _convolve(x: _Dist2, y: _Dist2, threshold: int, stats: _ConvStats) -> _Dist2:
    shape = (x.arr.shape[0] + y.arr.shape[0] - 1, x.arr.shape[1] + y.arr.shape[1] - 1)
    if shape[0] * shape[1] > CONV_GUARD:
        raise MemoryError("convolution exceeds the memory guard")
    if x.arr.size * y.arr.size > threshold:
        out = signal.fftconvolve(x.arr, y.arr, mode="full")
        stats.fft_calls += 1
        neg = float(-out[out < 0].sum())
        out = np.maximum(out, 0.0)
        total = float(out.sum())
        stats.renorm += neg + abs(total - 1.0)
        out /= total
    else:
        out = signal.convolve(x.arr, y.arr, mode="full", method="direct")
        stats.direct_calls += 1
    return _Dist2(out, x.oi + y.oi, x.oj + y.oj)


def _correlate_box(Wb: np.ndarray, S: _Dist2, B: int, threshold: int) -> np.ndarray:
    """``V(c) = sum_d S(d) Wb(c + d)`` for ``c`` in the box."""
    flipped = S.arr[::-1, ::-1]
    fi = S.arr.shape[0] - 1 - S.oi
    fj = S.arr.shape[1] - 1 - S.oj
    if Wb.size * flipped.size > threshold:
        full = signal.fftconvolve(Wb, flipped, mode="full")
        full = np.maximum(full, 0.0)
    else:
        full = signal.convolve(Wb, flipped, mode="full", method="direct")
    n = 2 * B + 1
    return full[fi : fi + n, fj : fj + n]


@dataclass(frozen=True)
class EdgeVhat:
    """Suffix vectors of one edge on the box, ``values[t, ci + B, cj + B]``."""

    values: np.ndarray
    renorm: float
    fft_calls: int
    direct_calls: int


def edge_vhat_fft(inc_i, inc_j, probs: np.ndarray, n: int, Wb: np.ndarray, B: int,
                  threshold: int = DEFAULT_FFT_THRESHOLD) -> EdgeVhat:
    """Suffix vectors of the untruncated pair counter by dyadic convolution.

    ``inc_i[t]``, ``inc_j[t]`` are the per-symbol increments of step ``t``;
    the horizon is padded to a power of two with identity steps.
    """
    stats = _ConvStats()
    n_pad = 1 << max(0, (n - 1).bit_length())
    point = _Dist2(np.ones((1, 1)), 0, 0)
    base = [_pair_step(inc_i[t], inc_j[t], probs) for t in range(n)] + [point] * (n_pad - n)
    tree = [base]
    while len(tree[-1]) > 1:
        prev = tree[-1]
        tree.append([_convolve(prev[2 * k], prev[2 * k + 1], threshold, stats) for k in range(len(prev) // 2)])
    suffix: list = [None] * (n_pad + 1)
    suffix[n_pad] = point
    suffix[0] = tree[-1][0]
    for i in range(len(tree) - 2, -1, -1):
        h = 1 << i
        for a in range(0, n_pad, 2 * h):
            suffix[a + h] = _convolve(tree[i][(a + h) // h], suffix[a + 2 * h], threshold, stats)
    vals = np.empty((n + 1, 2 * B + 1, 2 * B + 1))
    for t in range(n):
        vals[t] = _correlate_box(Wb, suffix[t], B, threshold)
    vals[n] = Wb
    return EdgeVhat(vals, stats.renorm, stats.fft_calls, stats.direct_calls)


def _shift_dp(inc_i, inc_j, probs: np.ndarray, n: int, Wb: np.ndarray, B: int, ext_i: int, ext_j: int) -> np.ndarray:
    """Backward DP on the box widened by ``ext``; values off the grid count as 0."""
    live = np.flatnonzero(probs > 0)
    cur = np.zeros((2 * (B + ext_i) + 1, 2 * (B + ext_j) + 1))
    box = (slice(ext_i, ext_i + 2 * B + 1), slice(ext_j, ext_j + 2 * B + 1))
    cur[box] = Wb
    out = np.empty((n + 1, 2 * B + 1, 2 * B + 1))
    out[n] = Wb
    for t in range(n - 1, -1, -1):
        nxt = np.zeros_like(cur)
        for r in live:
            di, dj = int(inc_i[t][r]), int(inc_j[t][r])
            # nxt[x] += p * cur[x + d]
            si = slice(max(0, -di), min(cur.shape[0], cur.shape[0] - di))
            sj = slice(max(0, -dj), min(cur.shape[1], cur.shape[1] - dj))
            if si.start >= si.stop or sj.start >= sj.stop:
                continue
            nxt[si, sj] += probs[r] * cur[si.start + di : si.stop + di, sj.start + dj : sj.stop + dj]
        cur = nxt
        out[t] = cur[box]
    return out


def edge_vhat_direct(inc_i, inc_j, probs: np.ndarray, n: int, Wb: np.ndarray, B: int) -> np.ndarray:
    """Suffix vectors of the untruncated pair counter by backward DP.

    The grid extends the box by the largest possible total drift, which makes
    zero padding exact.
    """
    live = probs > 0
    ext_i = sum(int(np.max(np.abs(inc_i[t][live]))) for t in range(n))
    ext_j = sum(int(np.max(np.abs(inc_j[t][live]))) for t in range(n))
    return _shift_dp(inc_i, inc_j, probs, n, Wb, B, ext_i, ext_j)


def edge_truncated_exact(inc_i, inc_j, probs: np.ndarray, n: int, Wb: np.ndarray, B: int) -> np.ndarray:
    """Exact suffix vectors of the truncated pair counter on the box.

    Leaving the box means rejection, whose weight is 0 forever, so this is
    the same DP with no margin.
    """
    return _shift_dp(inc_i, inc_j, probs, n, Wb, B, 0, 0)


def to_bank_layout(bank: "PairCounterBank", per_edge) -> np.ndarray:
    """Stack per-edge box arrays ``(n+1, 2B+1, 2B+1)`` into ``(n+1, num_states)``."""
    B, w = bank.B, bank.w
    T = per_edge[0].shape[0]
    out = np.zeros((T, bank.num_edges, w, w))
    for e, vals in enumerate(per_edge):
        out[:, e, : 2 * B + 1, : 2 * B + 1] = vals
    return out.reshape(T, -1)


# ---------------------------------------------------------------------------
# End-to-end rounding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaxCutConfig:
    epsilon: float = 0.3
    C: float = 1.0                 # quantization constant
    b_scale: float = 0.2           # replaces the literal 100 of the span formula
    delta_exponent: float = 10.0   # delta = (epsilon / n) ** exponent
    size_cap: int | None = 1024
    reduce_C: float = 4.0
    fft_threshold: int = DEFAULT_FFT_THRESHOLD
    workers: int = 1
    fool_epsilon: float | None = None  # default epsilon / sqrt(n)

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class MaxCutResult:
    S: np.ndarray                 # side mask, True means v_i * r >= 0
    cut_weight: float
    sdp_value: float
    drivestream: np.ndarray       # symbol indices of the selected entry
    params: QuantizationParams | None
    B: int
    fool_epsilon: float
    beta: float
    expected_omega: np.ndarray    # E_Omega[W~_e]
    expected_d: np.ndarray        # E_D[W~_e]
    cut_prob_d: np.ndarray        # P_D(edge cut)
    variability: np.ndarray       # per edge
    targets: np.ndarray           # arccos(v_i . v_j) / pi
    certified_bound: float        # sum_e w_e (E_Omega - eps' V_e - 3 beta n)
    distribution_size: int
    certified: bool
    vhat_fft_gap: float           # max |FFT - direct| over edges and times
    merges: list = field(default_factory=list)

    @property
    def cut_bitmask(self) -> int:
        return int(sum(1 << i for i in np.flatnonzero(self.S)))

    @property
    def ratio_cut_over_sdp(self) -> float:
        return self.cut_weight / self.sdp_value if self.sdp_value > 0 else 1.0


def _empty_result(sdp: SdpSolution) -> MaxCutResult:
    z = np.zeros(0)
    return MaxCutResult(
        S=np.ones(sdp.num_vertices, dtype=bool), cut_weight=0.0, sdp_value=sdp.sdp_value(),
        drivestream=np.zeros(0, dtype=np.int64), params=None, B=0, fool_epsilon=0.0, beta=0.0,
        expected_omega=z, expected_d=z, cut_prob_d=z, variability=z, targets=z, certified_bound=0.0,
        distribution_size=0, certified=True, vhat_fft_gap=0.0,
    )


def build_edge_automaton(sdp: SdpSolution, cfg: MaxCutConfig):
    """``(params, alphabet, space, bank, increments, delta)`` for the reduced embedding."""
    V = sdp.reduced()
    n = V.shape[1]
    params = QuantizationParams(cfg.epsilon, n, cfg.C)
    alphabet = gaussian_alphabet(params)
    space = ProbabilitySpace(tuple(alphabet for _ in range(n)))
    incs = vertex_increments(V, alphabet)
    delta = min(0.5, (cfg.epsilon / n) ** cfg.delta_exponent)
    B = common_span(incs, alphabet, delta, cfg.b_scale)
    bank = PairCounterBank(incs, sdp.edges, B)
    return params, alphabet, space, bank, incs, delta


def compute_vhat_fft(bank: PairCounterBank, alphabet: StepDistribution, epsilon: float, gamma: float,
                     threshold: int = DEFAULT_FFT_THRESHOLD, workers: int = 1) -> tuple[VhatProvider, list]:
    """Suffix vectors for every edge block, laid out like ``bank``.

    ``beta`` here is only the float budget (renormalization mass plus
    convolution roundoff); callers add the measured truncation gap.
    """
    n = bank.horizon
    B = bank.B
    Wb = weight_box(epsilon, gamma, B)
    probs = alphabet.probs

    def one(e):
        i, j = bank.ei[e], bank.ej[e]
        return edge_vhat_fft([x[:, i] for x in bank.increments], [x[:, j] for x in bank.increments], probs, n, Wb, B,
                             threshold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_edge = list(pool.map(one, range(bank.num_edges)))
    else:
        per_edge = [one(e) for e in range(bank.num_edges)]
    out = to_bank_layout(bank, [ev.values for ev in per_edge])
    renorm = sum(ev.renorm for ev in per_edge)
    cells = max((2 * B + 1) ** 2, 1)
    beta = renorm + 4.0 * n * cells * EPS64
    return VhatProvider(out, beta), per_edge


def round_maxcut(sdp: SdpSolution, cfg: MaxCutConfig = MaxCutConfig()) -> MaxCutResult:
    if not sdp.edges:
        return _empty_result(sdp)
    params, alphabet, space, bank, incs, delta = build_edge_automaton(sdp, cfg)
    n = space.n
    eps, gamma = cfg.epsilon, params.gamma
    W = np.tile(bank.block_weights(eps, gamma), bank.num_edges)
    starts = bank.start_states()

    vhat, per_edge = compute_vhat_fft(bank, alphabet, eps, gamma, cfg.fft_threshold, cfg.workers)
    Wb = weight_box(eps, gamma, bank.B)
    gap = 0.0
    truncated = []
    for e, ev in enumerate(per_edge):
        ci = [x[:, bank.ei[e]] for x in incs]
        cj = [x[:, bank.ej[e]] for x in incs]
        direct = edge_vhat_direct(ci, cj, alphabet.probs, n, Wb, bank.B)
        gap = max(gap, float(np.max(np.abs(direct - ev.values))))
        truncated.append(edge_truncated_exact(ci, cj, alphabet.probs, n, Wb, bank.B))
    V_exact = to_bank_layout(bank, truncated)
    beta = vhat.beta + float(np.max(np.abs(vhat.vectors - V_exact)))
    vhat = VhatProvider(vhat.vectors, beta)

    eps_fool = cfg.fool_epsilon if cfg.fool_epsilon is not None else eps / math.sqrt(n)
    fcfg = FoolConfig(eps_fool, C=cfg.reduce_C, size_cap=cfg.size_cap, workers=cfg.workers,
                      vhat_mode="application-supplied")
    D, info = fool_detailed(space, bank, W, fcfg, vhat, starts=starts)

    variability = total_variability(space, bank, V_exact, starts)
    expected = V_exact[0][starts]
    w_e = np.array([e[2] for e in sdp.edges])
    certified_bound = float(w_e @ (expected - eps_fool * variability - 3.0 * beta * info.n))

    live = D.entries[: D.num_real]
    # untruncated scaled sums c_i = sum_k round(v_ik k_sym)
    c = np.zeros((live.shape[0], sdp.num_vertices), dtype=np.int64)
    for t in range(n):
        c += incs[t][live[:, t]]
    sides = c >= 0
    crossing = sides[:, bank.ei] != sides[:, bank.ej]
    scores = crossing @ w_e
    k = best_entry(scores)
    S = sides[k]

    finals = fold_states(bank, 0, live, starts)
    pD = D.probs[: D.num_real]
    expected_d = pD @ W[finals]
    cut_prob_d = pD @ crossing.astype(np.float64)
    return MaxCutResult(
        S=S, cut_weight=cut_weight(sdp.edges, S), sdp_value=sdp.sdp_value(), drivestream=live[k].copy(),
        params=params, B=bank.B, fool_epsilon=eps_fool, beta=beta, expected_omega=expected,
        expected_d=expected_d, cut_prob_d=cut_prob_d, variability=variability, targets=sdp.edge_targets(),
        certified_bound=certified_bound, distribution_size=int(D.num_real), certified=info.certified,
        vhat_fft_gap=gap, merges=info.merges,
    )


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(successes, trials, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def sample_alphabet(alphabet: StepDistribution, shape, rng: np.random.Generator) -> np.ndarray:
    """Symbol indices drawn from ``alphabet``."""
    return rng.choice(alphabet.size, size=shape, p=alphabet.probs)


def edge_weight_monte_carlo(sdp: SdpSolution, cfg: MaxCutConfig, samples: int, rng: np.random.Generator,
                            alpha: float = 0.05):
    """Per-edge ``E_Omega[W~_e]`` estimated by sampling ``Omega``.

    Each sample turns ``W~`` into a coin with that bias, so the estimate is a
    binomial proportion and carries a Wilson interval.  Returns
    ``(means, lows, highs)``.
    """
    params, alphabet, space, bank, incs, _ = build_edge_automaton(sdp, cfg)
    n, B = space.n, bank.B
    idx = sample_alphabet(alphabet, (samples, n), rng)
    c = np.zeros((samples, sdp.num_vertices), dtype=np.int64)
    alive = np.ones((samples, sdp.num_vertices), dtype=bool)
    for t in range(n):
        c += incs[t][idx[:, t]]
        alive &= np.abs(c) <= B
    coins = rng.random((samples, len(sdp.edges)))
    means, lows, highs = [], [], []
    for e, (i, j, _) in enumerate(sdp.edges):
        wt = edge_weight(c[:, i], c[:, j], cfg.epsilon, params.gamma, B) * (alive[:, i] & alive[:, j])
        hits = int(np.sum(coins[:, e] < wt))
        lo, hi = wilson_interval(hits, samples, alpha)
        means.append(hits / samples)
        lows.append(lo)
        highs.append(hi)
    return np.array(means), np.array(lows), np.array(highs)


@dataclass(frozen=True)
class CouplingResult:
    exceed: int
    samples: int
    low: float
    high: float

    @property
    def frequency(self) -> float:
        return self.exceed / self.samples


def coupling_check(u, epsilon: float, params: QuantizationParams, samples: int, rng: np.random.Generator,
                   alpha: float = 0.05) -> CouplingResult:
    """Frequency of ``|u . X - u * r| > epsilon`` under the rounding coupling.

    ``X`` is standard normal; ``r_k`` is ``X_k`` rounded to the nearest grid
    point in ``[-R, R]``, or 0 when ``|X_k| > R``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.size != params.n:
        raise ValueError("vector length does not match the quantization")
    g, R, K = params.gamma, params.R, params.K
    X = rng.standard_normal((samples, u.size))
    k = np.clip(np.rint(X / g), -K, K)
    k = np.where(np.abs(X) > R, 0.0, k)
    star = g * np.rint(u[None, :] * k).sum(axis=1)
    exceed = int(np.sum(np.abs(X @ u - star) > epsilon))
    lo, hi = wilson_interval(exceed, samples, alpha)
    return CouplingResult(exceed, samples, lo, hi)
