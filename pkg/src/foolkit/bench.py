"""Desk-scale timing harness; writes one CSV row per measurement.

    python -m foolkit.bench [--suite lap,gb,fft,fool] [--output bench.csv]

Instances are synthesized deterministically from their size parameters.
Each row records whether the result matched the reference run (compiled
kernel, one worker), so the table doubles as a determinism check.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .automata import ProbabilitySpace, StepDistribution, TableAutomaton, exact_suffix_expectations, fold_states
from .fool import FoolConfig, fool_detailed
from .gale_berlekamp import GBConfig, GBInstance, run_gb
from .lattice import LapInstance, solve_unit
from .maxcut import MaxCutConfig, SdpSolution, build_edge_automaton, compute_vhat_fft, edge_vhat_direct, weight_box

FIELDS = ["suite", "case", "backend", "workers", "seconds", "size", "metric", "matches_reference"]


@dataclass(frozen=True)
class BenchCase:
    suite: str
    case: str
    params: dict


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def bench_lap(sizes=(64, 128, 256)):
    backends = ["python"] + (["compiled"] if kernels.compiled_available() else [])
    for size in sizes:
        rng = np.random.default_rng(size)
        inst = LapInstance(rng.random((size, size)), rng.random(size))
        ref = None
        for b in backends[::-1]:
            sol, sec = _timed(lambda: solve_unit(inst, backend=b))
            ref = sol.v if ref is None else ref
            yield {"suite": "lap", "case": f"m=n={size}", "backend": b, "workers": 1, "seconds": sec,
                   "size": size, "metric": float(np.max(sol.disc / sol.bound)),
                   "matches_reference": bool(np.array_equal(sol.v, ref))}


def _gb_matrix(n: int) -> np.ndarray:
    rng = np.random.default_rng(1000 + n)
    return rng.choice([-1, 1], size=(n, n))


def bench_gb(sizes=(8, 16, 32), workers=(1, 8)):
    for n in sizes:
        inst = GBInstance(_gb_matrix(n))
        ref = None
        for w in workers:
            r, sec = _timed(lambda: run_gb(inst, GBConfig(workers=w)))
            key = (r.imbalance, r.y.tobytes())
            ref = key if ref is None else ref
            yield {"suite": "gb", "case": f"n={n}", "backend": kernels.BACKEND, "workers": w, "seconds": sec,
                   "size": r.distribution_size, "metric": r.ratio_to_n32, "matches_reference": key == ref}


def _planar_sdp(k: int):
    a = np.arange(k) * (2 * math.pi * (k // 2) / k)
    V = np.stack([np.cos(a), np.sin(a)], axis=1)
    return SdpSolution(V, tuple((i, (i + 1) % k, 1.0) for i in range(k)))


def bench_fft(cycles=(3, 5, 7), workers=(1, 8)):
    for k in cycles:
        sdp = _planar_sdp(k)
        cfg = MaxCutConfig()
        params, alphabet, space, bank, incs, _ = build_edge_automaton(sdp, cfg)
        ref = None
        for w in workers:
            (vh, _), sec = _timed(lambda: compute_vhat_fft(bank, alphabet, cfg.epsilon, params.gamma,
                                                           cfg.fft_threshold, w))
            ref = vh.vectors if ref is None else ref
            yield {"suite": "fft", "case": f"cycle={k}", "backend": "fft", "workers": w, "seconds": sec,
                   "size": bank.num_states, "metric": vh.beta, "matches_reference": bool(np.array_equal(vh.vectors, ref))}
        Wb = weight_box(cfg.epsilon, params.gamma, bank.B)
        _, sec = _timed(lambda: [edge_vhat_direct([x[:, bank.ei[e]] for x in incs], [x[:, bank.ej[e]] for x in incs],
                                                  alphabet.probs, space.n, Wb, bank.B) for e in range(bank.num_edges)])
        yield {"suite": "fft", "case": f"cycle={k}", "backend": "direct", "workers": 1, "seconds": sec,
               "size": bank.num_states, "metric": 0.0, "matches_reference": True}


def bench_fool(sizes=(4, 8, 16), eta=8, workers=(1, 8)):
    for n in sizes:
        rng = np.random.default_rng(2000 + n)
        space = ProbabilitySpace(tuple(StepDistribution.uniform([0, 1, 2, 3]) for _ in range(n)))
        F = TableAutomaton.random(space, eta, rng)
        W = rng.random(eta)
        ref = None
        for w in workers:
            cfg = FoolConfig(0.25, size_cap=512, workers=w)
            (D, info), sec = _timed(lambda: fool_detailed(space, F, W, cfg))
            key = D.entries.tobytes() + D.probs.tobytes()
            ref = key if ref is None else ref
            err = float(np.max(np.abs(D.probs @ W[_finals(F, D)] - exact_suffix_expectations(space, F, W)[0])))
            yield {"suite": "fool", "case": f"n={n},eta={eta}", "backend": kernels.BACKEND, "workers": w,
                   "seconds": sec, "size": D.num_real, "metric": err, "matches_reference": key == ref}


def _finals(F, D):
    return fold_states(F, D.start, D.entries, np.arange(F.num_states))


SUITES = {"lap": bench_lap, "gb": bench_gb, "fft": bench_fft, "fool": bench_fool}


def run_bench(suites=("lap", "gb", "fft", "fool")) -> list[dict]:
    rows = []
    for s in suites:
        rows.extend(SUITES[s]())
    return rows


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m foolkit.bench", description=__doc__.splitlines()[0])
    p.add_argument("--suite", default="lap,gb,fft,fool", help="comma-separated subset of " + ",".join(SUITES))
    p.add_argument("--output", default=None, help="CSV path (default stdout)")
    args = p.parse_args(argv)
    suites = [s for s in args.suite.split(",") if s]
    unknown = set(suites) - set(SUITES)
    if unknown:
        p.error(f"unknown suite(s): {', '.join(sorted(unknown))}")
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=FIELDS)
        writer.writeheader()
        for s in suites:
            for row in SUITES[s]():
                writer.writerow(row)
                out.flush()
    finally:
        if args.output:
            out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
