"""Command-line entry point: ``foolkit {fool-verify,gb,maxcut,lap-bench}``.

Every command prints (or writes) one JSON document with two sections:
``report`` depends only on the inputs and the configuration, ``runtime``
holds wall-clock times, worker counts and the kernel backend.

Exit codes: 0 success, 2 invalid input or configuration, 3 a checked
guarantee was violated.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .automata import exact_suffix_expectations, total_variability
from .io import FormatError, parse_automaton, parse_gb, parse_graph, parse_lap, parse_sdp, parse_space

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_VIOLATION = 3


def _plain(x):
    """JSON-ready copy: numpy scalars/arrays become Python numbers/lists."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if not math.isfinite(x):
            return repr(x)
        return x
    return x


def _merges(merges):
    return [{"level": l, "t": t, "m": m, "certified": c, "exact": e} for l, t, m, c, e in merges]


# -- subcommands --------------------------------------------------------------

def cmd_fool_verify(args) -> tuple[dict, bool]:
    from .fool import FoolConfig, fool_detailed, verify_fooling

    space = parse_space(Path(args.space))
    F, W = parse_automaton(Path(args.automaton), space)
    cfg = FoolConfig(args.epsilon, C=args.reduce_C, size_cap=args.size_cap, workers=args.workers,
                     vhat_mode=args.vhat_mode, certify=not args.no_certify)
    D, info = fool_detailed(space, F, W, cfg)
    V = exact_suffix_expectations(space, F, W)
    starts = np.arange(F.num_states)
    var = total_variability(space, F, V, starts)
    rep = verify_fooling(D, space, F, W, var, args.epsilon, 0.0)
    ok = bool(np.all(rep.slack + args.tolerance >= 0))
    body = {
        "distribution_size": int(D.num_real),
        "padded_n": info.n,
        "certified": info.certified,
        "merges": _merges(info.merges),
        "per_state": {"error": rep.error, "bound": rep.bound, "slack": rep.slack},
        "min_slack": float(rep.slack.min()),
        "error_ledger": {
            "epsilon_term": float((args.epsilon * var).max()),
            "beta_term": 0.0,
            "measured_error": float(rep.error.max()),
        },
    }
    return body, ok


def cmd_gb(args) -> tuple[dict, bool]:
    from .gale_berlekamp import GBConfig, GBInstance, run_gb

    inst = GBInstance(parse_gb(Path(args.input)))
    cfg = GBConfig(epsilon_scale=args.epsilon_scale, b_scale=args.b_scale, size_cap=args.size_cap,
                   C=args.reduce_C, workers=args.workers)
    r = run_gb(inst, cfg)
    ok = (not r.certified) or r.imbalance >= r.certified_bound
    ok = ok and r.imbalance >= r.empirical_bound - 1e-9
    body = {
        "n": inst.n,
        "x": r.x, "y": r.y,
        "imbalance": r.imbalance,
        "ratio_to_n32": r.ratio_to_n32,
        "certified_bound": r.certified_bound,
        "certified": r.certified,
        "empirical_bound": r.empirical_bound,
        "distribution_size": r.distribution_size,
        "epsilon": r.epsilon, "beta": r.beta, "B": r.B, "delta": r.delta,
        "merges": _merges(r.merges),
        "error_ledger": {
            "epsilon_term": float(r.epsilon * r.variability.sum()),
            "beta_term": float(3.0 * r.beta * (1 << max(0, (inst.n - 1).bit_length())) * inst.n),
            "measured_error": float(abs(r.expected_omega - r.empirical_bound)),
        },
    }
    return body, ok


def cmd_maxcut(args) -> tuple[dict, bool]:
    from .maxcut import MaxCutConfig, SdpSolution, round_maxcut

    n, edges = parse_graph(Path(args.graph))
    V = parse_sdp(Path(args.sdp))
    if V.shape[0] != n:
        raise ValueError(f"graph has {n} vertices but the embedding has {V.shape[0]} vectors")
    sdp = SdpSolution(V, tuple(edges))
    cfg = MaxCutConfig(epsilon=args.epsilon, C=args.quant_C, b_scale=args.b_scale, size_cap=args.size_cap,
                       reduce_C=args.reduce_C, fft_threshold=args.fft_threshold, workers=args.workers,
                       fool_epsilon=args.fool_epsilon)
    r = round_maxcut(sdp, cfg)
    w = np.array([e[2] for e in sdp.edges])
    ok = r.cut_weight >= r.certified_bound - 1e-9
    nsteps = r.params.n if r.params is not None else 0
    body = {
        "cut_bitmask": r.cut_bitmask,
        "cut_weight": r.cut_weight,
        "sdp_value": r.sdp_value,
        "ratio_cut_over_sdp": r.ratio_cut_over_sdp,
        "certified_bound": r.certified_bound,
        "distribution_size": r.distribution_size,
        "dimension": nsteps,
        "gamma": r.params.gamma if r.params else None,
        "R": r.params.R if r.params else None,
        "B": r.B,
        "fool_epsilon": r.fool_epsilon,
        "beta": r.beta,
        "vhat_fft_gap": r.vhat_fft_gap,
        "merges": _merges(r.merges),
        "per_edge_probs": [
            {"edge": [i, j], "weight": wt, "target": tg, "expected_omega": eo, "expected_d": ed,
             "cut_prob_d": pc, "variability": vv}
            for (i, j, wt), tg, eo, ed, pc, vv in zip(sdp.edges, r.targets, r.expected_omega, r.expected_d,
                                                     r.cut_prob_d, r.variability)
        ],
        "error_ledger": {
            "epsilon_term": float(w @ (r.fool_epsilon * r.variability)) if w.size else 0.0,
            "beta_term": float(3.0 * r.beta * (1 << max(0, (nsteps - 1).bit_length())) * w.sum()) if w.size else 0.0,
            "measured_error": float(w @ np.abs(r.expected_d - r.expected_omega)) if w.size else 0.0,
        },
    }
    return body, ok


def _lap_suite():
    """Seedless instances: square sizes 64, 128, 256 with a fixed generator per size."""
    for size in (64, 128, 256):
        rng = np.random.default_rng(size)
        yield f"random-{size}", rng.random((size, size)), rng.random(size)


def cmd_lap_bench(args) -> tuple[dict, bool]:
    from .lattice import LapInstance, solve_real, solve_unit

    if args.input:
        A, u = parse_lap(Path(args.input))
        cases = [(Path(args.input).name, A, u)]
    else:
        cases = list(_lap_suite())
    out, ok = [], True
    times = {}
    for name, A, u in cases:
        inst = LapInstance(A, u)
        unit = A.size == 0 or (A.min() >= 0 and A.max() <= 1)
        t0 = time.perf_counter()
        sol = solve_unit(inst) if unit else solve_real(inst)
        times[name] = time.perf_counter() - t0
        slack = sol.bound - sol.disc
        ok = ok and bool(np.all(slack >= -1e-9))
        out.append({
            "name": name, "rows": A.shape[0], "cols": A.shape[1], "path": "unit" if unit else "real",
            "v": sol.v, "disc": sol.disc, "bound": sol.bound,
            "max_ratio": float(np.max(sol.disc / np.maximum(sol.bound, 1e-300), initial=0.0)),
            "min_slack": float(slack.min(initial=0.0)), "phi0": sol.phi0,
        })
    return {"instances": out, "_times": times}, ok


# -- parser and dispatch ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foolkit", description="Fooling distributions for automata, with applications.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--workers", type=int, default=1, help="thread count for parallel merges")
        sp.add_argument("--output", help="write the JSON here instead of stdout")
        sp.add_argument("--size-cap", type=int, default=None, help="cap on per-merge distribution size")
        sp.add_argument("--reduce-C", type=float, default=4.0, help="constant of the sparsification size")
        sp.add_argument("--seedless", action="store_true",
                        help="accepted for scripts; every subcommand is deterministic and uses no RNG")

    fv = sub.add_parser("fool-verify", help="fool a serialized automaton and verify the bound exactly")
    fv.add_argument("--space", required=True)
    fv.add_argument("--automaton", required=True)
    fv.add_argument("--epsilon", type=float, default=0.25)
    fv.add_argument("--vhat-mode", choices=["exact-dp", "matrix-product"], default="exact-dp")
    fv.add_argument("--no-certify", action="store_true", help="do not raise sizes to the certified value")
    fv.add_argument("--tolerance", type=float, default=0.0, help="extra slack allowed before reporting a violation")
    common(fv)

    gb = sub.add_parser("gb", help="Gale-Berlekamp switching game")
    gb.add_argument("--input", required=True)
    gb.add_argument("--epsilon-scale", type=float, default=1.0)
    gb.add_argument("--b-scale", type=float, default=0.1)
    common(gb)
    gb.set_defaults(size_cap=256)

    mc = sub.add_parser("maxcut", help="round an SDP embedding to a cut")
    mc.add_argument("--graph", required=True)
    mc.add_argument("--sdp", required=True)
    mc.add_argument("--epsilon", type=float, default=0.3)
    mc.add_argument("--quant-C", type=float, default=1.0)
    mc.add_argument("--b-scale", type=float, default=0.2)
    mc.add_argument("--fft-threshold", type=int, default=4096)
    mc.add_argument("--fool-epsilon", type=float, default=None, help="override epsilon / sqrt(n) for the fooling step")
    common(mc)
    mc.set_defaults(size_cap=1024)

    lb = sub.add_parser("lap-bench", help="lattice approximation solves with bound check")
    lb.add_argument("--input", default=None, help="LAP instance file; default is the built-in suite")
    common(lb)
    return p


COMMANDS = {"fool-verify": cmd_fool_verify, "gb": cmd_gb, "maxcut": cmd_maxcut, "lap-bench": cmd_lap_bench}


def run(argv) -> tuple[int, dict | None]:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on unknown flags
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID, None
    t0 = time.perf_counter()
    try:
        body, ok = COMMANDS[args.command](args)
    except (ValueError, FormatError, FileNotFoundError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID, None
    elapsed = time.perf_counter() - t0
    extra_times = body.pop("_times", {})
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("workers", "output")}
    doc = {
        "report": {"command": args.command, "config": config, "result": body, "ok": ok},
        "runtime": {"seconds": elapsed, "workers": args.workers, "backend": kernels.BACKEND, "parts": extra_times},
    }
    doc = _plain(doc)
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return (EXIT_OK if ok else EXIT_VIOLATION), doc


def main(argv=None) -> int:
    code, _ = run(sys.argv[1:] if argv is None else argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
