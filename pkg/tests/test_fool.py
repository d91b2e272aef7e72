import tracemalloc

import numpy as np
import pytest

from conftest import bits_space, parity_automaton, random_space
from foolkit.automata import (
    DrivestreamDistribution,
    ProbabilitySpace,
    StepDistribution,
    TableAutomaton,
    analysis_metrics,
    confusion_vectors,
    distribution_expectation,
    exact_suffix_expectations,
    fold_states,
    product_automaton,
    reachable_sets,
)
from foolkit.fool import (
    FoolConfig,
    VhatProvider,
    best_entry,
    compute_vhat_generic,
    exact_vhat,
    fool,
    fool_detailed,
    verify_fooling,
)
from foolkit.prediction import build_product
from foolkit.reduce import ReduceConfig, reduce_detailed


def clamp_counter(n, top):
    """Counts ones, saturating at ``top``."""
    return TableAutomaton.from_function(bits_space(n), top + 1, lambda t, v, s: min(s + v, top))


def exact_error(space, F, W, D, states=None):
    V = exact_suffix_expectations(space, F, W)
    states = np.arange(F.num_states) if states is None else states
    return np.abs(distribution_expectation(F, D, W, states) - V[0][states])


def test_delta_formula():
    cfg = FoolConfig(0.5)
    assert cfg.delta(4) == 0.5 / (20 * 3)
    assert cfg.delta(1) == 0.5 / 20
    with pytest.raises(ValueError):
        FoolConfig(0.5, vhat_mode="magic")
    with pytest.raises(ValueError):
        FoolConfig(0.5, workers=0)


def test_single_step_is_omega():
    sp = ProbabilitySpace((StepDistribution(np.arange(3), np.array([0.2, 0.3, 0.5])),))
    F = TableAutomaton([np.array([[0, 1], [1, 0], [1, 1]])])
    W = np.array([1.0, 0.0])
    D, info = fool_detailed(sp, F, W, FoolConfig(0.25))
    assert np.array_equal(D.entries[: D.num_real, 0], [0, 1, 2])
    assert np.array_equal(D.probs[:3], sp.steps[0].probs)
    assert info.merges == []


def test_parity_n4():
    sp = bits_space(4)
    F = parity_automaton(4)
    W = np.array([1.0, 0.0])
    D = fool(sp, F, W, FoolConfig(0.5))
    var = analysis_metrics(sp, F, W).variability
    err = exact_error(sp, F, W, D)
    assert np.all(np.abs(distribution_expectation(F, D, W) - 0.5) <= 0.5 * var + 1e-12)
    assert np.all(err <= 0.5 * var + 1e-12)


def test_two_counters_n8_per_block():
    sp = bits_space(8)
    A, B = clamp_counter(8, 5), clamp_counter(8, 3)
    F, W, off = product_automaton([(A, (np.arange(6) >= 4).astype(float)), (B, np.array([0.0, 0.2, 0.5, 1.0]))], sp)
    eps = 0.25
    D = fool(sp, F, W, FoolConfig(eps), starts=[off[0], off[1]])
    for blk, (G, Wb) in enumerate([(A, (np.arange(6) >= 4).astype(float)), (B, np.array([0.0, 0.2, 0.5, 1.0]))]):
        var = analysis_metrics(sp, G, Wb).variability[0]
        got = distribution_expectation(F, D, W, [off[blk]])[0]
        want = exact_suffix_expectations(sp, G, Wb)[0][0]
        assert abs(got - want) <= eps * var + 1e-12


def test_vhat_generic_deterministic_space():
    sp = ProbabilitySpace(tuple(StepDistribution.point(0) for _ in range(4)))
    F = TableAutomaton([np.array([[1, 2, 0]]) for _ in range(4)])
    W = np.array([5.0, 7.0, 11.0])
    V = compute_vhat_generic(sp, F, W).vectors
    for t in range(5):
        finals = [(s + (4 - t)) % 3 for s in range(3)]
        assert np.array_equal(V[t], W[finals])


def test_vhat_generic_matches_dp():
    rng = np.random.default_rng(8)
    sp = random_space(rng, 8)
    F = TableAutomaton.random(sp, 6, rng)
    W = rng.random(6)
    P = compute_vhat_generic(sp, F, W)
    V = exact_suffix_expectations(sp, F, W)
    assert np.max(np.abs(P.vectors - V)) <= 1e-12
    assert np.max(np.abs(P.vectors - V)) <= P.beta
    assert np.array_equal(P.vectors[-1], W)


def test_vhat_generic_parity_half():
    V = compute_vhat_generic(bits_space(8), parity_automaton(8), np.array([1.0, 0.0])).vectors
    assert np.allclose(V[:8], 0.5, atol=1e-15)
    with pytest.raises(ValueError):
        compute_vhat_generic(bits_space(3), parity_automaton(3), np.array([1.0, 0.0]))


def test_vhat_validation():
    sp = bits_space(2)
    F = parity_automaton(2)
    W = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        fool(sp, F, W, FoolConfig(0.25), vhat=VhatProvider(np.zeros((3, 3)), 0.0))
    bad = exact_vhat(sp, F, W).vectors.copy()
    bad[-1] = [0.9, 0.0]
    with pytest.raises(ValueError):
        fool(sp, F, W, FoolConfig(0.25), vhat=VhatProvider(bad, 0.0))
    with pytest.raises(ValueError):
        VhatProvider(np.zeros((3, 2)), -1.0)


def test_verify_omega_slack_equals_bound():
    sp = bits_space(3)
    F = clamp_counter(3, 2)
    W = np.array([0.0, 0.5, 1.0])
    var = analysis_metrics(sp, F, W).variability
    rep = verify_fooling(DrivestreamDistribution.full(sp), sp, F, W, var, 0.25)
    assert rep.ok
    assert np.all(np.abs(rep.slack - rep.bound) <= 1e-12)
    assert np.allclose(rep.bound, 0.25 * var)


def test_verify_point_mass_detected():
    sp = bits_space(3)
    F = clamp_counter(3, 3)
    W = np.array([0.0, 0.0, 0.0, 1.0])
    var = analysis_metrics(sp, F, W).variability
    full = DrivestreamDistribution.full(sp)
    # worst drivestream for state 0 by enumeration
    fin = W[fold_states(F, 0, full.entries, [0])[:, 0]]
    worst = int(np.argmax(np.abs(fin - exact_suffix_expectations(sp, F, W)[0][0])))
    D = DrivestreamDistribution.build(0, full.entries[worst : worst + 1], np.array([1.0]))
    rep = verify_fooling(D, sp, F, W, var, 0.25)
    assert not rep.ok and 0 in rep.failures


def test_certified_non_exact_merge_n2():
    rng = np.random.default_rng(2)
    sp = bits_space(2)
    F = TableAutomaton.random(sp, 4, rng)
    W = rng.random(4)
    cfg = FoolConfig(0.5, exact_if_small=False)
    D, info = fool_detailed(sp, F, W, cfg)
    assert info.certified and not info.any_exact
    assert D.num_real == info.merges[0][2] > 4
    var = analysis_metrics(sp, F, W).variability
    rep = verify_fooling(D, sp, F, W, var, 0.5)
    assert rep.ok


def test_exact_short_circuit_matches_reduce_exact_path():
    rng = np.random.default_rng(4)
    sp = random_space(rng, 4, 3)
    F = TableAutomaton.random(sp, 5, rng)
    W = rng.random(5)
    D_fast, info = fool_detailed(sp, F, W, FoolConfig(0.25))
    assert info.any_exact
    # the same merges through the prediction-structure route
    level = [DrivestreamDistribution.from_step(sp, t) for t in range(4)]
    V = exact_suffix_expectations(sp, F, W)
    rc = ReduceConfig(min(info.delta, 0.5), exact_if_small=True)
    h = 1
    while h < 4:
        nxt = []
        for k, t in enumerate(range(0, 4, 2 * h)):
            Q = build_product(level[2 * k], level[2 * k + 1], F, V[t + 2 * h], np.arange(5))
            nxt.append(reduce_detailed(Q, F, V[t + 2 * h], rc)[0])
        level, h = nxt, 2 * h
    assert np.array_equal(level[0].entries, D_fast.entries)
    assert np.array_equal(level[0].probs, D_fast.probs)


def test_worker_count_does_not_change_output():
    rng = np.random.default_rng(6)
    sp = bits_space(8)
    F = TableAutomaton.random(sp, 4, rng)
    W = rng.random(4)
    outs = [fool(sp, F, W, FoolConfig(0.25, size_cap=16, workers=w)) for w in (1, 4, 8)]
    for D in outs[1:]:
        assert np.array_equal(D.entries, outs[0].entries) and np.array_equal(D.probs, outs[0].probs)


def test_capped_run_is_uncertified():
    sp = bits_space(8)
    F = parity_automaton(8)
    D, info = fool_detailed(sp, F, np.array([1.0, 0.0]), FoolConfig(0.25, size_cap=8))
    assert not info.certified
    assert D.num_real <= 8


def test_product_merge_memory_is_linear():
    """Building the virtual product allocates far less than materializing it."""
    rng = np.random.default_rng(0)
    sp = ProbabilitySpace(tuple(StepDistribution.uniform(list(range(4))) for _ in range(8)))
    F = TableAutomaton.random(sp, 4, rng)
    size = 512
    D1 = DrivestreamDistribution.build(0, rng.integers(0, 4, (size, 4)), np.full(size, 1.0 / size))
    D2 = DrivestreamDistribution.build(4, rng.integers(0, 4, (size, 4)), np.full(size, 1.0 / size))
    w = rng.random(4)
    tracemalloc.start()
    Q = build_product(D1, D2, F, w)
    Q.probs_at(Q.depth, np.arange(8))
    Q.expect_at(Q.depth, np.arange(8))
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert Q.materialized_entries == 2 * size
    materialized_bytes = size * size * 8 * 8  # entries alone, int64
    assert peak < materialized_bytes / 20


def test_suffix_consistency_spot_check():
    """alpha(s, V_{t+h}, Omega_{t,t+h}) <= 2 * sum of max reachable confusion."""
    rng = np.random.default_rng(12)
    for _ in range(5):
        sp = random_space(rng, 6, 3)
        F = TableAutomaton.random(sp, 5, rng)
        W = rng.random(5)
        V = exact_suffix_expectations(sp, F, W)
        conf = confusion_vectors(sp, F, V)
        for s in range(5):
            for t, h in [(0, 2), (2, 2), (0, 4), (1, 3)]:
                D = DrivestreamDistribution.full(sp, t, t + h)
                live = D.entries[D.probs > 0]
                for s0 in reachable_sets(sp, F, [s])[t]:
                    vals = V[t + h][fold_states(F, t, live, [s0])[:, 0]]
                    # confusion over states reachable from s0 inside the window
                    cur = np.array([s0])
                    total = 0.0
                    for k in range(t, t + h):
                        total += conf[k][cur].max()
                        syms = np.flatnonzero(sp.steps[k].probs > 0)
                        cur = np.unique(np.concatenate([F.next_states(k, j, cur) for j in syms]))
                    assert vals.max() - vals.min() <= 2 * total + 1e-12


def test_best_entry_first_maximizer():
    assert best_entry(np.array([0.1, 0.5, 0.5, 0.2])) == 1
