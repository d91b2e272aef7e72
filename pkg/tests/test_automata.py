import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import bits_space, parity_automaton, random_space
from foolkit.automata import (
    Drivestream,
    DrivestreamDistribution,
    ProbabilitySpace,
    StepDistribution,
    Symbol,
    TableAutomaton,
    TransitionMatrix,
    analysis_metrics,
    confusion_vectors,
    distribution_expectation,
    exact_suffix_expectations,
    expected_weight,
    fold_states,
    product_automaton,
    product_distribution,
    reachable_sets,
    state_map,
    step,
    total_variability,
    transition_matrix,
)
from foolkit.fool import compute_vhat_generic


def identity_automaton(eta, n, sigma=2):
    return TableAutomaton([np.tile(np.arange(eta), (sigma, 1)) for _ in range(n)])


def clamped_counter(n):
    # states {0,1,2}; symbol value v adds v, clamped at 2
    tb = np.array([[0, 1, 2], [1, 2, 2]])
    return TableAutomaton([tb.copy() for _ in range(n)])


# -- steps and spaces ----------------------------------------------------------

def test_step_distribution_validation():
    with pytest.raises(ValueError):
        StepDistribution(np.array([0, 1]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        StepDistribution(np.array([0, 0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        StepDistribution(np.array([], dtype=int), np.array([]))
    with pytest.raises(ValueError):
        StepDistribution(np.array([0, 1]), np.array([1.5, -0.5]))


def test_space_sigma_and_padding():
    sp = ProbabilitySpace((StepDistribution.uniform([0, 1, 2]), StepDistribution.uniform([0, 1]),
                           StepDistribution.point(4)))
    assert sp.sigma == 6
    padded = sp.padded()
    assert padded.n == 4 and padded.steps[3].size == 1
    assert padded.sigma == 7
    assert bits_space(4).padded().n == 4


# -- step ----------------------------------------------------------------------

def test_step_identity_parity_and_clamp():
    F = identity_automaton(3, 2)
    assert step(F, 2, Symbol(0, 1)) == 2
    P = parity_automaton(1)
    assert step(P, 0, Symbol(0, 1)) == 1
    Cc = clamped_counter(1)
    assert step(Cc, 2, Symbol(0, 1)) == 2


def test_step_validation():
    P = parity_automaton(2)
    with pytest.raises(ValueError):
        step(P, 5, Symbol(0, 0))
    with pytest.raises(ValueError):
        step(P, 0, Symbol(0, 2))
    with pytest.raises(ValueError):
        step(P, 0, Symbol(3, 0), bits_space(2))


def test_steps_past_horizon_are_identity():
    P = parity_automaton(2)
    assert np.array_equal(P.next_states(5, 1, np.arange(2)), np.arange(2))


# -- state maps ------------------------------------------------------------------

def test_state_map_identity_and_parity():
    assert np.array_equal(state_map(identity_automaton(4, 3), Drivestream(0, np.array([1, 0, 1]))), np.arange(4))
    assert np.array_equal(state_map(parity_automaton(3), Drivestream(0, np.array([1, 1, 0]))), [0, 1])


@given(st.integers(0, 2**32 - 1), st.integers(1, 64), st.integers(1, 16))
def test_state_map_matches_sequential_fold(seed, h, eta):
    rng = np.random.default_rng(seed)
    sp = bits_space(h)
    F = TableAutomaton.random(sp, eta, rng)
    r = rng.integers(0, 2, size=h)
    naive = np.arange(eta)
    for t in range(h):
        naive = np.array([F.tables[t][r[t], s] for s in naive])
    assert np.array_equal(state_map(F, Drivestream(0, r)), naive)
    assert np.array_equal(fold_states(F, 0, r[None, :], np.arange(eta))[0], naive)


def test_drivestream_validation():
    sp = ProbabilitySpace((StepDistribution(np.array([0, 1]), np.array([1.0, 0.0])),))
    with pytest.raises(ValueError):
        Drivestream(0, np.array([1])).validate(sp)
    with pytest.raises(ValueError):
        Drivestream(0, np.array([0, 0])).validate(sp)
    Drivestream(0, np.array([0])).validate(sp)


# -- distributions -----------------------------------------------------------------

def test_build_pads_with_dummies():
    D = DrivestreamDistribution.build(0, np.array([[0], [1], [0]]), np.array([0.2, 0.3, 0.5]))
    assert D.size == 4 and D.num_real == 3 and D.probs[3] == 0.0


def test_distribution_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        DrivestreamDistribution(0, np.zeros((3, 1)), np.full(3, 1 / 3))


def test_product_distribution_is_product_law():
    sp = random_space(np.random.default_rng(1), 2)
    D1 = DrivestreamDistribution.from_step(sp, 0)
    D2 = DrivestreamDistribution.from_step(sp, 1)
    P = product_distribution(D1, D2)
    assert P.size == D1.size * D2.size
    assert np.isclose(P.probs.sum(), 1.0)
    for a in range(D1.size):
        for b in range(D2.size):
            j = a * D2.size + b
            assert P.probs[j] == D1.probs[a] * D2.probs[b]
            assert list(P.entries[j]) == [D1.entries[a, 0], D2.entries[b, 0]]


# -- transition matrices -----------------------------------------------------------

def test_transition_matrix_parity_and_binomial():
    P = parity_automaton(1)
    T = transition_matrix(P, DrivestreamDistribution.full(bits_space(1)))
    assert np.allclose(T.rows, 0.5)
    Cc = clamped_counter(2)
    T2 = transition_matrix(Cc, DrivestreamDistribution.full(bits_space(2)))
    assert np.allclose(T2.rows[0], [0.25, 0.5, 0.25])


def test_transition_matrix_matches_monte_carlo():
    rng = np.random.default_rng(7)
    sp = bits_space(3)
    F = TableAutomaton.random(sp, 5, rng)
    D = DrivestreamDistribution.full(sp)
    T = transition_matrix(F, D)
    N = 10**6
    idx = rng.choice(D.size, size=N, p=D.probs)
    finals = fold_states(F, 0, D.entries, [2])[:, 0][idx]
    freq = np.bincount(finals, minlength=5) / N
    sigma = np.sqrt(T.rows[2] * (1 - T.rows[2]) / N)
    assert np.all(np.abs(freq - T.rows[2]) <= 3 * sigma + 1e-12)


def test_transition_matrix_rows_must_be_stochastic():
    with pytest.raises(ValueError):
        TransitionMatrix(np.array([[0.5, 0.4]]), (0, 1))


def test_expected_weight_examples():
    T = TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]), (0, 1))
    assert expected_weight(T, 0, [0, 1]) == 0.5
    assert expected_weight(T, 1, [3.0, 3.0]) == 3.0
    T3 = TransitionMatrix(np.array([[0.25, 0.5, 0.25]] * 3), (0, 2))
    assert expected_weight(T3, 0, [1, 2, 3]) == 2.0


# -- suffix expectations --------------------------------------------------------------

def test_suffix_expectations_parity_is_half():
    n = 4
    V = exact_suffix_expectations(bits_space(n), parity_automaton(n), [1.0, 0.0])
    assert np.allclose(V[:n], 0.5)
    assert np.array_equal(V[n], [1.0, 0.0])


def test_suffix_expectations_deterministic_space():
    rng = np.random.default_rng(3)
    sp = ProbabilitySpace(tuple(StepDistribution.point(0) for _ in range(3)))
    F = TableAutomaton.random(sp, 4, rng)
    W = rng.random(4)
    V = exact_suffix_expectations(sp, F, W)
    for t in range(3):
        fin = fold_states(F, t, np.zeros((1, 3 - t), dtype=int), np.arange(4))[0]
        assert np.array_equal(V[t], W[fin])


@given(st.integers(0, 2**32 - 1))
def test_suffix_expectations_satisfy_recurrence(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 5)
    F = TableAutomaton.random(sp, 6, rng)
    W = rng.random(6)
    V = exact_suffix_expectations(sp, F, W)
    for t in range(5):
        st_ = sp.steps[t]
        re = sum(st_.probs[j] * V[t + 1][F.next_states(t, j, np.arange(6))] for j in range(st_.size))
        assert np.allclose(V[t], re, atol=1e-14)


def test_suffix_expectations_equal_matrix_product_route():
    rng = np.random.default_rng(11)
    sp = bits_space(4)
    F = TableAutomaton.random(sp, 5, rng)
    W = rng.random(5)
    V = exact_suffix_expectations(sp, F, W)
    Vh = compute_vhat_generic(sp, F, W)
    assert np.max(np.abs(V - Vh.vectors)) <= Vh.beta


def test_distribution_expectation_full_equals_dp():
    rng = np.random.default_rng(5)
    sp = random_space(rng, 4)
    F = TableAutomaton.random(sp, 5, rng)
    W = rng.random(5)
    D = DrivestreamDistribution.full(sp)
    assert np.allclose(distribution_expectation(F, D, W), exact_suffix_expectations(sp, F, W)[0], atol=1e-14)


# -- analysis metrics --------------------------------------------------------------------

def test_metrics_parity_examples():
    n = 4
    M = analysis_metrics(bits_space(n), parity_automaton(n), [1.0, 0.0])
    assert np.all(M.lipschitz == 1.0)
    assert np.allclose(M.confusion[:, : n - 1], 0.0)
    assert np.allclose(M.confusion[:, n - 1], 1.0)
    assert np.allclose(M.variability, 1.0)


def test_metrics_constant_weight_are_zero():
    rng = np.random.default_rng(2)
    sp = bits_space(3)
    F = TableAutomaton.random(sp, 4, rng)
    M = analysis_metrics(sp, F, np.full(4, 2.5))
    assert np.all(M.lipschitz == 0) and np.allclose(M.confusion, 0) and np.allclose(M.variability, 0)


@given(st.integers(0, 2**32 - 1))
def test_confusion_never_exceeds_lipschitz(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 4)
    F = TableAutomaton.random(sp, 5, rng)
    M = analysis_metrics(sp, F, rng.random(5))
    assert np.all(M.confusion <= M.lipschitz + 1e-12)
    assert np.all(M.confusion >= 0) and np.all(M.variability >= 0)


def test_metrics_guard():
    with pytest.raises(ValueError):
        analysis_metrics(bits_space(21), parity_automaton(21), [1.0, 0.0])


def test_variability_from_reachability_matches_exhaustive_definition():
    rng = np.random.default_rng(9)
    sp = random_space(rng, 4)
    F = TableAutomaton.random(sp, 6, rng)
    W = rng.random(6)
    V = exact_suffix_expectations(sp, F, W)
    C = confusion_vectors(sp, F, V)
    reach = reachable_sets(sp, F, [3])
    expect = sum(C[t][reach[t]].max() for t in range(4))
    assert np.isclose(total_variability(sp, F, V, [3])[0], expect)


# -- product automata ------------------------------------------------------------------------

def test_product_of_two_parities():
    n = 3
    P = parity_automaton(n)
    prod, W, offsets = product_automaton([(P, [1.0, 0.0]), (P, [0.0, 1.0])])
    assert prod.num_states == 4 and list(offsets[:2]) == [0, 2]
    for t in range(n):
        for sym in (0, 1):
            nxt = prod.next_states(t, sym, np.arange(4))
            assert np.all((nxt < 2) == (np.arange(4) < 2))


def test_product_single_block_is_wrapper():
    rng = np.random.default_rng(4)
    sp = bits_space(3)
    F = TableAutomaton.random(sp, 4, rng)
    W = rng.random(4)
    prod, Wp, _ = product_automaton([(F, W)])
    assert np.array_equal(exact_suffix_expectations(sp, prod, Wp), exact_suffix_expectations(sp, F, W))


def test_product_preserves_block_metrics():
    rng = np.random.default_rng(6)
    sp = bits_space(4)
    F1, F2 = TableAutomaton.random(sp, 3, rng), TableAutomaton.random(sp, 4, rng)
    W1, W2 = rng.random(3), rng.random(4)
    prod, W, offs = product_automaton([(F1, W1), (F2, W2)], sp)
    Mp = analysis_metrics(sp, prod, W)
    M1, M2 = analysis_metrics(sp, F1, W1), analysis_metrics(sp, F2, W2)
    assert np.allclose(Mp.variability[:3], M1.variability) and np.allclose(Mp.variability[3:], M2.variability)
    assert np.allclose(Mp.lipschitz[3:], M2.lipschitz)
    V = exact_suffix_expectations(sp, prod, W)
    assert np.array_equal(V[:, :3], exact_suffix_expectations(sp, F1, W1))


def test_product_alphabet_mismatch():
    sp = bits_space(2)
    bad = TableAutomaton([np.zeros((3, 2), dtype=int)] * 2)
    with pytest.raises(ValueError):
        product_automaton([(bad, [0.0, 1.0])], sp)
