import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import bits_space
from foolkit.automata import ProbabilitySpace, StepDistribution, exact_suffix_expectations
from foolkit.counters import (
    CounterBank,
    CounterSpec,
    build_truncated,
    build_truthful,
    damped_weight,
    measure_escape,
    potential,
    round_half_even,
    span_for,
    truncation_error_report,
)


def pm_spec(n, delta=0.01, b_scale=0.5, B=None):
    return CounterSpec.build(bits_space(n), [np.array([-1, 1])] * n, delta, b_scale, B)


def test_update_rule_examples():
    bank = CounterBank([np.array([[1]])], 5)
    s0 = bank.start_states()[0]
    assert bank.next_states(0, 0, s0) == s0 + 1
    top = 2 * 5  # offset +B
    assert bank.next_states(0, 0, top) == bank.bottom
    assert bank.next_states(0, 0, bank.bottom) == bank.bottom


@given(st.integers(0, 2**32 - 1))
def test_reject_absorbing_and_clamp(seed):
    rng = np.random.default_rng(seed)
    B = int(rng.integers(1, 6))
    incs = [rng.integers(-3, 4, size=(3, 2)) for _ in range(4)]
    bank = CounterBank(incs, B)
    for t in range(4):
        for row in range(2):
            base = row * bank.width
            for loc in range(bank.width):
                for sym in range(3):
                    out = bank.next_states(t, sym, base + loc) - base
                    if loc == bank.bottom:
                        assert out == bank.bottom
                    else:
                        c = loc - B + incs[t][sym, row]
                        assert out == (c + B if abs(c) <= B else bank.bottom)


def test_potential_values():
    assert potential(0, 12) == 1.0
    assert potential(None, 12) == 0.0
    assert potential(6, 12) == 0.5
    assert potential(-6, 12) == 0.5
    assert potential(8, 12) == 0.0   # |c| = 2B/3
    assert potential(4, 12) == 1.0   # |c| = B/3
    assert potential(12, 12) == 0.0


def test_damped_weight():
    B = 12
    Wt = damped_weight(lambda c: np.abs(c) + 1.0, B)
    assert Wt[2 * B + 1] == 0.0
    assert Wt[B] == 1.0                  # phi = 1 at c = 0
    assert Wt[B + 3] == 4.0              # phi = 1 inside B/3
    assert Wt[B + 8] == 0.0              # c = 2B/3
    assert Wt[B + 6] == 0.5 * 7.0


def test_symmetric_zero_mean_anchors_vanish():
    spec = pm_spec(10)
    assert np.all(spec.anchors == 0)
    assert spec.mu.tolist() == [0.0] * 10
    assert spec.kappa == 10.0 and spec.M == 1.0


def test_anchors_recomputed():
    sp = ProbabilitySpace(tuple(StepDistribution(np.arange(2), np.array([0.25, 0.75])) for _ in range(6)))
    spec = CounterSpec.build(sp, [np.array([0, 1])] * 6, 0.01, 1.0)
    assert np.array_equal(spec.anchors, round_half_even(np.cumsum(np.full(6, 0.75))))
    assert spec.anchors.tolist() == [1, 2, 2, 3, 4, 4]  # 0.75, 1.5, 2.25, 3.0, 3.75, 4.5 (ties to even)
    incs = spec.increments()
    assert incs[0].tolist() == [-1, 0] and incs[2].tolist() == [0, 1]


def test_span_formula():
    spec = pm_spec(16, delta=0.01, b_scale=0.5)
    assert spec.B == math.ceil(0.5 * (1 + 1 + 4) * math.log(16 / 0.01))
    assert span_for(1, 16, 16, 0.01, 0.5) == spec.B
    with pytest.raises(ValueError):
        pm_spec(16, B=spec.B - 1)
    with pytest.raises(ValueError):
        CounterSpec.build(bits_space(2), [np.array([1, 0])], 0.1, 1.0)
    with pytest.raises(ValueError):
        CounterSpec.build(bits_space(1), [np.array([1, 0])], 1.5, 1.0)


def test_truthful_guard():
    with pytest.raises(ValueError):
        build_truthful(pm_spec(8), guard=5)


def test_zero_weight_report_all_zero():
    spec = pm_spec(8)
    rep = truncation_error_report(spec, bits_space(8), lambda c: np.zeros(np.shape(c)))
    assert rep.gap_a == 0.0 and rep.gap_b == 0.0
    assert np.all(rep.confusion == 0)


def test_constant_weight_no_escape_gaps_zero():
    # walks of length 6 never leave B/3 when B = 18
    spec = pm_spec(6, B=18)
    rep = truncation_error_report(spec, bits_space(6), lambda c: np.ones(np.shape(c)))
    assert rep.gap_a == 0.0 and rep.gap_b == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_pm_counter_gaps_within_bound(seed):
    n = 8
    rng = np.random.default_rng(seed)
    sp = bits_space(n)
    f = [np.array([-1, 1]) * int(rng.integers(1, 3)) for _ in range(n)]
    spec = CounterSpec.build(sp, f, 0.01, 0.5)
    coef = rng.normal(size=3)
    W = lambda c: np.tanh(coef[0] + coef[1] * np.asarray(c) / 4 + coef[2] * (np.asarray(c) / 4) ** 2)
    _, delta_meas = measure_escape(spec, 20_000, np.random.default_rng(100 + seed))
    rep = truncation_error_report(spec, sp, W, delta=delta_meas)
    assert rep.gap_a <= delta_meas * rep.Delta
    assert rep.gap_b <= delta_meas * rep.Delta
    assert rep.worst_c_excess() <= 1e-12


def test_huge_span_truncated_equals_truthful():
    n = 6
    spec = pm_spec(n, B=40)
    sp = bits_space(n)
    Ft, Ff = build_truncated(spec), build_truthful(spec)
    W = lambda c: np.asarray(c, dtype=float) ** 2
    Vt = exact_suffix_expectations(sp, Ft, damped_weight(W, spec))
    c = Ff.offsets()
    Vf = exact_suffix_expectations(sp, Ff, np.where(np.abs(c) <= 40, W(c) * potential(c, 40), 0.0))
    # offsets reachable from 0 by time t stay within t
    for t in range(n + 1):
        for off in range(-t, t + 1):
            assert Vt[t][off + 40] == Vf[t][off + Ff.K]


def test_measure_escape_sanity():
    spec = pm_spec(16, B=100)
    p, hi = measure_escape(spec, 5000, np.random.default_rng(0))
    assert p == 0.0 and 0 < hi < 0.01  # range 16 < 0.15 * 100 never escapes
    spec2 = pm_spec(16, b_scale=0.1, B=10)
    p2, hi2 = measure_escape(spec2, 5000, np.random.default_rng(0))
    assert 0.5 < p2 <= hi2 <= 1.0
