import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from foolkit.automata import ProbabilitySpace, StepDistribution, TableAutomaton

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def bits_space(n: int) -> ProbabilitySpace:
    return ProbabilitySpace.uniform_bits(n)


def parity_automaton(n: int) -> TableAutomaton:
    """s -> s xor r over n uniform-bit steps."""
    tb = np.array([[0, 1], [1, 0]])
    return TableAutomaton([tb.copy() for _ in range(n)])


def random_space(rng, n: int, max_sigma: int = 3) -> ProbabilitySpace:
    steps = []
    for _ in range(n):
        k = int(rng.integers(1, max_sigma + 1))
        p = rng.random(k) + 0.05
        steps.append(StepDistribution(np.arange(k), p / p.sum()))
    return ProbabilitySpace(tuple(steps))
