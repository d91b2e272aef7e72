"""Numerical tolerances shared by every module.

Probabilities are float64 throughout; all drift budgets live here so that
they can be audited (and fed into beta accounting) in one place.
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    prob_sum: float = 1e-12
    row_sum: float = 1e-10
    disc_recompute: float = 1e-9
    unit_norm: float = 1e-8
    vhat_match: float = 1e-9


TOL = Tolerances()

# Machine epsilon for float64; used by the conservative beta models.
EPS64 = 2.0 ** -52

# Exhaustive oracles refuse above this many total drivestreams.
MAX_ENUMERATION = 2 ** 20
