"""Generation strategies and their sampling distribution.

Three closed strategies: ``correct`` (rewrite the product so the new value
is consistently reflected), ``incorrect`` (keep the correct value primary
but inject one subtle conflicting mention), and ``unknown`` (remove every
reference to the attribute).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from random import Random

PROBABILITY_SUM_TOLERANCE = 1e-9


class StrategyLabel(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNKNOWN = "unknown"

    def __str__(self) -> str:  # serialize as the bare value
        return self.value


class ProbabilityError(ValueError):
    """A strategy probability triple violates its invariants."""


@dataclass(frozen=True)
class StrategyProbabilities:
    """Categorical distribution over the three strategies.

    Each entry must lie in [0, 1] and the three must sum to 1 within
    1e-9.  The default mirrors the 50/25/25 production split.
    """

    pi_correct: float = 0.5
    pi_incorrect: float = 0.25
    pi_unknown: float = 0.25

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.pi_correct, self.pi_incorrect, self.pi_unknown)

    @classmethod
    def parse(cls, spec: str) -> "StrategyProbabilities":
        """Parse a ``a,b,c`` CLI triple."""
        parts = [part.strip() for part in spec.split(",")]
        if len(parts) != 3:
            raise ProbabilityError(f"expected three comma-separated values, got {spec!r}")
        try:
            values = tuple(float(part) for part in parts)
        except ValueError as exc:
            raise ProbabilityError(f"non-numeric probability in {spec!r}") from exc
        p = cls(*values)
        validate_probabilities(p)
        return p


def validate_probabilities(p: StrategyProbabilities) -> None:
    """Raise ProbabilityError naming the violated constraint."""
    for name, value in (
        ("pi_correct", p.pi_correct),
        ("pi_incorrect", p.pi_incorrect),
        ("pi_unknown", p.pi_unknown),
    ):
        if not (0.0 <= value <= 1.0):
            raise ProbabilityError(f"{name} = {value} outside [0, 1]")
    total = p.pi_correct + p.pi_incorrect + p.pi_unknown
    if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
        raise ProbabilityError(f"probabilities sum {total:g} != 1")


def sample_strategy(p: StrategyProbabilities, rng: Random) -> StrategyLabel:
    """One categorical draw from a single uniform sample.

    Cumulative thresholds are applied in the fixed order (correct,
    incorrect, unknown) so any implementation sharing the RNG stream
    reproduces the same labels.  Zero-probability classes never occur.
    """
    validate_probabilities(p)
    u = rng.random()
    if u < p.pi_correct:
        return StrategyLabel.CORRECT
    if u < p.pi_correct + p.pi_incorrect:
        return StrategyLabel.INCORRECT
    return StrategyLabel.UNKNOWN
