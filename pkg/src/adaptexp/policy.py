"""Sequential assignment rules for the two-armed experiment.

Rules are vectorised over replications: state arrays have shape ``(2, B)``
indexed by arm (row 0 is arm 0, row 1 is arm 1). A rule sees pull counts,
outcome sums, the round index and its own random generator; it never sees
the outcome stacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ArmModel, Family

__all__ = [
    "ThompsonBeta",
    "Ucb",
    "Fixed",
    "Alternating",
    "PolicyState",
    "ucb_index",
    "choose",
    "next_arm",
    "check_policy",
]


@dataclass(frozen=True)
class ThompsonBeta:
    prior_alpha: float = 1.0
    prior_beta: float = 1.0

    def __post_init__(self):
        if not (self.prior_alpha > 0 and self.prior_beta > 0):
            raise ValueError("Beta prior parameters must be positive")

    @property
    def name(self) -> str:
        return "ts"


@dataclass(frozen=True)
class Ucb:
    # Evaluate the bonus as printed, sqrt(2 ln(j/n) / N), with negative
    # radicands mapped to a zero bonus.
    log_j_over_n: bool = False

    @property
    def name(self) -> str:
        return "ucb"


@dataclass(frozen=True)
class Fixed:
    pi1: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.pi1 <= 1.0:
            raise ValueError(f"pi1 must lie in [0, 1], got {self.pi1}")

    @property
    def name(self) -> str:
        return "fixed"


@dataclass(frozen=True)
class Alternating:
    """Arm 1 on odd rounds, arm 0 on even rounds."""

    @property
    def name(self) -> str:
        return "alternating"


PolicyKind = ThompsonBeta | Ucb | Fixed | Alternating


@dataclass
class PolicyState:
    """Single-replication state before round ``j + 1``.

    ``counts[a]`` is the number of pulls of arm ``a`` and ``sums[a]`` the sum
    of its outcomes.
    """

    n: int
    counts: list = field(default_factory=lambda: [0, 0])
    sums: list = field(default_factory=lambda: [0.0, 0.0])

    @property
    def j(self) -> int:
        return int(self.counts[0] + self.counts[1])

    def update(self, arm: int, y: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += y


def check_policy(kind, models) -> None:
    """Reject policy/model pairings that are not defined."""
    if isinstance(kind, ThompsonBeta):
        for m in (models if isinstance(models, tuple) else (models,)):
            if isinstance(m, ArmModel) and m.family is not Family.BERNOULLI:
                raise ValueError("Beta-Thompson sampling is defined for Bernoulli outcomes only")


def ucb_index(mean, N, j, n, log_j_over_n: bool = False):
    """Upper confidence index ``mean + sqrt(2 ln(n/j) / N)``.

    ``N == 0`` returns ``+inf`` to force an initial pull. With
    ``log_j_over_n`` the radicand is ``2 ln(j/n) / N``; negative values give
    a zero bonus.
    """
    mean = np.asarray(mean, dtype=float)
    N = np.asarray(N, dtype=float)
    j = np.asarray(j, dtype=float)
    if np.any(j < 1) or np.any(j > n):
        raise ValueError("round index must satisfy 1 <= j <= n")
    log_term = np.log(j / n) if log_j_over_n else np.log(n / j)
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.sqrt(np.maximum(2.0 * log_term, 0.0) / N)
        out = np.where(N > 0, mean + bonus, np.inf)
    return float(out) if out.ndim == 0 else out


def choose(kind, counts, sums, j: int, n: int, gen: np.random.Generator) -> np.ndarray:
    """Arm choices for round ``j`` (1-based) across replications."""
    B = counts.shape[1]
    if isinstance(kind, ThompsonBeta):
        fails = counts - sums
        d1 = gen.beta(kind.prior_alpha + sums[1], kind.prior_beta + fails[1])
        d0 = gen.beta(kind.prior_alpha + sums[0], kind.prior_beta + fails[0])
        return (d1 >= d0).astype(np.int8)
    if isinstance(kind, Ucb):
        with np.errstate(divide="ignore", invalid="ignore"):
            means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
        i1 = ucb_index(means[1], counts[1], j, n, kind.log_j_over_n)
        i0 = ucb_index(means[0], counts[0], j, n, kind.log_j_over_n)
        coin = gen.random(B) < 0.5
        i1 = np.atleast_1d(i1)
        i0 = np.atleast_1d(i0)
        return np.where(i1 == i0, coin, i1 > i0).astype(np.int8)
    if isinstance(kind, Fixed):
        return (gen.random(B) < kind.pi1).astype(np.int8)
    if isinstance(kind, Alternating):
        return np.full(B, j % 2, dtype=np.int8)
    raise TypeError(f"unknown policy {kind!r}")


def next_arm(kind, state: PolicyState, gen: np.random.Generator) -> int:
    if state.j >= state.n:
        raise ValueError("experiment horizon already reached")
    counts = np.asarray(state.counts, dtype=float).reshape(2, 1)
    sums = np.asarray(state.sums, dtype=float).reshape(2, 1)
    return int(choose(kind, counts, sums, state.j + 1, state.n, gen)[0])
