"""Outcome families, local parametrisation, scores and Fisher information.

Two arms, one scalar parameter per arm. Local alternatives are written
``theta0 + h / sqrt(n)``; the Bernoulli family is the primary one, the
unit-variance Gaussian family is an exact-LAN control.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .montecarlo import McEstimate, Stream, as_stream

__all__ = [
    "Family",
    "ArmModel",
    "LocalParam",
    "McEstimate",
    "score",
    "fisher_info",
    "local_theta",
    "sample_stack",
    "draw_outcomes",
    "log_lr",
    "kl_divergence",
    "arm_pair",
    "PointMassPrior",
    "GaussianLocalPrior",
    "DiscretePrior",
]


class Family(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ArmModel:
    family: Family
    theta0: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        t = float(self.theta0)
        object.__setattr__(self, "theta0", t)
        if self.family is Family.BERNOULLI and not 0.0 < t < 1.0:
            raise DomainError(f"Bernoulli reference parameter must lie in (0, 1), got {t}")
        if not np.isfinite(t):
            raise DomainError("reference parameter must be finite")

    @classmethod
    def bernoulli(cls, theta0: float) -> "ArmModel":
        return cls(Family.BERNOULLI, theta0)

    @classmethod
    def gaussian(cls, theta0: float = 0.0) -> "ArmModel":
        return cls(Family.GAUSSIAN, theta0)


@dataclass(frozen=True)
class LocalParam:
    h1: float
    h0: float

    def __post_init__(self):
        if not (np.isfinite(self.h1) and np.isfinite(self.h0)):
            raise ValueError("local parameters must be finite")

    def arm(self, a: int) -> float:
        return self.h1 if a == 1 else self.h0


def arm_pair(models) -> tuple[ArmModel, ArmModel]:
    """Index ``models`` by arm.

    Public pairs are written arm 1 first, ``(model_1, model_0)``, like
    ``LocalParam(h1, h0)``; the result is ``(model_0, model_1)`` so that
    ``arm_pair(models)[a]`` is arm ``a``'s model. A single :class:`ArmModel`
    is shared by both arms.
    """
    if isinstance(models, ArmModel):
        return (models, models)
    m1, m0 = models
    return (m0, m1)


def score(model: ArmModel, y):
    """Score at the reference parameter, ``psi(y)``."""
    y = np.asarray(y, dtype=float)
    if model.family is Family.BERNOULLI:
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DomainError("Bernoulli outcomes must be 0 or 1")
        t = model.theta0
        out = (y - t) / (t * (1.0 - t))
    else:
        out = y - model.theta0
    return float(out) if out.ndim == 0 else out


def fisher_info(model: ArmModel) -> float:
    if model.family is Family.BERNOULLI:
        return 1.0 / (model.theta0 * (1.0 - model.theta0))
    return 1.0


def local_theta(model: ArmModel, h, n: int):
    if n < 1:
        raise ValueError("n must be >= 1")
    theta = model.theta0 + np.asarray(h, dtype=float) / np.sqrt(n)
    if model.family is Family.BERNOULLI and not np.all((theta > 0.0) & (theta < 1.0)):
        raise DomainError(f"local parameter leaves (0, 1): theta0={model.theta0}, h={h}, n={n}")
    return float(theta) if theta.ndim == 0 else theta


def draw_outcomes(family: Family, theta, n: int, gen: np.random.Generator) -> np.ndarray:
    """i.i.d. outcome stacks, one row per entry of ``theta``: shape ``(len(theta), n)``.

    Data-generating Bernoulli parameters may sit on the boundary {0, 1}; only
    reference parameters are restricted to the open interval.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if Family(family) is Family.BERNOULLI:
        if np.any((theta < 0.0) | (theta > 1.0)):
            raise DomainError("Bernoulli parameters must lie in [0, 1]")
        return (gen.random((theta.size, n)) < theta[:, None]).astype(float)
    return theta[:, None] + gen.standard_normal((theta.size, n))


def sample_stack(model: ArmModel, h: float, n: int, rng) -> np.ndarray:
    """Stack of ``n`` potential outcomes drawn at ``local_theta(model, h, n)``."""
    theta = local_theta(model, h, n)
    gen = rng if isinstance(rng, np.random.Generator) else as_stream(rng).generator()
    return draw_outcomes(model.family, [theta], n, gen)[0]


def log_lr(model: ArmModel, theta, y):
    """Per-observation ``ln dP_theta / dP_theta0 (y)``."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    t0 = model.theta0
    if model.family is Family.BERNOULLI:
        if np.any((theta <= 0.0) | (theta >= 1.0)):
            raise DomainError("Bernoulli alternative must lie in (0, 1)")
        return y * np.log(theta / t0) + (1.0 - y) * np.log((1.0 - theta) / (1.0 - t0))
    d = theta - t0
    return d * (y - t0) - 0.5 * d * d


def kl_divergence(model: ArmModel, theta) -> float:
    """``KL(P_theta || P_theta0)`` for one observation."""
    t0 = model.theta0
    theta = float(theta)
    if model.family is Family.BERNOULLI:
        if not 0.0 < theta < 1.0:
            raise DomainError("Bernoulli alternative must lie in (0, 1)")
        d = theta - t0
        kl = theta * np.log1p(d / t0) + (1.0 - theta) * np.log1p(-d / (1.0 - t0))
        return max(float(kl), 0.0)  # cancellation can leave -1e-17 for tiny d
    return 0.5 * (theta - t0) ** 2


# Distributions over local parameters, used as Bayes priors and mGRO weights.


@dataclass(frozen=True)
class PointMassPrior:
    h: LocalParam

    def sample(self, gen: np.random.Generator, size: int):
        return np.full(size, self.h.h1), np.full(size, self.h.h0)


@dataclass(frozen=True)
class GaussianLocalPrior:
    """Independent ``N(mu1, nu2_1) x N(mu0, nu2_0)``; zero variance is allowed."""

    mu1: float = 0.0
    nu2_1: float = 1.0
    mu0: float = 0.0
    nu2_0: float = 1.0

    def __post_init__(self):
        if self.nu2_1 < 0 or self.nu2_0 < 0:
            raise ValueError("prior variances must be non-negative")

    def sample(self, gen: np.random.Generator, size: int):
        z = gen.standard_normal((2, size))
        return (
            self.mu1 + np.sqrt(self.nu2_1) * z[0],
            self.mu0 + np.sqrt(self.nu2_0) * z[1],
        )


@dataclass(frozen=True)
class DiscretePrior:
    points: Sequence[tuple[float, float]]
    weights: Sequence[float]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.points) != w.size or w.size == 0:
            raise ValueError("points and weights must be non-empty and of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be non-negative and sum to 1")

    def sample(self, gen: np.random.Generator, size: int):
        pts = np.asarray(self.points, dtype=float)
        idx = gen.choice(len(pts), size=size, p=np.asarray(self.weights, dtype=float))
        return pts[idx, 0], pts[idx, 1]
