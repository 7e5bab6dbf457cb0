"""Post-experiment estimation and regret.

The Bayes estimator of a local parameter under a Gaussian prior depends on
the experiment only through ``(x_a(1), q_a(1))``; its finite-sample
counterpart is ``theta0 + n^{-1/2} T*``. Risks and regrets are Monte Carlo
averages over replications simulated block by block (see
:mod:`adaptexp.montecarlo`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NoInformationError
from .experiment import Trajectory, map_batches, score_path
from .model import ArmModel, LocalParam, arm_pair, fisher_info, local_theta
from .montecarlo import ROLE_PRIOR, McEstimate, Stream, as_stream

__all__ = [
    "GaussianPrior",
    "PosteriorNormal",
    "RiskCurve",
    "posterior",
    "bayes_estimate_T_star",
    "finite_sample_estimate",
    "finite_sample_estimator",
    "shrinkage_form",
    "ShrinkageEstimator",
    "PriorMeanEstimator",
    "mle",
    "frequentist_risk",
    "bayes_risk",
    "risk_curve",
    "in_sample_regret",
    "out_of_sample_regret",
    "OutOfSampleRegret",
]


@dataclass(frozen=True)
class GaussianPrior:
    """``N(mu0, nu2)`` on a local parameter; ``nu2 = inf`` is the flat prior."""

    mu0: float = 0.0
    nu2: float = math.inf

    def __post_init__(self):
        if not (self.nu2 > 0):
            raise ValueError(f"prior variance must be positive or inf, got {self.nu2}")
        if not math.isfinite(self.mu0):
            raise ValueError("prior mean must be finite")

    @property
    def precision(self) -> float:
        return 0.0 if math.isinf(self.nu2) else 1.0 / self.nu2


@dataclass(frozen=True)
class PosteriorNormal:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("posterior variance must be positive")


def _post_moments(x, q, info, prior: GaussianPrior):
    prec = info * np.asarray(q, dtype=float) + prior.precision
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = (np.sqrt(info) * np.asarray(x, dtype=float) + prior.mu0 * prior.precision) / prec
    return mean, prec


def posterior(x1: float, q1: float, info: float, prior: GaussianPrior) -> PosteriorNormal:
    """Posterior of ``h`` given the terminal signal ``x = z(q)``."""
    if not 0.0 <= q1 <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q1}")
    if not info > 0:
        raise ValueError("information must be positive")
    mean, prec = _post_moments(x1, q1, info, prior)
    if prec == 0.0:
        raise NoInformationError("flat prior and no observations: the posterior is improper")
    return PosteriorNormal(float(mean), float(1.0 / prec))


def _prior_pair(priors) -> tuple[GaussianPrior, GaussianPrior]:
    # ordered (arm 1, arm 0) like LocalParam
    if isinstance(priors, GaussianPrior):
        return priors, priors
    p1, p0 = priors
    return p1, p0


def bayes_estimate_T_star(x_pair, q_pair, infos, priors) -> LocalParam:
    """Posterior means of ``(h1, h0)``; all pairs are ordered arm 1 first."""
    p1, p0 = _prior_pair(priors)
    m1 = posterior(x_pair[0], q_pair[0], infos[0], p1).mean
    m0 = posterior(x_pair[1], q_pair[1], infos[1], p0).mean
    return LocalParam(m1, m0)


def finite_sample_estimate(x, q, model: ArmModel, n: int, prior: GaussianPrior):
    """``theta0 + T*(x, q) / sqrt(n)`` for one arm; vectorised over ``x``, ``q``.

    Entries with no information (flat prior, ``q = 0``) are ``nan``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mean, prec = _post_moments(x, q, fisher_info(model), prior)
    out = np.where(prec > 0, model.theta0 + mean / np.sqrt(n), np.nan)
    return float(out) if out.ndim == 0 else out


def shrinkage_form(theta_bar, q, sum_y, n: int, info: float, prior: GaussianPrior):
    """Weighted average of ``theta_bar`` and the scaled outcome sum.

    With ``c = 1 / (I nu2)``: ``[c theta_bar + sum_y / n + c mu0 / sqrt(n)] / (q + c)``.
    ``nu2 = inf`` gives the sample mean ``sum_y / (n q)``.
    """
    c = prior.precision / info
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (c * theta_bar + np.asarray(sum_y, dtype=float) / n + c * prior.mu0 / math.sqrt(n)) / (q + c)
    return float(out) if out.ndim == 0 else out


def finite_sample_estimator(traj: Trajectory, models, priors) -> tuple[float, float]:
    """``(theta_hat_1, theta_hat_0)`` from a trajectory's terminal statistics."""
    m0, m1 = arm_pair(models)
    p1, p0 = _prior_pair(priors)
    sp = score_path(traj, models)
    n = traj.n
    out = []
    for a, m, p in ((1, m1, p1), (0, m0, p0)):
        q = sp.alloc.counts(1.0)[a] / n if n else 0.0
        if p.precision == 0.0 and q == 0.0:
            raise NoInformationError(f"arm {a} was never pulled and the prior is flat")
        out.append(finite_sample_estimate(sp.x(a, 1.0), q, m, n, p))
    return out[0], out[1]


# Estimators used by the risk routines. Each maps the terminal statistics of a
# batch (``Batch.terminal`` plus the data-generating ``theta1``) to arm-1
# estimates, one per replication.

Estimator = Callable[[dict, ArmModel, int], np.ndarray]


@dataclass(frozen=True)
class ShrinkageEstimator:
    prior: GaussianPrior

    def __call__(self, term: dict, model: ArmModel, n: int) -> np.ndarray:
        est = finite_sample_estimate(term["x1"], term["q1"], model, n, self.prior)
        return np.where(np.isnan(est), model.theta0, est)


@dataclass(frozen=True)
class PriorMeanEstimator:
    prior: GaussianPrior

    def __call__(self, term: dict, model: ArmModel, n: int) -> np.ndarray:
        return np.full(term["q1"].shape, model.theta0 + self.prior.mu0 / math.sqrt(n))


def mle(term: dict, model: ArmModel, n: int) -> np.ndarray:
    """Arm-1 sample mean; replications without arm-1 pulls return ``theta0``."""
    return ShrinkageEstimator(GaussianPrior(0.0, math.inf))(term, model, n)


def _check_shared_reference(models, hard: bool) -> None:
    m0, m1 = arm_pair(models)
    if m0.theta0 != m1.theta0 or m0.family is not m1.family:
        msg = "arms have different reference parameters; the local asymptotics degenerate"
        if hard:
            raise ConfigError(msg)
        warnings.warn(msg, stacklevel=3)


def _risk_samples(estimator, models, theta_fn, kind, n, reps, rng, threads):
    m0, m1 = arm_pair(models)

    def fn(batch, s):
        term = batch.terminal(models)
        th1, _ = theta_fn(batch.reps, s)
        term["theta1"] = np.broadcast_to(np.asarray(th1, dtype=float), (batch.reps,))
        est = np.asarray(estimator(term, m1, n), dtype=float)
        return n * (est - term["theta1"]) ** 2

    parts = map_batches(fn, models, theta_fn, kind, n, reps, rng, threads)
    return np.concatenate(parts)


def frequentist_risk(
    estimator, models, h: LocalParam, kind, n: int, reps: int, rng, loss: str = "squared", threads: int = 1
) -> McEstimate:
    """Monte Carlo ``E[(sqrt(n) (T_n - theta_1))^2]`` for the arm-1 coordinate."""
    if loss != "squared":
        raise ValueError("only squared-error loss is supported")
    if reps < 2:
        raise ValueError("reps must be >= 2")
    _check_shared_reference(models, hard=False)
    m0, m1 = arm_pair(models)
    theta = (local_theta(m1, h.h1, n), local_theta(m0, h.h0, n))
    return McEstimate.from_samples(_risk_samples(estimator, models, lambda size, s: theta, kind, n, reps, rng, threads))


def _prior_theta_fn(prior, models, n):
    m0, m1 = arm_pair(models)

    def theta_fn(size, s: Stream):
        h1, h0 = prior.sample(s.child(ROLE_PRIOR).generator(), size)
        return local_theta(m1, np.asarray(h1), n), local_theta(m0, np.asarray(h0), n)

    return theta_fn


def bayes_risk(estimator, models, prior, kind, n: int, reps: int, rng, threads: int = 1) -> McEstimate:
    """Risk averaged over ``h`` drawn from ``prior``, one draw per replication.

    ``prior`` is any object with ``sample(gen, size) -> (h1, h0)``, such as
    :class:`adaptexp.model.GaussianLocalPrior`.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    _check_shared_reference(models, hard=False)
    theta_fn = _prior_theta_fn(prior, models, n)
    return McEstimate.from_samples(_risk_samples(estimator, models, theta_fn, kind, n, reps, rng, threads))


@dataclass(frozen=True)
class RiskCurve:
    h1: np.ndarray
    estimates: tuple
    h0: float
    n: int

    def __post_init__(self):
        if np.any(np.diff(self.h1) <= 0):
            raise ValueError("risk-curve grid must be strictly increasing")
        if len(self.estimates) != len(self.h1):
            raise ValueError("one estimate per grid point is required")

    @property
    def means(self) -> np.ndarray:
        return np.array([e.mean for e in self.estimates])

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([e.std_error for e in self.estimates])


def risk_curve(
    estimator, models, h1_grid: Sequence[float], h0: float, kind, n: int, reps: int, rng, threads: int = 1
) -> RiskCurve:
    """Frequentist risk at each ``(h1, h0)``; grid point ``i`` uses ``stream.child(i)``."""
    stream = as_stream(rng)
    grid = np.asarray(h1_grid, dtype=float)
    ests = tuple(
        frequentist_risk(estimator, models, LocalParam(float(h1), h0), kind, n, reps, stream.child(i), threads=threads)
        for i, h1 in enumerate(grid)
    )
    return RiskCurve(grid, ests, float(h0), n)


# Regret. Rewards are centred at the shared reference parameter, so that
# sqrt(n) * mu_{n,a}(h) = h_a for both families.


def in_sample_regret(models, h: LocalParam, kind, n: int, reps: int, rng, threads: int = 1) -> McEstimate:
    """``max_a h_a - sum_a h_a E[q_a(1)]``, estimated per replication."""
    _check_shared_reference(models, hard=True)
    m0, m1 = arm_pair(models)
    theta = (local_theta(m1, h.h1, n), local_theta(m0, h.h0, n))
    best = max(h.h1, h.h0)

    def fn(batch, s):
        q1, q0 = batch.q(1.0)
        return best - (h.h1 * q1 + h.h0 * q0)

    parts = map_batches(fn, models, lambda size, s: theta, kind, n, reps, rng, threads)
    return McEstimate.from_samples(np.concatenate(parts))


@dataclass(frozen=True)
class OutOfSampleRegret:
    estimate: McEstimate
    fallbacks: int  # replications where an arm had no pulls and arm 1 was chosen by default


def empirical_best_arm(term: dict):
    """Arm with the larger flat-prior posterior mean; ties go to arm 1.

    Returns ``(choice, fallback)``; if either arm was never pulled the choice
    is arm 1 and ``fallback`` is set.
    """
    n1, n0 = term["n1"], term["n0"]
    fallback = (n1 == 0) | (n0 == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        m1 = term["s1"] / n1
        m0 = term["s0"] / n0
    choice = np.where(fallback, 1, np.where(m1 >= m0, 1, 0))
    return choice, fallback


def out_of_sample_regret(
    models, h: LocalParam, kind, n: int, reps: int, rng, decision="empirical-best-arm", threads: int = 1
) -> OutOfSampleRegret:
    """``max_a h_a - E[h_delta]`` for a terminal deployment decision ``delta``.

    ``decision`` is ``"empirical-best-arm"`` or a callable mapping terminal
    statistics to arm choices (an array of 0/1, or a ``(choice, fallback)`` pair).
    """
    _check_shared_reference(models, hard=True)
    if decision == "empirical-best-arm":
        decide = empirical_best_arm
    elif callable(decision):
        decide = decision
    else:
        raise ValueError(f"unknown decision rule {decision!r}")
    m0, m1 = arm_pair(models)
    theta = (local_theta(m1, h.h1, n), local_theta(m0, h.h0, n))
    best = max(h.h1, h.h0)

    def fn(batch, s):
        out = decide(batch.terminal(models))
        choice, fb = out if isinstance(out, tuple) else (out, np.zeros(batch.reps, dtype=bool))
        choice = np.broadcast_to(np.asarray(choice), (batch.reps,))
        return best - np.where(choice == 1, h.h1, h.h0), np.broadcast_to(fb, (batch.reps,))

    parts = map_batches(fn, models, lambda size, s: theta, kind, n, reps, rng, threads)
    vals = np.concatenate([p[0] for p in parts])
    fbs = int(sum(int(np.sum(p[1])) for p in parts))
    return OutOfSampleRegret(McEstimate.from_samples(vals), fbs)
