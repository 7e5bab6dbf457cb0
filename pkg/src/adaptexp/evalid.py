"""E-processes and anytime-valid inference.

An e-process here is a function of the terminal-so-far statistics
``(z_a(q_a), q_a)`` of both arms of the form

    eps(q1, q0) = int exp sum_a { h_a I_a^{1/2} z_a(q_a) - (q_a / 2) I_a h_a^2 } dw(h),

evaluated on log scale. Under the null ``h = 0`` every term of the mixture is
a mean-one martingale in the limit experiment. :func:`blahut_arimoto`
computes least-favourable mixing weights for a fixed allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, RegimeError
from .experiment import Trajectory, _floor_nt, map_batches, score_path
from .model import LocalParam, arm_pair, fisher_info, kl_divergence, local_theta
from .montecarlo import ROLE_PRIOR, McEstimate, as_stream

__all__ = [
    "GaussianMixtureArm1",
    "GaussianMixtureBoth",
    "TwoPoint",
    "WeightGrid",
    "gaussian_weight_grid",
    "ChannelSpec",
    "BAResult",
    "SizeResult",
    "log_evalue",
    "evalue",
    "evalue_from_trajectory",
    "p_process",
    "anytime_size",
    "null_evalue_means",
    "gro_score",
    "mgro_score",
    "kl_null",
    "regrow_score",
    "regrow_profile",
    "blahut_arimoto",
    "support_points",
    "interior_mass",
    "two_point_eprocess_from_ba",
]


@dataclass(frozen=True)
class GaussianMixtureArm1:
    """``N(0, nu2)`` mixture over ``h1`` only; ignores arm-0 data."""

    nu2: float

    def __post_init__(self):
        if not self.nu2 > 0:
            raise ValueError("nu2 must be positive")


@dataclass(frozen=True)
class GaussianMixtureBoth:
    nu2_1: float
    nu2_0: float

    def __post_init__(self):
        if not (self.nu2_1 > 0 and self.nu2_0 > 0):
            raise ValueError("mixture variances must be positive")


@dataclass(frozen=True)
class TwoPoint:
    """Product over arms of the symmetric two-point mixture on ``{-K, K}``."""

    K: float

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")


@dataclass(frozen=True)
class WeightGrid:
    """Finite mixture: ``points[i] = (h1, h0)`` with weight ``weights[i]``."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size or w.size == 0:
            raise ValueError("points and weights must be non-empty and of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be non-negative and sum to 1 within 1e-10")
        object.__setattr__(self, "points", tuple(map(tuple, pts)))
        object.__setattr__(self, "weights", tuple(w))


def gaussian_weight_grid(nu2_1: float, nu2_0: float | None = None, nodes: int = 64) -> WeightGrid:
    """Gauss-Hermite discretisation of ``N(0, nu2_1)`` (x ``N(0, nu2_0)`` if given)."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    h1 = np.sqrt(nu2_1) * x
    if nu2_0 is None:
        pts = np.column_stack([h1, np.zeros_like(h1)])
        return WeightGrid(pts, w / w.sum())
    h0 = np.sqrt(nu2_0) * x
    H1, H0 = np.meshgrid(h1, h0, indexing="ij")
    W = np.outer(w, w)
    return WeightGrid(np.column_stack([H1.ravel(), H0.ravel()]), W.ravel() / W.sum())


def _log_gauss_arm(s, q, info, nu2):
    # s = I^{1/2} z
    d = 1.0 + q * info * nu2
    return -0.5 * np.log(d) + nu2 * s * s / (2.0 * d)


def _log_cosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def log_evalue(spec, z1, z0, q1, q0, infos=(1.0, 1.0)):
    """``ln eps``; arrays broadcast. ``infos`` is ``(I_1, I_0)``."""
    info1, info0 = infos
    z1, z0, q1, q0 = (np.asarray(v, dtype=float) for v in (z1, z0, q1, q0))
    if np.any((q1 < 0) | (q1 > 1)) or np.any((q0 < 0) | (q0 > 1)):
        raise ValueError("attention values must lie in [0, 1]")
    s1 = np.sqrt(info1) * z1
    s0 = np.sqrt(info0) * z0
    if isinstance(spec, GaussianMixtureArm1):
        out = _log_gauss_arm(s1, q1, info1, spec.nu2) + 0.0 * s0
    elif isinstance(spec, GaussianMixtureBoth):
        out = _log_gauss_arm(s1, q1, info1, spec.nu2_1) + _log_gauss_arm(s0, q0, info0, spec.nu2_0)
    elif isinstance(spec, TwoPoint):
        K = spec.K
        out = (
            _log_cosh(K * s1) - 0.5 * q1 * info1 * K * K
            + _log_cosh(K * s0) - 0.5 * q0 * info0 * K * K
        )
    elif isinstance(spec, WeightGrid):
        pts = np.asarray(spec.points)
        w = np.asarray(spec.weights)
        keep = w > 0
        out = np.full(np.broadcast(s1, s0, q1, q0).shape, -np.inf)
        # one pass per mixture point keeps memory at the size of the inputs
        for (h1, h0), lw in zip(pts[keep], np.log(w[keep])):
            term = lw + h1 * s1 - 0.5 * q1 * info1 * h1 * h1 + h0 * s0 - 0.5 * q0 * info0 * h0 * h0
            out = np.logaddexp(out, term)
    else:
        raise TypeError(f"unknown e-process spec {spec!r}")
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def evalue(spec, z1, z0, q1, q0, infos=(1.0, 1.0)):
    out = np.exp(log_evalue(spec, z1, z0, q1, q0, infos))
    return float(out) if np.ndim(out) == 0 else out


def _infos(models):
    m0, m1 = arm_pair(models)
    return fisher_info(m1), fisher_info(m0)


def evalue_from_trajectory(spec, traj: Trajectory, models, t: float) -> float:
    """``eps`` at the trajectory's state after ``floor(n t)`` rounds."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if traj.n == 0:
        return evalue(spec, 0.0, 0.0, 0.0, 0.0, _infos(models))
    sp = score_path(traj, models)
    c0, c1 = sp.alloc.counts(t)
    return evalue(spec, sp.z[1][c1], sp.z[0][c0], c1 / traj.n, c0 / traj.n, _infos(models))


def p_process(e):
    """Anytime-valid p-value ``min(1, 1 / eps)``; ``eps = 0`` gives 1."""
    e = np.asarray(e, dtype=float)
    if np.any(e < 0):
        raise ValueError("e-values are non-negative")
    with np.errstate(divide="ignore"):
        out = np.minimum(1.0, np.where(e > 0, 1.0 / np.where(e > 0, e, 1.0), 1.0))
    return float(out) if out.ndim == 0 else out


def _log_eps_paths(spec, batch, models, infos):
    p = batch.paths(models)
    return log_evalue(spec, p["x1"], p["x0"], p["q1"], p["q0"], infos)


def _t_index(n, t_grid):
    return _floor_nt(n, np.asarray(t_grid, dtype=float))


# Null studies


@dataclass(frozen=True)
class SizeResult:
    """Exceedance of ``max_j eps_j >= 1 / alpha`` per null configuration.

    ``configs[i]`` is the data-generating ``(theta_1, theta_0)``;
    ``means[i][k]`` is the MC mean of ``eps`` at ``t_grid[k]``.
    """

    threshold: float
    configs: tuple
    exceed: tuple
    means: tuple
    t_grid: np.ndarray

    @property
    def sup(self) -> McEstimate:
        return max(self.exceed, key=lambda e: e.mean)


def _null_configs(models, n, h0_grid, theta0_arm0):
    m0, m1 = arm_pair(models)
    out = [(m1.theta0, local_theta(m0, h0, n)) for h0 in (h0_grid or ())]
    out += [(m1.theta0, float(th)) for th in (theta0_arm0 or ())]
    if not out:
        raise ValueError("at least one null configuration is required")
    return out


def anytime_size(
    spec,
    models,
    kind,
    n: int,
    h0_grid: Sequence[float] | None = None,
    alpha: float = 0.05,
    reps: int = 2000,
    rng=0,
    theta0_arm0: Sequence[float] | None = (0.0, 0.02, 0.05, 0.1),
    t_grid: Sequence[float] | None = None,
    threads: int = 1,
) -> SizeResult:
    """Uniform-over-time size of the test ``max_j eps_j >= 1 / alpha``.

    Arm 1 is held at its reference parameter. The arm-0 nuisance is swept over
    local values ``h0_grid`` and direct parameter overrides ``theta0_arm0``
    (which can reach the boundary, e.g. ``theta_0 = 0``). Configuration ``i``
    draws from ``stream.child(i)``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    threshold = 1.0 / alpha
    log_thr = math.log(threshold)
    stream = as_stream(rng)
    infos = _infos(models)
    t_grid = np.linspace(0.05, 1.0, 20) if t_grid is None else np.asarray(t_grid, dtype=float)
    idx = _t_index(n, t_grid)
    configs = _null_configs(models, n, h0_grid, theta0_arm0)
    exceed, means = [], []
    for i, theta in enumerate(configs):

        def fn(batch, s):
            le = _log_eps_paths(spec, batch, models, infos)
            return le.max(axis=1) >= log_thr, np.exp(le[:, idx])

        parts = map_batches(fn, models, lambda size, s, th=theta: th, kind, n, reps, stream.child(i), threads)
        hit = np.concatenate([p[0] for p in parts]).astype(float)
        eps = np.concatenate([p[1] for p in parts])
        exceed.append(McEstimate.from_samples(hit))
        means.append(tuple(McEstimate.from_samples(eps[:, k]) for k in range(len(t_grid))))
    return SizeResult(threshold, tuple(configs), tuple(exceed), tuple(means), t_grid)


def null_evalue_means(spec, models, kind, n: int, theta, t_grid, reps: int, rng, threads: int = 1):
    """MC mean of ``eps`` at each ``t`` when data are drawn at ``theta = (theta_1, theta_0)``."""
    infos = _infos(models)
    idx = _t_index(n, t_grid)

    def fn(batch, s):
        return np.exp(_log_eps_paths(spec, batch, models, infos)[:, idx])

    eps = np.concatenate(map_batches(fn, models, lambda size, s: theta, kind, n, reps, rng, threads))
    return [McEstimate.from_samples(eps[:, k]) for k in range(eps.shape[1])]


# Growth criteria


def _scalar_or_list(t, values):
    return values[0] if np.ndim(t) == 0 else values


def gro_score(spec, models, h: LocalParam, kind, n: int, t, reps: int, rng, threads: int = 1):
    """MC ``E[ln eps(q_1(t), q_0(t))]`` under ``h``; ``t`` may be a grid."""
    m0, m1 = arm_pair(models)
    theta = (local_theta(m1, h.h1, n), local_theta(m0, h.h0, n))
    infos = _infos(models)
    idx = np.atleast_1d(_t_index(n, t))

    def fn(batch, s):
        return _log_eps_paths(spec, batch, models, infos)[:, idx]

    le = np.concatenate(map_batches(fn, models, lambda size, s: theta, kind, n, reps, rng, threads))
    return _scalar_or_list(t, [McEstimate.from_samples(le[:, k]) for k in range(le.shape[1])])


def mgro_score(spec, models, weight, kind, n: int, t, reps: int, rng, threads: int = 1):
    """GRO averaged over ``h`` drawn from ``weight`` (one draw per replication).

    ``weight`` has ``sample(gen, size) -> (h1, h0)`` like the priors in
    :mod:`adaptexp.model`.
    """
    m0, m1 = arm_pair(models)
    infos = _infos(models)
    idx = np.atleast_1d(_t_index(n, t))

    def theta_fn(size, s):
        h1, h0 = weight.sample(s.child(ROLE_PRIOR).generator(), size)
        return local_theta(m1, np.asarray(h1), n), local_theta(m0, np.asarray(h0), n)

    def fn(batch, s):
        return _log_eps_paths(spec, batch, models, infos)[:, idx]

    le = np.concatenate(map_batches(fn, models, theta_fn, kind, n, reps, rng, threads))
    return _scalar_or_list(t, [McEstimate.from_samples(le[:, k]) for k in range(le.shape[1])])


def _kl_terms(models, h: LocalParam, n: int | None, form: str):
    """Per-unit-attention KL rates ``(k1, k0)``: KL term = ``k1 q1 + k0 q0``."""
    m0, m1 = arm_pair(models)
    if form == "limit":
        return 0.5 * fisher_info(m1) * h.h1**2, 0.5 * fisher_info(m0) * h.h0**2
    if form == "finite":
        if n is None:
            raise ValueError("the finite-n form needs n")
        k1 = n * kl_divergence(m1, local_theta(m1, h.h1, n))
        k0 = n * kl_divergence(m0, local_theta(m0, h.h0, n))
        return k1, k0
    raise ValueError(f"unknown KL form {form!r}")


def kl_null(models, h: LocalParam, q_expect, n: int | None = None, form: str = "finite") -> float:
    """``E[ln dP_h / dP_0]`` restricted to the data seen by attention ``(E q_1, E q_0)``.

    ``form="finite"`` uses the Wald identity ``sum_a n E[q_a] KL_a``;
    ``form="limit"`` uses ``sum_a E[q_a] I_a h_a^2 / 2``.
    """
    k1, k0 = _kl_terms(models, h, n, form)
    eq1, eq0 = q_expect
    return float(k1 * eq1 + k0 * eq0)


def regrow_profile(spec, models, H1, kind, n: int, t: float, reps: int, rng, kl: str = "finite", threads: int = 1):
    """Per-``h`` MC estimates of ``E[ln eps - KL]``; grid point ``i`` uses ``stream.child(i)``.

    The KL term is evaluated per replication at its own ``q``, which has the
    same expectation as :func:`kl_null` and lower variance.
    """
    grid = list(H1)
    if not grid:
        raise ValueError("the alternative grid must be non-empty")
    stream = as_stream(rng)
    m0, m1 = arm_pair(models)
    infos = _infos(models)
    k = int(_t_index(n, t))
    out = []
    for i, h in enumerate(grid):
        h = h if isinstance(h, LocalParam) else LocalParam(*h)
        theta = (local_theta(m1, h.h1, n), local_theta(m0, h.h0, n))
        k1, k0 = _kl_terms(models, h, n, kl)

        def fn(batch, s):
            p = batch.paths(models)
            le = log_evalue(spec, p["x1"][:, k], p["x0"][:, k], p["q1"][:, k], p["q0"][:, k], infos)
            return le - (k1 * p["q1"][:, k] + k0 * p["q0"][:, k])

        vals = np.concatenate(map_batches(fn, models, lambda size, s, th=theta: th, kind, n, reps, stream.child(i), threads))
        out.append(McEstimate.from_samples(vals))
    return out


def regrow_score(spec, models, H1, kind, n: int, t: float, reps: int, rng, kl: str = "finite", threads: int = 1) -> McEstimate:
    """Worst case over the finite grid ``H1``; the SE is the one at the argmin."""
    prof = regrow_profile(spec, models, H1, kind, n, t, reps, rng, kl, threads)
    return min(prof, key=lambda e: e.mean)


# Least-favourable weights


@dataclass(frozen=True)
class ChannelSpec:
    """Channel ``h -> N(I^{1/2} q h, q)`` with inputs on ``linspace(-K, K, m)``."""

    q: float
    info: float
    K: float
    m: int = 201

    def __post_init__(self):
        if not self.q >= 0:
            raise ValueError("q must be non-negative")
        if not self.info > 0:
            raise ValueError("information must be positive")
        if not self.K >= 0:
            raise ValueError("K must be non-negative")
        if self.K > 0 and self.m < 2:
            raise ValueError("the input grid needs at least two points")

    @property
    def grid(self) -> np.ndarray:
        if self.K == 0:
            return np.zeros(1)
        g = np.linspace(-self.K, self.K, self.m)
        return 0.5 * (g - g[::-1])  # exactly symmetric

    @property
    def snr(self) -> float:
        """Amplitude over noise s.d., ``K I^{1/2} q / sqrt(q)``."""
        return self.K * math.sqrt(self.info * self.q)


@dataclass
class BAResult:
    capacity: float
    weights: np.ndarray
    grid: np.ndarray
    lower_bounds: np.ndarray  # mutual information of each iterate
    gap: float
    iterations: int


def _channel_matrix(ch: ChannelSpec, num_z: int):
    h = ch.grid
    mu = math.sqrt(ch.info) * ch.q * h
    sd = math.sqrt(ch.q)
    half = float(np.max(np.abs(mu))) + 6.0 * sd
    z = np.linspace(-half, half, num_z)
    logk = -0.5 * ((z[None, :] - mu[:, None]) / sd) ** 2
    logP = logk - logsumexp(logk, axis=1, keepdims=True)
    return np.exp(logP), logP


def blahut_arimoto(channel: ChannelSpec, tol: float = 1e-9, max_iter: int = 100_000, num_z: int = 2001) -> BAResult:
    """Capacity (nats) and capacity-achieving input weights of the discretised channel.

    The output is discretised on ``num_z`` equispaced points spanning six
    standard deviations beyond the extreme means. Iteration stops when
    ``max_h D(h) - sum_h r(h) D(h) < tol``, where ``D(h)`` is the divergence of
    row ``h`` from the current output mixture; the second term is the mutual
    information of the current weights and is nondecreasing.
    """
    grid = channel.grid
    if channel.K == 0 or channel.q == 0:
        w = np.full(grid.size, 1.0 / grid.size)
        return BAResult(0.0, w, grid, np.zeros(1), 0.0, 0)
    P, logP = _channel_matrix(channel, num_z)
    negent = np.sum(P * logP, axis=1)  # sum_z P log P per row
    r = np.full(grid.size, 1.0 / grid.size)
    bounds = []
    gap = math.inf
    for it in range(1, max_iter + 1):
        out = r @ P
        D = negent - P @ np.log(out)
        mi = float(r @ D)
        bounds.append(mi)
        gap = float(D.max() - mi)
        if gap < tol:
            return BAResult(mi, r, grid, np.asarray(bounds), gap, it)
        lr = np.log(r) + D
        r = np.exp(lr - logsumexp(lr))
    raise ConvergenceError(f"no convergence after {max_iter} iterations", gap)


def support_points(weights, grid, mass_tol: float = 1e-3):
    """Group contiguous grid cells carrying weight above ``mass_tol / len`` into mass points.

    Returns ``[(location, mass), ...]`` keeping clusters with mass >= ``mass_tol``.
    """
    w = np.asarray(weights, dtype=float)
    g = np.asarray(grid, dtype=float)
    on = w > mass_tol / w.size
    out = []
    i = 0
    while i < w.size:
        if not on[i]:
            i += 1
            continue
        j = i
        while j + 1 < w.size and on[j + 1]:
            j += 1
        m = w[i : j + 1].sum()
        if m >= mass_tol:
            out.append((float(np.dot(w[i : j + 1], g[i : j + 1]) / m), float(m)))
        i = j + 1
    return out


def interior_mass(result: BAResult) -> float:
    return float(result.weights[1:-1].sum()) if result.weights.size > 2 else 0.0


def two_point_eprocess_from_ba(q_pair, infos, K: float, m: int = 201, tol: float = 1e-4, max_tol_mass: float = 1e-3) -> TwoPoint:
    """Two-point e-process on ``{-K, K}`` if it is least favourable at ``(q1, q0)``.

    Each arm's channel is solved by :func:`blahut_arimoto`. Before full
    convergence some mass leaks into the cells next to the endpoints, so the
    weights are first grouped by :func:`support_points`; the two-point mixture
    is accepted when clusters located more than two grid steps inside
    ``(-K, K)`` carry less than ``max_tol_mass`` for both arms.
    """
    if not K > 0:
        raise ValueError("K must be positive; K = 0 leaves no alternative")
    for a, (q, info) in enumerate(zip(q_pair, infos)):
        if q == 0:
            continue
        ch = ChannelSpec(q, info, K, m)
        res = blahut_arimoto(ch, tol=tol)
        step = 2.0 * K / (m - 1)
        mass = sum(w for loc, w in support_points(res.weights, res.grid) if abs(loc) < K - 2.0 * step)
        if mass >= max_tol_mass:
            raise RegimeError(
                f"arm {1 - a}: least-favourable weights put mass {mass:.3g} inside (-K, K) "
                f"(signal-to-noise {ch.snr:.3g}); "
                "use a WeightGrid built from blahut_arimoto output instead"
            )
    return TwoPoint(K)
