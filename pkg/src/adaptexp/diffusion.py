"""The Gaussian limit experiment.

Signals ``z_a(q) = I_a^{1/2} h_a q + W_a(q)`` live on an attention grid of
step ``delta``; allocations ``q_a(t)`` are advanced by Euler steps on a time
grid of the same step. A rule only receives the current state and the past of
``(q, x)``, which is everything revealed by the sampled prefixes.

Off-grid attention values are read by sampling the Brownian bridge between
the last revealed point and the next grid node. This is exact in law (the
bridge does not depend on the drift) and keeps the quadratic variation of
``x_a`` equal to ``q_a`` for fractional allocations, which linear
interpolation would not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .model import LocalParam
from .montecarlo import ROLE_BRIDGE, ROLE_POLICY, ROLE_STACK, Stream, as_stream

__all__ = [
    "LimitGrid",
    "Signals",
    "LimitState",
    "LimitPath",
    "ConstantRule",
    "LimitThompson",
    "LimitUcb",
    "simulate_signals",
    "run_limit_experiment",
    "girsanov_loglr",
    "quadratic_variation",
    "increment_regression",
]

_ON_GRID = 1e-9


@dataclass(frozen=True)
class LimitGrid:
    step: float
    num_steps: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if abs(self.step * self.num_steps - 1.0) > 1e-12:
            raise ValueError("step * num_steps must equal 1")

    @classmethod
    def from_steps(cls, num_steps: int) -> "LimitGrid":
        return cls(1.0 / num_steps, num_steps)

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.num_steps + 1) * self.step


@dataclass
class Signals:
    """Signal paths on the attention grid: ``z[a, rep, k] = z_a(k * step)``."""

    z: np.ndarray
    grid: LimitGrid
    stream: Stream
    infos: tuple[float, float] = (1.0, 1.0)  # (I_1, I_0)

    @property
    def reps(self) -> int:
        return self.z.shape[1]


def simulate_signals(h: LocalParam, infos, grid: LimitGrid, rng, reps: int = 1) -> Signals:
    """Independent drifted Wiener paths; ``infos`` is ``(I_1, I_0)``."""
    stream = as_stream(rng)
    info1, info0 = infos
    z = np.zeros((2, reps, grid.num_steps + 1))
    sd = np.sqrt(grid.step)
    for a, ha, info in ((0, h.h0, info0), (1, h.h1, info1)):
        gen = stream.child(ROLE_STACK, a).generator()
        inc = np.sqrt(info) * ha * grid.step + sd * gen.standard_normal((reps, grid.num_steps))
        np.cumsum(inc, axis=1, out=z[a, :, 1:])
    return Signals(z, grid, stream, (float(info1), float(info0)))


def girsanov_loglr(z_gamma, h: float, info: float, gamma: float):
    """``h I^{1/2} z(gamma) - (gamma / 2) h^2 I``; ``z_gamma`` is the signal value at ``gamma``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return h * np.sqrt(info) * np.asarray(z_gamma) - 0.5 * gamma * h * h * info


def _arm_info(infos, a: int) -> float:
    # infos are ordered (I_1, I_0)
    return infos[0] if a == 1 else infos[1]


@dataclass
class LimitState:
    """What a rule may look at before choosing ``pi_1(t)``.

    ``q`` and ``x`` have shape ``(2, reps)``; ``q_hist``/``x_hist`` hold the
    values at the time-grid points ``0, step, ..., t``.
    """

    t: float
    q: np.ndarray
    x: np.ndarray
    infos: tuple[float, float]
    q_hist: np.ndarray
    x_hist: np.ndarray


@dataclass(frozen=True)
class ConstantRule:
    pi1: float

    def __call__(self, state: LimitState, gen) -> np.ndarray:
        return np.full(state.q.shape[1], float(self.pi1))


@dataclass(frozen=True)
class LimitThompson:
    """Gaussian-filter Thompson sampling.

    Draws ``h_a`` from ``N((I^{1/2} x_a + mu / nu2) / (I q_a + 1 / nu2), 1 / (I q_a + 1 / nu2))``
    and puts all attention on the larger draw. A large ``nu2`` mimics the flat
    Beta(1, 1) prior in local coordinates.
    """

    nu2: float = 1e6
    mu: float = 0.0

    def __call__(self, state: LimitState, gen) -> np.ndarray:
        draws = []
        xi = gen.standard_normal((2, state.q.shape[1]))
        for a in (0, 1):
            info = _arm_info(state.infos, a)
            prec = info * state.q[a] + 1.0 / self.nu2
            mean = (np.sqrt(info) * state.x[a] + self.mu / self.nu2) / prec
            draws.append(mean + xi[a] / np.sqrt(prec))
        return (draws[1] >= draws[0]).astype(float)


@dataclass(frozen=True)
class LimitUcb:
    """Index ``I^{-1/2} x_a / q_a + sqrt(2 ln(1/t) / q_a)``; unexplored arms first, ties by coin."""

    def __call__(self, state: LimitState, gen) -> np.ndarray:
        coin = gen.random(state.q.shape[1]) < 0.5
        idx = []
        for a in (0, 1):
            info = _arm_info(state.infos, a)
            q = state.q[a]
            with np.errstate(divide="ignore", invalid="ignore"):
                bonus = np.sqrt(2.0 * np.log(1.0 / state.t) / q) if state.t > 0 else np.inf
                val = np.where(q > 0, state.x[a] / (np.sqrt(info) * q) + bonus, np.inf)
            idx.append(val)
        return np.where(idx[1] == idx[0], coin, idx[1] > idx[0]).astype(float)


@dataclass
class LimitPath:
    """``q[a, rep, k]`` and ``x[a, rep, k]`` at time ``t_k = k * step``."""

    grid: LimitGrid
    q: np.ndarray
    x: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.grid.points

    def rows(self, rep: int = 0):
        for k, t in enumerate(self.t):
            yield (t, self.q[1, rep, k], self.q[0, rep, k], self.x[1, rep, k], self.x[0, rep, k])


class _Reader:
    """Reveal ``z_a`` at increasing attention values, one arm, all replications."""

    def __init__(self, z: np.ndarray, step: float, gen: np.random.Generator):
        self.z = z
        self.step = step
        self.gen = gen
        reps = z.shape[0]
        self.rows = np.arange(reps)
        self.last_s = np.zeros(reps)
        self.last_z = np.zeros(reps)
        self.max_k = z.shape[1] - 1

    def read(self, q: np.ndarray) -> np.ndarray:
        noise = self.gen.standard_normal(q.shape)
        r = q / self.step
        k_near = np.clip(np.rint(r).astype(np.int64), 0, self.max_k)
        on_grid = np.abs(r - k_near) < _ON_GRID
        k = np.clip(np.floor(r).astype(np.int64), 0, self.max_k - 1)
        left = k * self.step
        right = left + self.step
        fresh = self.last_s < left - _ON_GRID * self.step
        base_s = np.where(fresh, left, self.last_s)
        base_z = np.where(fresh, self.z[self.rows, k], self.last_z)
        z_right = self.z[self.rows, k + 1]
        span = right - base_s
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span > 0, (q - base_s) / span, 0.0)
            var = np.where(span > 0, (q - base_s) * (right - q) / span, 0.0)
        bridge = base_z + frac * (z_right - base_z) + np.sqrt(np.maximum(var, 0.0)) * noise
        value = np.where(on_grid, self.z[self.rows, k_near], bridge)
        same = np.abs(q - self.last_s) < _ON_GRID * self.step
        value = np.where(same, self.last_z, value)
        self.last_s = q.copy()
        self.last_z = value
        return value


def run_limit_experiment(rule, signals: Signals, grid: LimitGrid | None = None) -> LimitPath:
    """Drive ``rule`` through the limit experiment; its randomness comes from ``signals.stream``."""
    grid = signals.grid if grid is None else grid
    if grid != signals.grid:
        raise ValueError("grid does not match the signal grid")
    reps = signals.reps
    N = grid.num_steps
    gen = signals.stream.child(ROLE_POLICY).generator()
    bridge = signals.stream.child(ROLE_BRIDGE)
    readers = [_Reader(signals.z[a], grid.step, bridge.child(a).generator()) for a in (0, 1)]
    q = np.zeros((2, reps, N + 1))
    x = np.zeros((2, reps, N + 1))
    for k in range(N):
        state = LimitState(k * grid.step, q[:, :, k], x[:, :, k], signals.infos, q[:, :, : k + 1], x[:, :, : k + 1])
        pi1 = np.asarray(rule(state, gen), dtype=float)
        if pi1.shape != (reps,):
            pi1 = np.broadcast_to(pi1, (reps,))
        if np.any(~np.isfinite(pi1)) or np.any(pi1 < 0.0) or np.any(pi1 > 1.0):
            raise ContractViolation(f"rule returned an allocation outside [0, 1] at t={k * grid.step}")
        q[1, :, k + 1] = q[1, :, k] + pi1 * grid.step
        q[0, :, k + 1] = q[0, :, k] + (1.0 - pi1) * grid.step
        for a in (0, 1):
            x[a, :, k + 1] = readers[a].read(q[a, :, k + 1])
    return LimitPath(grid, q, x)


def quadratic_variation(x: np.ndarray) -> np.ndarray:
    """Running sum of squared increments along the last axis, starting at 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    np.cumsum(np.diff(x, axis=-1) ** 2, axis=-1, out=out[..., 1:])
    return out


def increment_regression(path: LimitPath, arm: int, k1: int, k2: int):
    """OLS of ``x_a(t_k2) - x_a(t_k1)`` on ``(1, x_1, x_0, q_1)`` at ``t_k1``.

    Returns ``(coef, std_err)``; both are length-4 arrays.
    """
    y = path.x[arm, :, k2] - path.x[arm, :, k1]
    X = np.column_stack([np.ones_like(y), path.x[1, :, k1], path.x[0, :, k1], path.q[1, :, k1]])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - X.shape[1], 1)
    sigma2 = resid @ resid / dof
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    return coef, np.sqrt(np.diag(cov))
