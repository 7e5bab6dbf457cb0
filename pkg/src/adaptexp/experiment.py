"""Finite-sample adaptive experiments under the stack-of-rewards model.

Each replication owns one outcome stack per arm, generated up front from its
own substream. A pull of arm ``a`` reveals the top unread entry of stack
``a``; the policy only ever sees pull counts and outcome sums, so decisions
at round ``j`` are functions of the first ``j - 1`` outcomes and the policy's
exogenous randomness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ArmModel, Family, LocalParam, arm_pair, draw_outcomes, fisher_info, local_theta, log_lr
from .montecarlo import ROLE_POLICY, ROLE_STACK, Stream, as_stream, block_sizes, run_blocks
from .policy import check_policy, choose

__all__ = [
    "Batch",
    "Trajectory",
    "AllocationPath",
    "ScorePath",
    "simulate",
    "run_experiment",
    "allocation_path",
    "score_path",
    "loglik_ratio",
    "slan_expansion",
    "slan_sup_gap",
    "trajectory_rows",
    "TRAJECTORY_COLUMNS",
]

TRAJECTORY_COLUMNS = ("j", "t", "A_j", "Y_j", "q1", "z1", "z0")


def _floor_nt(n: int, t) -> np.ndarray:
    # Guards against n * (j / n) evaluating to j - 1e-15.
    return np.floor(np.asarray(t, dtype=float) * n + 1e-9).astype(np.int64)


@dataclass
class Batch:
    """``reps`` replications of one experiment.

    ``assignments`` and ``outcomes`` have shape ``(reps, n)``; ``stacks`` has
    shape ``(2, reps, n)`` and is indexed ``[arm, rep, position]``.
    """

    n: int
    assignments: np.ndarray
    outcomes: np.ndarray
    stacks: np.ndarray

    @property
    def reps(self) -> int:
        return self.assignments.shape[0]

    def arm1_counts(self) -> np.ndarray:
        """Cumulative arm-1 pulls after each round, shape ``(reps, n + 1)``."""
        c = np.zeros((self.reps, self.n + 1), dtype=np.int64)
        np.cumsum(self.assignments, axis=1, out=c[:, 1:])
        return c

    def q(self, t):
        """``(q1(t), q0(t))`` for each replication; ``t`` may be a grid."""
        k = _floor_nt(self.n, t)
        c1 = self.arm1_counts()[:, k]
        return c1 / self.n, (k - c1) / self.n

    def score_sums(self, models) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative per-arm score sums after each round, shape ``(reps, n + 1)``."""
        m0, m1 = arm_pair(models)
        a1 = self.assignments.astype(bool)
        out = []
        for arm, m, mask in ((0, m0, ~a1), (1, m1, a1)):
            psi = np.where(mask, _score_fast(m, self.outcomes), 0.0)
            s = np.zeros((self.reps, self.n + 1))
            np.cumsum(psi, axis=1, out=s[:, 1:])
            out.append(s)
        return out[0], out[1]

    def paths(self, models) -> dict:
        """``q1, q0, x1, x0`` after every round, each of shape ``(reps, n + 1)``.

        ``x_a(j/n) = z_a(q_a(j/n))``, the standardised score sum of the arm-``a``
        outcomes observed so far.
        """
        m0, m1 = arm_pair(models)
        c1 = self.arm1_counts()
        c0 = np.arange(self.n + 1)[None, :] - c1
        s0, s1 = self.score_sums(models)
        rn = np.sqrt(self.n)
        return {
            "q1": c1 / self.n,
            "q0": c0 / self.n,
            "x1": s1 / (np.sqrt(fisher_info(m1)) * rn),
            "x0": s0 / (np.sqrt(fisher_info(m0)) * rn),
        }

    def terminal(self, models) -> dict:
        """Terminal counts, sums and ``(x_a(1), q_a(1))`` per arm."""
        m0, m1 = arm_pair(models)
        a1 = self.assignments.astype(bool)
        n1 = a1.sum(axis=1)
        s1 = np.where(a1, self.outcomes, 0.0).sum(axis=1)
        s0 = self.outcomes.sum(axis=1) - s1
        n0 = self.n - n1
        rn = np.sqrt(self.n)

        def x(m, s, cnt):
            psi_sum = s - cnt * m.theta0
            if m.family is Family.BERNOULLI:
                psi_sum = psi_sum * fisher_info(m)
            return psi_sum / (np.sqrt(fisher_info(m)) * rn)

        return {
            "n1": n1,
            "n0": n0,
            "s1": s1,
            "s0": s0,
            "q1": n1 / self.n,
            "q0": n0 / self.n,
            "x1": x(m1, s1, n1),
            "x0": x(m0, s0, n0),
        }


def _score_fast(model: ArmModel, y: np.ndarray) -> np.ndarray:
    # score() validates Bernoulli support element-wise; outcomes produced here
    # are already in {0, 1}.
    if model.family is Family.BERNOULLI:
        t = model.theta0
        return (y - t) / (t * (1.0 - t))
    return y - model.theta0


def simulate(models, theta, kind, n: int, reps: int, stream: Stream, stacks=None) -> Batch:
    """Run ``reps`` replications with data-generating parameters ``theta``.

    ``theta`` is ``(theta_1, theta_0)``; each entry is a scalar or an array
    of length ``reps``. Stacks are drawn from ``stream.child(ROLE_STACK, a)``
    unless ``stacks`` (shape ``(2, reps, n)``) is supplied. Policy randomness
    comes from ``stream.child(ROLE_POLICY)``.
    """
    m0, m1 = arm_pair(models)
    check_policy(kind, (m1, m0))
    if stacks is None:
        stacks = np.empty((2, reps, n))
        for a, m, th in ((0, m0, theta[1]), (1, m1, theta[0])):
            th = np.broadcast_to(np.asarray(th, dtype=float), (reps,))
            stacks[a] = draw_outcomes(m.family, th, n, stream.child(ROLE_STACK, a).generator())
    else:
        stacks = np.asarray(stacks, dtype=float)
        if stacks.shape != (2, reps, n):
            raise ValueError(f"stacks must have shape {(2, reps, n)}, got {stacks.shape}")
    gen = stream.child(ROLE_POLICY).generator()

    A = np.empty((n, reps), dtype=np.int8)
    Y = np.empty((n, reps))
    counts = np.zeros((2, reps), dtype=np.int64)
    sums = np.zeros((2, reps))
    rows = np.arange(reps)
    for s in range(n):
        arm = choose(kind, counts, sums, s + 1, n, gen)
        y = stacks[arm, rows, counts[arm, rows]]
        counts[arm, rows] += 1
        sums[arm, rows] += y
        A[s] = arm
        Y[s] = y
    return Batch(n, np.ascontiguousarray(A.T), np.ascontiguousarray(Y.T), stacks)


def simulate_local(models, h: LocalParam, kind, n: int, reps: int, stream: Stream) -> Batch:
    m0, m1 = arm_pair(models)
    theta = (local_theta(m1, h.h1, n), local_theta(m0, h.h0, n))
    return simulate((m1, m0), theta, kind, n, reps, stream)


def map_batches(fn, models, theta_fn, kind, n: int, reps: int, rng, threads: int = 1) -> list:
    """Simulate ``reps`` replications block by block and apply ``fn(batch, block_stream)``.

    ``theta_fn(block_reps, block_stream)`` returns the data-generating
    ``(theta_1, theta_0)`` for the block.
    """
    stream = as_stream(rng)

    def one(size, s):
        batch = simulate(models, theta_fn(size, s), kind, n, size, s)
        return fn(batch, s)

    return run_blocks(one, reps, stream, threads)


# Single trajectories


@dataclass
class Trajectory:
    """One run: ``assignments[j - 1]`` is ``A_j``; ``stacks[a]`` is arm ``a``'s stack."""

    n: int
    assignments: np.ndarray
    outcomes: np.ndarray
    stacks: np.ndarray

    @property
    def consumed(self) -> tuple[int, int]:
        """Number of stack entries read from arms 0 and 1."""
        n1 = int(self.assignments.sum())
        return self.n - n1, n1


@dataclass(frozen=True)
class AllocationPath:
    n: int
    arm1_counts: np.ndarray  # length n + 1, cumulative arm-1 pulls

    def counts(self, t):
        k = _floor_nt(self.n, t)
        c1 = self.arm1_counts[k]
        return k - c1, c1

    def q1(self, t):
        if self.n == 0:
            return 0.0
        return self.counts(t)[1] / self.n

    def q0(self, t):
        if self.n == 0:
            return 0.0
        return self.counts(t)[0] / self.n


@dataclass(frozen=True)
class ScorePath:
    """Standardised partial sums over each arm's full stack.

    ``z[a][i]`` is ``z_{n,a}(i/n)``. Only the first ``consumed[a]`` entries
    were observed by the experiment; later entries are diagnostic.
    """

    n: int
    z: tuple[np.ndarray, np.ndarray]
    consumed: tuple[int, int]
    alloc: AllocationPath

    def z_at(self, arm: int, q):
        return self.z[arm][_floor_nt(self.n, q)]

    def x(self, arm: int, t):
        c0, c1 = self.alloc.counts(t)
        return self.z[arm][c1 if arm == 1 else c0]


def run_experiment(models, h: LocalParam, kind, n: int, rng) -> Trajectory:
    m0, m1 = arm_pair(models)
    if n == 0:
        empty = np.zeros((2, 0))
        return Trajectory(0, np.zeros(0, dtype=np.int8), np.zeros(0), empty)
    batch = simulate_local((m1, m0), h, kind, n, 1, as_stream(rng))
    return Trajectory(n, batch.assignments[0], batch.outcomes[0], batch.stacks[:, 0, :])


def replay(models, traj: Trajectory, kind, rng) -> Trajectory:
    """Rerun a policy on ``traj``'s stacks with the policy stream of ``rng``."""
    b = simulate(models, (0.0, 0.0), kind, traj.n, 1, as_stream(rng), stacks=traj.stacks[:, None, :])
    return Trajectory(traj.n, b.assignments[0], b.outcomes[0], b.stacks[:, 0, :])


def allocation_path(traj: Trajectory) -> AllocationPath:
    c = np.zeros(traj.n + 1, dtype=np.int64)
    np.cumsum(traj.assignments, out=c[1:])
    return AllocationPath(traj.n, c)


def score_path(traj: Trajectory, models) -> ScorePath:
    m0, m1 = arm_pair(models)
    zs = []
    for a, m in ((0, m0), (1, m1)):
        z = np.zeros(traj.n + 1)
        if traj.n:
            np.cumsum(_score_fast(m, traj.stacks[a]), out=z[1:])
            z /= np.sqrt(fisher_info(m) * traj.n)
        zs.append(z)
    return ScorePath(traj.n, (zs[0], zs[1]), traj.consumed, allocation_path(traj))


def loglik_ratio(traj: Trajectory, models, h: LocalParam, gamma1: float, gamma0: float, n: int | None = None) -> float:
    """Exact log-likelihood ratio of the first ``floor(n gamma_a)`` entries of each stack."""
    n = traj.n if n is None else n
    m0, m1 = arm_pair(models)
    total = 0.0
    for a, m, g in ((0, m0, gamma0), (1, m1, gamma1)):
        ha = h.arm(a)
        if ha == 0.0:
            continue
        k = int(_floor_nt(n, g))
        theta = local_theta(m, ha, n)
        total += float(np.sum(log_lr(m, theta, traj.stacks[a, :k])))
    return total


def slan_expansion(traj: Trajectory, models, h: LocalParam, gamma1: float, gamma0: float, n: int | None = None) -> float:
    """``sum_a h_a I_a^{1/2} z_a(g_a) - (g_a / 2) h_a^2 I_a`` with ``g_a = floor(n gamma_a) / n``."""
    n = traj.n if n is None else n
    m0, m1 = arm_pair(models)
    sp = score_path(traj, (m1, m0))
    total = 0.0
    for a, m, g in ((0, m0, gamma0), (1, m1, gamma1)):
        ha = h.arm(a)
        k = int(_floor_nt(n, g))
        info = fisher_info(m)
        total += ha * np.sqrt(info) * sp.z[a][k] - 0.5 * (k / n) * ha * ha * info
    return float(total)


def slan_sup_gap(model: ArmModel, h: float, n: int, reps: int, rng, threads: int = 1) -> np.ndarray:
    """Per-replication ``sup_gamma |exact log-LR - SLAN expansion|`` for one arm.

    Stacks are drawn under the reference parameter and ``gamma`` ranges over
    ``{0, 1/n, ..., 1}``.
    """
    info = fisher_info(model)
    theta = local_theta(model, h, n)
    k = np.arange(n + 1)

    def one(size, s):
        y = draw_outcomes(model.family, np.full(size, model.theta0), n, s.child(ROLE_STACK, 1).generator())
        llr = np.zeros((size, n + 1))
        np.cumsum(log_lr(model, theta, y), axis=1, out=llr[:, 1:])
        z = np.zeros((size, n + 1))
        np.cumsum(_score_fast(model, y), axis=1, out=z[:, 1:])
        z /= np.sqrt(info * n)
        expansion = h * np.sqrt(info) * z - 0.5 * (k / n) * h * h * info
        return np.abs(llr - expansion).max(axis=1)

    return np.concatenate(run_blocks(one, reps, as_stream(rng), threads))


def trajectory_rows(traj: Trajectory, models):
    """Rows ``(j, t, A_j, Y_j, q1, z1, z0)`` for ``j = 1..n``.

    ``z1``/``z0`` hold the score process ``z_{n,a}(q_{n,a}(j/n))``.
    """
    if traj.n == 0:
        return
    m0, m1 = arm_pair(models)
    batch = Batch(traj.n, traj.assignments[None, :], traj.outcomes[None, :], traj.stacks[:, None, :])
    p = batch.paths((m1, m0))
    for j in range(1, traj.n + 1):
        yield (
            j,
            j / traj.n,
            int(traj.assignments[j - 1]),
            float(traj.outcomes[j - 1]),
            float(p["q1"][0, j]),
            float(p["x1"][0, j]),
            float(p["x0"][0, j]),
        )
