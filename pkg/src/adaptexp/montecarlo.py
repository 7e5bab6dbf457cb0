"""Deterministic seeding and Monte Carlo bookkeeping.

Every random draw in the package comes from a :class:`Stream`, a node in a
tree of ``numpy.random.SeedSequence`` spawn keys rooted at the master seed.
Replications are processed in fixed-size blocks; block ``b`` always draws from
``stream.child(b)``, so results do not depend on how blocks are scheduled
across threads.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 1000

# Stream roles inside one replication block.
ROLE_STACK = 0  # child(ROLE_STACK, arm)
ROLE_POLICY = 1
ROLE_PRIOR = 2
ROLE_BRIDGE = 3


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    if isinstance(part, float):
        return zlib.crc32(repr(part).encode())
    return zlib.crc32(str(part).encode())


@dataclass(frozen=True)
class Stream:
    """Counter-based random stream: a master seed plus a key path.

    Strings and floats in the key path are hashed with CRC-32, so
    ``Stream(7).child("risk", 100)`` names the same stream in every process.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *keys) -> "Stream":
        return Stream(self.seed, self.path + tuple(_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def as_stream(rng) -> Stream:
    if isinstance(rng, Stream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Stream(int(rng))
    raise TypeError(f"expected a Stream or an integer seed, got {type(rng).__name__}")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    reps: int

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")

    @classmethod
    def from_samples(cls, samples) -> "McEstimate":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("no samples")
        se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
        return cls(float(x.mean()), se, int(x.size))

    def ci(self, z: float = 1.959963984540054) -> tuple[float, float]:
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    def overlaps(self, other: "McEstimate", z: float = 1.959963984540054) -> bool:
        lo1, hi1 = self.ci(z)
        lo2, hi2 = other.ci(z)
        return lo1 <= hi2 and lo2 <= hi1


def block_sizes(reps: int, block: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(reps, block)
    return [block] * full + ([rest] if rest else [])


def run_blocks(
    fn: Callable[[int, Stream], object],
    reps: int,
    stream: Stream,
    threads: int = 1,
) -> list:
    """Call ``fn(block_reps, stream.child(b))`` for each block, in block order."""
    sizes = block_sizes(reps)
    jobs = [(size, stream.child(b)) for b, size in enumerate(sizes)]
    if threads <= 1 or len(jobs) <= 1:
        return [fn(size, s) for size, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def concat_blocks(parts: Sequence, axis: int = 0):
    if isinstance(parts[0], dict):
        return {k: np.concatenate([p[k] for p in parts], axis=axis) for k in parts[0]}
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(col, axis=axis) for col in zip(*parts))
    return np.concatenate(parts, axis=axis)
