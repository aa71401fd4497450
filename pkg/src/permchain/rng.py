"""Seed derivation for reproducible parallel Monte Carlo.

Every task gets its own generator derived from ``(master_seed, task index)``
through :class:`numpy.random.SeedSequence`, so results never depend on how
tasks are scheduled across workers.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def task_rng(master_seed: int, *task: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed) & MASK64, spawn_key=tuple(int(t) for t in task))
    return np.random.Generator(np.random.PCG64(ss))


def task_seed(master_seed: int, *task: int) -> int:
    """A 64-bit integer seed for ``task``, for recording in outputs."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & MASK64, spawn_key=tuple(int(t) for t in task))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
