"""Annealed walk with on-the-fly permutation revelation, and its i.i.d. coupling.

The permutation is never drawn in full. A run samples ``Y_k ~ P(X_k, .)``;
the image of a fresh ``Y_k`` is drawn uniformly from the unused images, and
``X_{k+1} = perm(Y_k)``. Averaged over runs this is the law of the walk
averaged over a uniform permutation.

Failure-time convention for the coupling: at step ``k`` the reference pair
``(X*_k, Y*_k)`` is tested against Dom and Ran as they stood before the
reveal that produced ``X_k``. Concretely ``T = k`` when ``Y*_k`` already has
an image, or when the uniform draw ``X*_k`` hit an image revealed at an
earlier step. With n = 1 this gives T = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import StochasticMatrix
from .rng import task_rng


def _cum(p: StochasticMatrix) -> np.ndarray:
    return kernels.row_cumsum(p.indptr, p.data)


@dataclass
class RevealedPermutation:
    n: int
    dom: dict[int, int]

    @property
    def ran(self) -> set[int]:
        return set(self.dom.values())

    def is_injective(self) -> bool:
        return len(self.ran) == len(self.dom)


@dataclass
class Trajectory:
    states: np.ndarray
    intermediates: np.ndarray
    log_weight: float

    @property
    def t(self) -> int:
        return len(self.intermediates)


@dataclass
class CouplingOutcome:
    T: Optional[int]
    t_max: int
    path_entropy: Optional[float] = None
    real: Optional[tuple[np.ndarray, np.ndarray]] = None
    reference: Optional[tuple[np.ndarray, np.ndarray]] = None

    @property
    def survived(self) -> bool:
        return self.T is None


def annealed_walk(p: StochasticMatrix, x0: int, t: int, seed: int) -> tuple[Trajectory, RevealedPermutation]:
    if t < 0:
        raise ValueError("t must be >= 0")
    if not 0 <= x0 < p.n:
        raise IndexError(f"x0={x0} out of range")
    uni = task_rng(seed).random((1, t, 2))
    traj_x = np.empty((1, t + 1), dtype=np.int64)
    traj_y = np.empty((1, max(t, 1)), dtype=np.int64)
    out_x = np.empty(1, dtype=np.int64)
    out_logw = np.empty(1)
    out_nrev = np.empty(1, dtype=np.int64)
    kernels.annealed_runs(p.indptr, p.indices, p.data, _cum(p), p.n, np.array([x0]), uni, traj_x, traj_y, out_x, out_logw, out_nrev)
    xs, ys = traj_x[0], traj_y[0, :t]
    dom: dict[int, int] = {}
    for y, x in zip(ys.tolist(), xs[1:].tolist()):
        dom.setdefault(y, x)
    return Trajectory(states=xs, intermediates=ys, log_weight=float(out_logw[0])), RevealedPermutation(p.n, dom)


def annealed_endpoints(p: StochasticMatrix, x0: int, t: int, num_runs: int, master_seed: int) -> np.ndarray:
    """X_t for ``num_runs`` independent annealed walks (fresh permutation each)."""
    uni = task_rng(master_seed).random((num_runs, t, 2))
    dummy = np.empty((0, 1), dtype=np.int64)
    out_x = np.empty(num_runs, dtype=np.int64)
    out_logw = np.empty(num_runs)
    out_nrev = np.empty(num_runs, dtype=np.int64)
    kernels.annealed_runs(
        p.indptr, p.indices, p.data, _cum(p), p.n, np.full(num_runs, x0, dtype=np.int64), uni, dummy, dummy, out_x, out_logw, out_nrev
    )
    return out_x


def path_entropy(traj: Trajectory) -> float:
    """-log_weight / t, in nats."""
    if traj.t == 0:
        raise ValueError("path entropy needs t >= 1")
    return 0.0 - traj.log_weight / traj.t


def _coupling_uniforms(master_seed: int, runs: range, t_max: int) -> np.ndarray:
    return np.stack([task_rng(master_seed, r).random((t_max + 1, 3)) for r in runs])


def coupling_batch(
    p: StochasticMatrix, x0: int, t_max: int, num_runs: int, master_seed: int, record: bool = False
) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Failure times (-1 = survived), real-path log weights, optional trajectories.

    Run ``r`` uses the generator derived from ``(master_seed, r)``.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    uni = _coupling_uniforms(master_seed, range(num_runs), t_max)
    traj = np.full((num_runs, 4, t_max + 1), -1, dtype=np.int64) if record else np.empty((0, 4, 1), dtype=np.int64)
    out_t = np.empty(num_runs, dtype=np.int64)
    out_logw = np.empty(num_runs)
    kernels.coupling_runs(p.indptr, p.indices, p.data, _cum(p), p.n, np.full(num_runs, x0, dtype=np.int64), uni, traj, out_t, out_logw)
    return out_t, out_logw, (traj if record else None)


def coupling_run(p: StochasticMatrix, x0: int, t_max: int, seed: int, record: bool = True) -> CouplingOutcome:
    """One paired run of the revealed walk and the i.i.d. reference process."""
    out_t, logw, traj = coupling_batch(p, x0, t_max, 1, seed, record=record)
    T = int(out_t[0])
    outcome = CouplingOutcome(
        T=None if T < 0 else T,
        t_max=t_max,
        path_entropy=0.0 - float(logw[0]) / t_max if t_max > 0 else None,
    )
    if traj is not None:
        tr = traj[0]
        outcome.real = (tr[0], tr[1, :t_max])
        outcome.reference = (tr[2], tr[3, :t_max])
    return outcome


def coupling_bound(t: int, n: int) -> float:
    """Union bound 2 t^2 / n on P(T <= t)."""
    return 2.0 * t * t / n


@dataclass
class IIDStats:
    mean: float
    variance: float
    samples: int


def iid_reference_stats(p: StochasticMatrix, t: int, num_runs: int, seed: int) -> IIDStats:
    """Mean and variance of log(1/P(X*, Y*)) over X* uniform, Y* ~ P(X*, .)."""
    if num_runs < 1 or t < 1:
        raise ValueError("need t >= 1 and num_runs >= 1")
    rng = task_rng(seed)
    size = t * num_runs
    xs = rng.integers(0, p.n, size=size)
    j = kernels.sample_rows(p.indptr, _cum(p), xs, rng.random(size))
    cost = -np.log(p.data[j])
    return IIDStats(mean=float(cost.mean()), variance=float(cost.var()), samples=size)


def coupling_summary(out_t: np.ndarray, t: int, n: int) -> dict:
    failed = out_t[(out_t >= 0) & (out_t <= t)]
    frac = len(failed) / len(out_t)
    bound = coupling_bound(t, n)
    sigma = math.sqrt(max(bound * (1 - bound), 0.0) / len(out_t)) if bound < 1 else 0.0
    return {
        "runs": int(len(out_t)),
        "t": t,
        "n": n,
        "failure_fraction": frac,
        "coupling_bound": bound,
        "bound_plus_3sigma": bound + 3 * sigma,
    }
