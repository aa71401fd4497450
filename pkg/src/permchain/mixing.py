"""Total-variation profiles, mixing times and the random-permutation ensemble."""

from __future__ import annotations

import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence, TypeVar, Union

import numpy as np

from . import kernels
from .core import PermutedChain, StochasticMatrix, stats
from .generators import random_perm
from .rng import task_rng, task_seed

log = logging.getLogger(__name__)

MASS_TOL = 1e-9
DRIFT_TOL = 1e-6
START_BATCH = 64

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Ordered map; results never depend on ``workers``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# propagation


def tv_to_uniform(mu: np.ndarray) -> float:
    """Sum over states of (1/n - mu(y))_+."""
    mu = np.asarray(mu, dtype=np.float64)
    return float(np.maximum(1.0 / len(mu) - mu, 0.0).sum())


def _tv_rows(block: np.ndarray) -> np.ndarray:
    return np.maximum(1.0 / block.shape[1] - block, 0.0).sum(axis=1)


def _check_distribution(mu: np.ndarray, n: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (n,):
        raise ValueError(f"distribution must have shape ({n},), got {mu.shape}")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > MASS_TOL:
        raise ValueError("mu must be a probability vector summing to 1 within 1e-9")
    return mu


def _sparse_step(chain: PermutedChain, support: np.ndarray, vals: np.ndarray):
    p = chain.p
    starts = p.indptr[support]
    lengths = p.indptr[support + 1] - starts
    offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(lengths)[:-1])), lengths)
    j = offsets + np.arange(lengths.sum())
    cols = chain.qcols[j]
    w = np.repeat(vals, lengths) * p.data[j]
    new_support, inv = np.unique(cols, return_inverse=True)
    # bincount adds in input order, i.e. by source state then storage order,
    # exactly as the dense kernel does.
    return new_support, np.bincount(inv, weights=w, minlength=len(new_support))


def iterate(chain: PermutedChain, mu: np.ndarray) -> Iterator[np.ndarray]:
    """Yield mu, mu Q, mu Q^2, ... as dense vectors.

    Starts on the support of ``mu`` and switches to the dense kernel once the
    support exceeds n/2 states.
    """
    n = chain.n
    mu = _check_distribution(mu, n)
    yield mu.copy()
    support = np.flatnonzero(mu)
    vals = mu[support]
    while len(support) <= n // 2:
        support, vals = _sparse_step(chain, support, vals)
        out = np.zeros(n)
        out[support] = vals
        yield out
    cur = np.zeros((1, n))
    cur[0, support] = vals
    nxt = np.empty_like(cur)
    while True:
        kernels.propagate_block(chain.p.indptr, chain.qcols, chain.p.data, cur, nxt)
        cur, nxt = nxt, cur
        yield cur[0].copy()


def propagate(chain: PermutedChain, mu: np.ndarray, t: int) -> np.ndarray:
    """mu Q^t by ``t`` sparse row expansions."""
    if t < 0:
        raise ValueError("t must be >= 0")
    it = iterate(chain, mu)
    out = next(it)
    for _ in range(t):
        out = next(it)
    drift = abs(out.sum() - 1.0)
    if drift > DRIFT_TOL:
        warnings.warn(f"propagated mass drifted by {drift:.3g}", RuntimeWarning, stacklevel=2)
    return out


def point_mass(n: int, x: int) -> np.ndarray:
    mu = np.zeros(n)
    mu[x] = 1.0
    return mu


@dataclass
class TVProfile:
    start: int
    values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,d\n")
        for t, d in enumerate(self.values.tolist()):
            buf.write(f"{t},{d!r}\n")
        return buf.getvalue()


def tv_profile(chain: PermutedChain, start: int, t_max: int) -> TVProfile:
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if not 0 <= start < chain.n:
        raise IndexError(f"start {start} out of range")
    values = np.empty(t_max + 1)
    it = iterate(chain, point_mass(chain.n, start))
    for t in range(t_max + 1):
        values[t] = tv_to_uniform(next(it))
    return TVProfile(start=start, values=values)


# ---------------------------------------------------------------------------
# mixing times


@dataclass(frozen=True)
class StartMode:
    """Which starting states enter the worst case: all of them, or a seeded sample."""

    kind: str = "exhaustive"
    count: int = 0
    seed: int = 0

    @classmethod
    def exhaustive(cls) -> "StartMode":
        return cls("exhaustive")

    @classmethod
    def sampled(cls, count: int, seed: int) -> "StartMode":
        if count < 1:
            raise ValueError("sampled start count must be >= 1")
        return cls("sampled", int(count), int(seed))

    def starts(self, n: int) -> np.ndarray:
        if self.kind == "exhaustive":
            return np.arange(n)
        rng = task_rng(self.seed)
        return np.sort(rng.choice(n, size=min(self.count, n), replace=False))

    def to_dict(self) -> dict:
        if self.kind == "exhaustive":
            return {"kind": "exhaustive"}
        return {"kind": "sampled", "count": self.count, "seed": self.seed}


def default_t_cap(n: int, entropy_rate: float) -> int:
    return 20 * math.ceil(math.log(n) / max(entropy_rate, 0.1)) if n > 1 else 1


def _batch_curve(chain: PermutedChain, starts: np.ndarray, stop_below: float, t_cap: int) -> np.ndarray:
    """Max-over-batch distance for t = 0.. until it is <= stop_below or t_cap."""
    n = chain.n
    cur = np.zeros((len(starts), n))
    cur[np.arange(len(starts)), starts] = 1.0
    nxt = np.empty_like(cur)
    curve = [float(_tv_rows(cur).max())]
    t = 0
    while curve[-1] > stop_below and t < t_cap:
        kernels.propagate_block(chain.p.indptr, chain.qcols, chain.p.data, cur, nxt)
        cur, nxt = nxt, cur
        t += 1
        curve.append(float(_tv_rows(cur).max()))
    return np.array(curve)


def worst_case_curve(
    chain: PermutedChain,
    starts: np.ndarray,
    stop_below: float = 0.0,
    t_cap: int = 1000,
    workers: int = 1,
) -> np.ndarray:
    """max over ``starts`` of D_x(t), for t = 0.. until <= stop_below or t_cap.

    Starts are processed in fixed-size batches, so the result does not depend
    on ``workers``. A batch stops early once its own maximum is below
    ``stop_below``; later values of that batch are taken as its last value,
    which bounds them because each D_x(t) is non-increasing in t.
    """
    batches = [starts[i : i + START_BATCH] for i in range(0, len(starts), START_BATCH)]
    curves = parallel_map(lambda b: _batch_curve(chain, b, stop_below, t_cap), batches, workers)
    length = max(len(c) for c in curves)
    out = np.zeros(length)
    for c in curves:
        padded = np.concatenate((c, np.full(length - len(c), c[-1])))
        np.maximum(out, padded, out=out)
    return out


def first_below(curve: np.ndarray, eps: float) -> Optional[int]:
    hits = np.flatnonzero(curve <= eps)
    return int(hits[0]) if len(hits) else None


@dataclass
class MixingReport:
    n: int
    epsilons: list[float]
    t_mix: list[Optional[int]]
    start_mode: StartMode
    num_starts: int
    t_cap: int
    entropy_rate: float
    entropic_time: Optional[float]
    ratio: list[Optional[float]]
    window_ratio: Optional[float]
    curve: np.ndarray = field(repr=False)

    @property
    def lower_bound(self) -> bool:
        """Sampled starts only certify a lower bound on the worst-case mixing time."""
        return self.start_mode.kind == "sampled" and self.num_starts < self.n

    @property
    def mixed(self) -> bool:
        return all(t is not None for t in self.t_mix)

    def time_for(self, eps: float) -> Optional[int]:
        for e, t in zip(self.epsilons, self.t_mix):
            if math.isclose(e, eps, rel_tol=0, abs_tol=1e-12):
                return t
        raise KeyError(f"eps={eps} not in report")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "epsilons": self.epsilons,
            "t_mix": self.t_mix,
            "outcome": "mixed" if self.mixed else "not-mixed-by-cap",
            "start_mode": self.start_mode.to_dict(),
            "seed": self.start_mode.seed if self.start_mode.kind == "sampled" else None,
            "num_starts": self.num_starts,
            "lower_bound": self.lower_bound,
            "t_cap": self.t_cap,
            "entropy_rate": self.entropy_rate,
            "entropic_time": self.entropic_time,
            "ratio": self.ratio,
            "window_ratio": self.window_ratio,
        }


def _window(times: dict, eps_list: Sequence[float]) -> Optional[float]:
    for e in sorted(eps_list):
        if e < 0.5:
            partner = [f for f in eps_list if math.isclose(f, 1.0 - e, abs_tol=1e-12)]
            if partner and times.get(e) is not None and times.get(partner[0]):
                return times[e] / times[partner[0]]
    return None


def mixing_time(
    chain: PermutedChain,
    eps: Union[float, Iterable[float]] = (0.25, 0.75),
    start_mode: StartMode = StartMode(),
    t_cap: Optional[int] = None,
    workers: int = 1,
) -> MixingReport:
    """Least t <= t_cap with max over starts of D_x(t) <= eps, for each eps.

    Unresolved targets are reported as None with outcome
    ``not-mixed-by-cap``; nothing is raised.
    """
    eps_list = [float(eps)] if isinstance(eps, (int, float)) else [float(e) for e in eps]
    if not eps_list or any(not 0.0 < e < 1.0 for e in eps_list):
        raise ValueError("every eps must lie in (0, 1)")
    st = stats(chain.p)
    if t_cap is None:
        t_cap = default_t_cap(chain.n, st.entropy_rate)
    if t_cap < 1:
        raise ValueError("t_cap must be >= 1")
    starts = start_mode.starts(chain.n)
    curve = worst_case_curve(chain, starts, stop_below=min(eps_list), t_cap=t_cap, workers=workers)
    times = {e: first_below(curve, e) for e in eps_list}
    logn = math.log(chain.n) if chain.n > 1 else 0.0
    ratios = [
        st.entropy_rate * times[e] / logn if times[e] is not None and logn > 0 else None for e in eps_list
    ]
    return MixingReport(
        n=chain.n,
        epsilons=eps_list,
        t_mix=[times[e] for e in eps_list],
        start_mode=start_mode,
        num_starts=len(starts),
        t_cap=t_cap,
        entropy_rate=st.entropy_rate,
        entropic_time=st.entropic_time,
        ratio=ratios,
        window_ratio=_window(times, eps_list),
        curve=curve,
    )


def cutoff_window(report: MixingReport, eps: float = 0.25) -> Optional[float]:
    """t_mix(eps) / t_mix(1 - eps); None when t_mix(1 - eps) is 0."""
    lo, hi = report.time_for(eps), report.time_for(1.0 - eps)
    if lo is None or hi is None:
        raise ValueError("both mixing times must be resolved")
    if hi == 0:
        return None
    return lo / hi


# ---------------------------------------------------------------------------
# random-permutation ensemble


@dataclass
class EnsembleEntry:
    index: int
    perm_seed: int
    start_seed: Optional[int]
    t_mix: list[Optional[int]]
    ratio: Optional[float]
    window_ratio: Optional[float]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "perm_seed": self.perm_seed,
            "start_seed": self.start_seed,
            "t_mix": self.t_mix,
            "outcome": "mixed" if all(t is not None for t in self.t_mix) else "not-mixed-by-cap",
            "ratio": self.ratio,
            "window_ratio": self.window_ratio,
        }


@dataclass
class EnsembleSummary:
    n: int
    num_seeds: int
    master_seed: int
    epsilons: list[float]
    primary_eps: float
    start_mode: dict
    t_cap: int
    entropy_rate: float
    entries: list[EnsembleEntry]

    @property
    def ratios(self) -> list[Optional[float]]:
        return [e.ratio for e in self.entries]

    def _resolved(self) -> list[float]:
        return [r for r in self.ratios if r is not None]

    @property
    def median(self) -> Optional[float]:
        r = self._resolved()
        return float(np.median(r)) if r else None

    @property
    def min(self) -> Optional[float]:
        r = self._resolved()
        return min(r) if r else None

    @property
    def max(self) -> Optional[float]:
        r = self._resolved()
        return max(r) if r else None

    @property
    def window_median(self) -> Optional[float]:
        w = [e.window_ratio for e in self.entries if e.window_ratio is not None]
        return float(np.median(w)) if w else None

    def mad_from_one(self) -> Optional[float]:
        """Median absolute deviation of the ratios from 1."""
        r = self._resolved()
        return float(np.median(np.abs(np.array(r) - 1.0))) if r else None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "num_seeds": self.num_seeds,
            "seed": self.master_seed,
            "epsilons": self.epsilons,
            "primary_eps": self.primary_eps,
            "start_mode": self.start_mode,
            "t_cap": self.t_cap,
            "entropy_rate": self.entropy_rate,
            "ratios": self.ratios,
            "median": self.median,
            "min": self.min,
            "max": self.max,
            "mad_from_one": self.mad_from_one(),
            "window_median": self.window_median,
            "entries": [e.to_dict() for e in self.entries],
        }


def ensemble_experiment(
    p: StochasticMatrix,
    num_seeds: int,
    master_seed: int,
    eps: Union[float, Sequence[float]] = (0.25, 0.75),
    start_mode: Optional[StartMode] = None,
    t_cap: Optional[int] = None,
    workers: int = 1,
) -> EnsembleSummary:
    """t_mix of P Pi for ``num_seeds`` uniform random permutations.

    Seed ``i`` draws its permutation from ``(master_seed, i, 0)`` and, in
    sampled mode, its starts from ``(master_seed, i, 1)``. ``start_mode``
    gives the sample size (its own seed is ignored); None means exhaustive.
    """
    if num_seeds < 1:
        raise ValueError("num_seeds must be >= 1")
    if not p.bistochastic:
        raise ValueError("ensemble requires a bistochastic matrix")
    eps_list = [float(eps)] if isinstance(eps, (int, float)) else [float(e) for e in eps]
    primary = 0.25 if any(math.isclose(e, 0.25) for e in eps_list) else eps_list[0]
    st = stats(p)
    cap = t_cap if t_cap is not None else default_t_cap(p.n, st.entropy_rate)

    def one(i: int) -> EnsembleEntry:
        perm_seed = task_seed(master_seed, i, 0)
        if start_mode is None or start_mode.kind == "exhaustive":
            mode, start_seed = StartMode.exhaustive(), None
        else:
            start_seed = task_seed(master_seed, i, 1)
            mode = StartMode.sampled(start_mode.count, start_seed)
        chain = PermutedChain(p, random_perm(p.n, perm_seed))
        rep = mixing_time(chain, eps_list, mode, cap)
        log.info("seed %d: t_mix=%s", i, rep.t_mix)
        return EnsembleEntry(
            index=i,
            perm_seed=perm_seed,
            start_seed=start_seed,
            t_mix=rep.t_mix,
            ratio=rep.ratio[eps_list.index(primary)],
            window_ratio=rep.window_ratio,
        )

    entries = parallel_map(one, list(range(num_seeds)), workers)
    return EnsembleSummary(
        n=p.n,
        num_seeds=num_seeds,
        master_seed=int(master_seed),
        epsilons=eps_list,
        primary_eps=primary,
        start_mode=(
            {"kind": "sampled", "count": start_mode.count}
            if start_mode is not None and start_mode.kind == "sampled"
            else {"kind": "exhaustive"}
        ),
        t_cap=cap,
        entropy_rate=st.entropy_rate,
        entries=entries,
    )
