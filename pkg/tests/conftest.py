import itertools

import numpy as np
import pytest

from permchain.core import Permutation, PermutedChain, StochasticMatrix
from permchain.generators import random_bistochastic, random_perm


def dense_q(p: StochasticMatrix, perm: Permutation) -> np.ndarray:
    """Q built column-by-column from dense P, independent of the CSR code path."""
    pd = p.to_dense()
    q = np.zeros_like(pd)
    for z in range(p.n):
        q[:, perm.images[z]] += pd[:, z]
    return q


def dense_profile(q: np.ndarray, start: int, t_max: int) -> np.ndarray:
    n = q.shape[0]
    mu = np.zeros(n)
    mu[start] = 1.0
    out = []
    for _ in range(t_max + 1):
        out.append(np.maximum(1.0 / n - mu, 0.0).sum())
        mu = mu @ q
    return np.array(out)


def dense_tmix(q: np.ndarray, eps: float, t_cap: int = 100_000):
    n = q.shape[0]
    m = np.eye(n)
    for t in range(t_cap + 1):
        if np.maximum(1.0 / n - m, 0.0).sum(axis=1).max() <= eps:
            return t
        m = m @ q
    return None


def brute_alpha(p: StochasticMatrix, perm: Permutation):
    """Minimum ratio over all subsets by plain itertools enumeration, as a Fraction."""
    from fractions import Fraction

    pd = p.to_dense() > 0
    n = p.n
    best = None
    for k in range(1, n // 2 + 1):
        for a in itertools.combinations(range(n), k):
            e1 = np.flatnonzero(pd[list(a)].any(axis=0))
            e2 = pd[perm.images[e1]].any(axis=0).sum()
            r = Fraction(int(e2), k)
            if best is None or r < best:
                best = r
    return best


def random_instance(seed: int, n_lo: int = 3, n_hi: int = 32, laziness: float = 0.0):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi + 1))
    k = int(rng.integers(1, 4))
    p = random_bistochastic(n, k, seed, laziness=laziness)
    return p, random_perm(n, seed + 10_000)


@pytest.fixture
def lazy5():
    from permchain.generators import lazy_cycle

    return lazy_cycle(5)


@pytest.fixture
def small_chain():
    p, perm = random_instance(3, 6, 6)
    return PermutedChain(p, perm)
