"""Example chains and permutations, deterministic and seeded."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Permutation, PermutedChain, StochasticMatrix, ValidationError, power
from .rng import task_rng, task_seed


@dataclass(frozen=True)
class GraphSpec:
    """Directed multigraph; ``edges`` is an (m, 2) array of (u, v) pairs."""

    n: int
    edges: np.ndarray
    d: int

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.n)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=self.n)

    def is_regular(self) -> bool:
        return bool(np.all(self.out_degrees() == self.d) and np.all(self.in_degrees() == self.d))

    def srw_matrix(self) -> StochasticMatrix:
        """Simple random walk; parallel edges add up."""
        deg = self.out_degrees()
        if np.any(deg == 0):
            raise ValidationError("no-dangling", "every vertex needs an out-edge")
        key = self.edges[:, 0] * self.n + self.edges[:, 1]
        uniq, counts = np.unique(key, return_counts=True)
        rows, cols = uniq // self.n, uniq % self.n
        return StochasticMatrix.from_entries(self.n, rows, cols, counts / deg[rows])

    def to_edge_list(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {self.d}-regular n={self.n}\n")
        for u, v in self.edges.tolist():
            buf.write(f"{u} {v}\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# matrices


def lazy_cycle(n: int) -> StochasticMatrix:
    """Steps uniform on {-1, 0, +1} mod n."""
    if n < 3:
        raise ValueError(f"lazy cycle needs n >= 3, got {n}")
    x = np.arange(n)
    rows = np.repeat(x, 3)
    cols = (rows + np.tile([-1, 0, 1], n)) % n
    return StochasticMatrix.from_entries(n, rows, cols, np.full(3 * n, 1.0 / 3.0))


def random_bistochastic(n: int, num_perms: int, seed: int, laziness: float = 0.0) -> StochasticMatrix:
    """Random convex combination of permutation matrices.

    With ``laziness > 0`` the identity gets that weight, so every diagonal
    entry is at least ``laziness``.
    """
    rng = task_rng(seed)
    w = rng.dirichlet(np.ones(num_perms)) * (1.0 - laziness)
    rows = [np.arange(n)] * num_perms
    cols = [rng.permutation(n) for _ in range(num_perms)]
    vals = [np.full(n, wi) for wi in w]
    if laziness > 0:
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(np.full(n, laziness))
    r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    key = r * n + c
    uniq, inv = np.unique(key, return_inverse=True)
    merged = np.minimum(np.bincount(inv, weights=v), 1.0)
    keep = merged > 0
    return StochasticMatrix.from_entries(n, uniq[keep] // n, uniq[keep] % n, merged[keep])


# ---------------------------------------------------------------------------
# permutations


def doubling_perm(n: int, a: int = 2) -> Permutation:
    """x -> a x mod n."""
    if math.gcd(a, n) != 1:
        raise ValueError(f"x -> {a}x mod {n} is not a bijection (gcd = {math.gcd(a, n)})")
    return Permutation((a * np.arange(n)) % n)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def inverse_perm(n: int) -> Permutation:
    """x -> x^{-1} mod n for x != 0, and 0 -> 0. ``n`` must be prime."""
    if not is_prime(n):
        raise ValueError(f"n={n} is not prime")
    return Permutation([0] + [pow(x, -1, n) for x in range(1, n)])


def random_perm(n: int, seed: int) -> Permutation:
    """Uniform permutation from a Fisher-Yates shuffle of 0..n-1."""
    return Permutation(task_rng(seed).permutation(n))


# ---------------------------------------------------------------------------
# graphs


def random_regular_digraph(
    n: int, d: int, seed: int, perms: Optional[Sequence[Permutation]] = None
) -> tuple[GraphSpec, StochasticMatrix]:
    """Union of ``d`` independent uniform permutations (edges x -> perm_i(x)).

    Parallel edges are kept and show up as weight multiplicity/d. ``perms``
    replaces the random draws, for testing.
    """
    if perms is None:
        if d < 1 or n < 1:
            raise ValueError("need d >= 1 and n >= 1")
        perms = [random_perm(n, task_seed(seed, i)) for i in range(d)]
    elif len(perms) != d:
        raise ValueError(f"expected {d} permutations, got {len(perms)}")
    src = np.tile(np.arange(n), d)
    dst = np.concatenate([p.images for p in perms])
    g = GraphSpec(n=n, edges=np.stack([src, dst], axis=1), d=d)
    return g, g.srw_matrix()


def random_regular_graph(r: int, d: int, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Uniform simple d-regular graph by the configuration model with rejection.

    Returns undirected edges as an (r*d/2, 2) array.
    """
    if (r * d) % 2 or d >= r:
        raise ValueError(f"no simple {d}-regular graph on {r} vertices")
    stubs = np.repeat(np.arange(r), d)
    for _ in range(max_tries):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        pairs.sort(axis=1)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        if len(np.unique(pairs[:, 0] * r + pairs[:, 1])) != len(pairs):
            continue
        return pairs
    raise RuntimeError(f"configuration model rejected {max_tries} pairings")


def no_cutoff_sizes(n: int) -> tuple[int, int]:
    """Size of the expander part and number of K4 copies for total size ``n``."""
    if n % 2:
        raise ValueError(f"n={n} must be even for a 3-regular part plus K4 copies")
    if n < 5:
        raise ValueError(f"n={n} too small")
    r = 2 * math.floor(n / (2 * math.sqrt(math.log(n))) + 0.5)
    r += (n - r) % 4
    if r < 4 or r > n:
        raise ValueError(f"infeasible expander size r={r} for n={n}")
    return r, (n - r) // 4


def no_cutoff_graph(n: int, seed: int) -> tuple[GraphSpec, StochasticMatrix]:
    """Random 3-regular graph on about n/sqrt(ln n) vertices plus copies of K4.

    The random regular graph stands in for a Ramanujan graph. Vertices
    0..r-1 form the expander part; the rest are K4 copies.
    """
    r, copies = no_cutoff_sizes(n)
    und = random_regular_graph(r, 3, task_rng(seed))
    k4 = np.array([(a, b) for a in range(4) for b in range(a + 1, 4)])
    blocks = [und] + [k4 + r + 4 * c for c in range(copies)]
    und = np.concatenate(blocks)
    edges = np.concatenate([und, und[:, ::-1]])
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    g = GraphSpec(n=n, edges=edges, d=3)
    return g, g.srw_matrix()


def no_cutoff_k(n: int) -> int:
    """Smallest integer k with k > (3 / ln 2) ln n."""
    return math.floor(3.0 * math.log2(n)) + 1


def power_chain(m: StochasticMatrix, k: int, perm: Permutation) -> PermutedChain:
    """k simple random walk steps followed by one step of ``perm``."""
    return PermutedChain(power(m, k), perm)
