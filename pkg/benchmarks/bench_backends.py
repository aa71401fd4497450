"""Time the numba and numpy implementations of each kernel and check they agree.

    python benchmarks/bench_backends.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from permchain import kernels as K
from permchain.core import PermutedChain, densify_q
from permchain.generators import lazy_cycle, random_bistochastic, random_perm


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases():
    chain = PermutedChain(random_bistochastic(5000, 4, 1), random_perm(5000, 2))
    p = chain.p
    rng = np.random.default_rng(0)
    block = rng.dirichlet(np.ones(p.n), size=32)

    def prop(impl):
        out = np.empty_like(block)
        impl(p.indptr, chain.qcols, p.data, block, out)
        return out

    cum = K._row_cumsum_np(p.indptr, p.data)
    rows = rng.integers(0, p.n, 200_000)
    u = rng.random(200_000)

    lc = lazy_cycle(10_000)
    lcum = K._row_cumsum_np(lc.indptr, lc.data)
    runs, t = 500, 50
    uni = np.random.default_rng(1).random((runs, t + 1, 3))

    def coupling(impl):
        out_t, out_w = np.empty(runs, dtype=np.int64), np.empty(runs)
        impl(lc.indptr, lc.indices, lc.data, lcum, lc.n, np.zeros(runs, dtype=np.int64), uni,
             np.empty((0, 4, 1), dtype=np.int64), out_t, out_w)
        return out_t, out_w

    small = random_bistochastic(16, 2, 3, laziness=0.3)
    perm = random_perm(16, 4)
    q = densify_q(PermutedChain(small, perm))
    q2 = np.ascontiguousarray(q @ q)

    yield "propagate_block 32x5000", lambda: prop(K._propagate_block_nb), lambda: prop(K._propagate_block_np)
    yield "row_cumsum", lambda: K._row_cumsum_nb(p.indptr, p.data), lambda: K._row_cumsum_np(p.indptr, p.data)
    yield "sample_rows 2e5", lambda: K._sample_rows_nb(p.indptr, cum, rows, u), lambda: K._sample_rows_np(p.indptr, cum, rows, u)
    yield "coupling_runs 500x50", lambda: coupling(K._coupling_runs_nb), lambda: coupling(K._coupling_runs_impl)
    yield (
        "alpha n=16",
        lambda: tuple(int(v) for v in K._alpha_gray_nb(small.indptr, small.indices, perm.images, 16)),
        lambda: K._alpha_gray_np(small.indptr, small.indices, perm.images, 16),
    )
    yield "phi_star n=16", lambda: K._phi_star_nb(q2, 16), lambda: K._phi_star_np(q2, 16)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':<26}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  equal")
    for name, nb, npy in cases():
        nb()  # compile outside the timing
        t_nb, a = best_of(nb, args.repeat)
        t_np, b = best_of(npy, args.repeat)
        print(f"{name:<26}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>9.1f}  {same(a, b)}")


if __name__ == "__main__":
    main()
