"""Acceptance battery. Each check prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import functools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from permchain.annealed import coupling_batch
from permchain.core import Permutation, PermutedChain, power, stats
from permchain.expansion import alpha_exact, alpha_search, evolving_set_bound, phi_of_set, phi_star_exact
from permchain.generators import lazy_cycle, no_cutoff_graph, no_cutoff_k, random_bistochastic, random_perm
from permchain.mixing import StartMode, ensemble_experiment, mixing_time, tv_profile

from conftest import brute_alpha, dense_profile, dense_q, dense_tmix

ENSEMBLE_SEED = 2024
ENSEMBLE_SIZES = (1024, 4096, 16384)
NUM_SEEDS = 5
SAMPLED_STARTS = 32


def _line(num, ok, detail):
    return f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


@functools.lru_cache(maxsize=None)
def lazy_ensemble(n):
    return ensemble_experiment(
        lazy_cycle(n), NUM_SEEDS, ENSEMBLE_SEED, [0.25, 0.75], StartMode.sampled(SAMPLED_STARTS, 0)
    )


def dense_phi(q2, s):
    inside = np.zeros(q2.shape[0], dtype=bool)
    inside[list(s)] = True
    return float(np.minimum(q2[inside].sum(axis=0), q2[~inside].sum(axis=0)).sum() / (2 * inside.sum()))


# ---------------------------------------------------------------------------


def check_1():
    t0 = time.perf_counter()
    worst_h = worst_v = 0.0
    for n in (3, 10, 1000):
        s = stats(lazy_cycle(n))
        worst_h = max(worst_h, abs(s.entropy_rate - math.log(3)))
        worst_v = max(worst_v, abs(s.entropy_variance))
    dt = time.perf_counter() - t0
    ok = worst_h <= 1e-12 and worst_v <= 1e-12 and dt < 1.0
    return ok, f"max|h-ln3|={worst_h:.1e} max|var|={worst_v:.1e} time={dt:.2f}s"


def check_2():
    t0 = time.perf_counter()
    worst_tv = worst_phi = 0.0
    t_max = 4096
    for i in range(50):
        rng = np.random.default_rng(1000 + i)
        n = int(rng.integers(3, 33))
        p = random_bistochastic(n, int(rng.integers(1, 4)), 1000 + i)
        perm = random_perm(n, 2000 + i)
        chain = PermutedChain(p, perm)
        q = dense_q(p, perm)
        start = int(rng.integers(n))
        prof = tv_profile(chain, start, t_max).values
        worst_tv = max(worst_tv, float(np.max(np.abs(prof - dense_profile(q, start, t_max)))))
        q2 = q @ q
        for _ in range(5):
            s = rng.choice(n, size=int(rng.integers(1, n // 2 + 1)), replace=False)
            worst_phi = max(worst_phi, abs(phi_of_set(chain, s) - dense_phi(q2, s)))
    dt = time.perf_counter() - t0
    ok = worst_tv <= 1e-9 and worst_phi <= 1e-9 and dt < 60
    return ok, f"50 instances, max tv err={worst_tv:.1e} max phi err={worst_phi:.1e} time={dt:.1f}s"


def check_3():
    t0 = time.perf_counter()
    n, t, runs = 10**5, 50, 10**4
    out_t, _, _ = coupling_batch(lazy_cycle(n), 0, t, runs, master_seed=7)
    frac = float(np.mean((out_t >= 0) & (out_t <= t)))
    bound = 2 * t * t / n
    limit = bound + 3 * math.sqrt(bound * (1 - bound) / runs)
    dt = time.perf_counter() - t0
    ok = frac <= limit and dt < 30
    return ok, f"P(T<=50)={frac:.4f} <= {limit:.4f} time={dt:.1f}s"


def check_4():
    t0 = time.perf_counter()
    ident = {n: PermutedChain(lazy_cycle(n), Permutation.identity(n)) for n in (32, 64)}
    tm = {n: mixing_time(c, 0.25, t_cap=100_000).t_mix[0] for n, c in ident.items()}
    oracle = {n: dense_tmix(lazy_cycle(n).to_dense(), 0.25) for n in (32, 64)}
    ratio = tm[64] / tm[32]
    dt = time.perf_counter() - t0
    ok = tm == oracle and 3.2 <= ratio <= 4.8 and dt < 60
    return ok, f"t_mix(32)={tm[32]} t_mix(64)={tm[64]} ratio={ratio:.3f} oracle agrees={tm == oracle} time={dt:.1f}s"


def check_5():
    parts, ok = [], True
    mads = []
    for n in ENSEMBLE_SIZES:
        s = lazy_ensemble(n)
        ratios = s.ratios
        ok &= all(r is not None and 0.7 <= r <= 1.4 for r in ratios)
        mads.append(s.mad_from_one())
        parts.append(f"n={n}: [{min(ratios):.3f},{max(ratios):.3f}] mad={mads[-1]:.3f}")
    ok &= all(b <= a for a, b in zip(mads, mads[1:]))
    return ok, "; ".join(parts)


def check_6():
    windows = [e.window_ratio for e in lazy_ensemble(4096).entries]
    p = lazy_cycle(64)
    rep = mixing_time(PermutedChain(p, Permutation.identity(64)), [0.25, 0.75], t_cap=100_000)
    q = p.to_dense()
    oracle = [dense_tmix(q, 0.25), dense_tmix(q, 0.75)]
    contrast = rep.window_ratio
    ok = all(w is not None and w <= 1.8 for w in windows) and rep.t_mix == oracle and contrast > 2.5
    return ok, f"n=4096 windows max={max(windows):.3f}; lazy cycle n=64 window={contrast:.2f} ({oracle[0]}/{oracle[1]})"


def check_7():
    t0 = time.perf_counter()
    mismatches = below = 0
    for i in range(20):
        rng = np.random.default_rng(3000 + i)
        n = int(rng.integers(4, 15))
        p = random_bistochastic(n, int(rng.integers(1, 4)), 3000 + i)
        perm = random_perm(n, 4000 + i)
        exact = alpha_exact(p, perm)
        if exact.ratio != brute_alpha(p, perm):
            mismatches += 1
        if alpha_search(p, perm, 8, i).alpha < exact.alpha:
            below += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and below == 0 and dt < 60
    return ok, f"20 instances, exact/brute mismatches={mismatches}, search below exact={below}, time={dt:.1f}s"


def check_8():
    phi_viol = bound_viol = with_alpha = 0
    for i in range(20):
        rng = np.random.default_rng(5000 + i)
        n = int(rng.integers(5, 17))
        p = random_bistochastic(n, int(rng.integers(1, 4)), 5000 + i, laziness=float(rng.uniform(0.1, 0.6)))
        perm = random_perm(n, 6000 + i)
        st = stats(p)
        alpha = alpha_exact(p, perm).alpha
        phi, _ = phi_star_exact(PermutedChain(p, perm))
        if phi < st.gamma**2 * st.delta**2 * alpha / 2 - 1e-12:
            phi_viol += 1
        if alpha > 0:
            with_alpha += 1
            headline = 17 * math.log(n) / (alpha**2 * st.delta**4)
            t = mixing_time(PermutedChain(p, perm), 0.25, t_cap=int(math.ceil(headline)) + 1).t_mix[0]
            if t is None or t > headline:
                bound_viol += 1
    ok = phi_viol == 0 and bound_viol == 0
    return ok, f"20 lazy instances ({with_alpha} with alpha>0): phi violations={phi_viol}, bound violations={bound_viol}"


def check_9():
    rep = evolving_set_bound(100, 1, 1, 1, 0.25)
    e1 = abs(rep.bound_integral - 16 * (math.log(25) + 2 * math.log(4)))
    e2 = abs(rep.bound_headline - 17 * math.log(100))
    return e1 <= 1e-9 and e2 <= 1e-9, f"bound_integral={rep.bound_integral:.6f} bound_headline={rep.bound_headline:.6f}"


def check_10():
    outs = []
    for w in (1, 8):
        cmd = [sys.executable, "-m", "permchain.cli", "cutoff", "--n", "1024", "--seeds", "5", "--seed", "2024", "--workers", str(w)]
        outs.append(subprocess.run(cmd, capture_output=True, check=True).stdout)
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    return ok, f"--workers 1 vs 8: {len(outs[0])} bytes, identical={outs[0] == outs[1]}"


def check_11():
    n = 4096
    _, m = no_cutoff_graph(n, seed=1)
    k = no_cutoff_k(n)
    p = power(m, k)
    s = ensemble_experiment(p, NUM_SEEDS, ENSEMBLE_SEED, [0.25, 0.75], StartMode.sampled(SAMPLED_STARTS, 0))
    windows = [e.window_ratio for e in s.entries]
    lazy = lazy_ensemble(n).window_median
    ours = s.window_median
    factor = ours / lazy if ours is not None else float("nan")
    ok = ours is not None and factor >= 1.5
    return ok, f"k={k} windows={[round(w, 3) if w else w for w in windows]} median={ours} vs lazy-cycle {lazy:.4f}: factor={factor:.3f}"


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 12)}


@pytest.mark.parametrize("num", sorted(CHECKS))
def test_criterion(num, capsys):
    ok, detail = CHECKS[num]()
    with capsys.disabled():
        print("\n" + _line(num, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, fn in CHECKS.items():
        ok, detail = fn()
        failed += not ok
        print(_line(num, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
