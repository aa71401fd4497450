"""Mixing certificates for a fixed permutation via expansion and evolving sets.

The expansion coefficient of (P, perm) is

    alpha = min over 1 <= |A| <= n/2 of |E(perm(E(A)))| / |A| - 1,

where E(A) is the set of states reachable from A in one step of P. With
laziness gamma = min_x P(x, x) > 0 and delta the smallest positive entry,
the evolving-set conductance of Q^2 satisfies phi_star >= gamma^2 delta^2 alpha / 2,
which yields the bounds in :func:`evolving_set_bound`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .core import Permutation, PermutedChain, StochasticMatrix, densify_q, stats
from .mixing import StartMode, mixing_time
from .rng import task_rng

EXACT_N_CAP = 20


class CertificateRefused(ValueError):
    """A hypothesis of the mixing bound fails; ``hypothesis`` names it."""

    def __init__(self, hypothesis: str, message: str):
        super().__init__(f"{hypothesis}: {message}")
        self.hypothesis = hypothesis


def out_set(p: StochasticMatrix, a: Iterable[int]) -> set[int]:
    """States reachable from ``a`` in one step of ``p``."""
    a = np.fromiter(a, dtype=np.int64)
    if len(a) == 0:
        return set()
    mask = np.zeros(p.n, dtype=bool)
    for x in a.tolist():
        mask[p.row(x)[0]] = True
    return set(np.flatnonzero(mask).tolist())


def _mask_to_set(mask: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(n) if (mask >> i) & 1)


def _set_to_mask(s: Iterable[int]) -> int:
    m = 0
    for i in s:
        m |= 1 << int(i)
    return m


def expansion_size(p: StochasticMatrix, perm: Permutation, a: Iterable[int]) -> int:
    """|E(perm(E(A)))|."""
    first = np.zeros(p.n, dtype=bool)
    for x in a:
        first[p.row(int(x))[0]] = True
    pushed = perm.images[np.flatnonzero(first)]
    second = np.zeros(p.n, dtype=bool)
    for z in pushed.tolist():
        second[p.row(z)[0]] = True
    return int(second.sum())


@dataclass(frozen=True)
class ExpansionCertificate:
    alpha: float
    mode: str
    witness: tuple[int, ...]
    size: int
    samples: Optional[int] = None
    seed: Optional[int] = None

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.size, len(self.witness))

    def to_dict(self) -> dict:
        d = {
            "alpha": self.alpha,
            "mode": self.mode,
            "witness": list(self.witness),
            "expanded_size": self.size,
            "witness_size": len(self.witness),
        }
        if self.mode == "sampled":
            d["samples"] = self.samples
            d["seed"] = self.seed
        return d


def _alpha_value(size: int, k: int) -> float:
    return size / k - 1.0


def alpha_exact(p: StochasticMatrix, perm: Permutation, n_cap: int = EXACT_N_CAP) -> ExpansionCertificate:
    """Minimum over all 2^n subsets; ties go to the smallest bitmask."""
    n = p.n
    if n > n_cap:
        raise ValueError(f"exact enumeration limited to n <= {n_cap}, got n={n}")
    if n < 2:
        raise ValueError("expansion needs n >= 2")
    if perm.n != n:
        raise ValueError("matrix and permutation differ in size")
    size, k, mask = kernels.alpha_gray(p.indptr, p.indices, perm.images, n)
    return ExpansionCertificate(alpha=_alpha_value(int(size), int(k)), mode="exact", witness=_mask_to_set(int(mask), n), size=int(size))


def alpha_search(p: StochasticMatrix, perm: Permutation, samples: int, seed: int) -> ExpansionCertificate:
    """Random subsets refined by best-improvement local search.

    The returned alpha is attained by the witness, so it is an upper bound
    on the true coefficient.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = p.n
    if n < 2:
        raise ValueError("expansion needs n >= 2")
    half = n // 2
    rng = task_rng(seed)

    def key(s: frozenset) -> tuple[Fraction, int]:
        return Fraction(expansion_size(p, perm, s), len(s)), _set_to_mask(s)

    best: Optional[tuple[Fraction, int, frozenset]] = None
    for _ in range(samples):
        k = int(rng.integers(1, half + 1))
        cur = frozenset(rng.choice(n, size=k, replace=False).tolist())
        cur_key = key(cur)
        while True:
            moves = []
            inside, outside = sorted(cur), [y for y in range(n) if y not in cur]
            for x in inside:
                for y in outside:
                    moves.append((cur - {x}) | {y})
                if len(cur) > 1:
                    moves.append(cur - {x})
            if len(cur) < half:
                moves.extend(cur | {y} for y in outside)
            cand = min(((key(m), m) for m in moves), default=None, key=lambda km: km[0])
            if cand is None or cand[0][0] >= cur_key[0]:
                break
            cur_key, cur = cand
        if best is None or cur_key < best[:2]:
            best = (cur_key[0], cur_key[1], cur)
    assert best is not None
    witness = tuple(sorted(best[2]))
    size = expansion_size(p, perm, witness)
    return ExpansionCertificate(
        alpha=_alpha_value(size, len(witness)), mode="sampled", witness=witness, size=size, samples=samples, seed=seed
    )


# ---------------------------------------------------------------------------
# evolving sets


def phi_of_set(chain: PermutedChain, s: Iterable[int]) -> float:
    """(1 / 2|S|) sum_y min(sum_{x in S} Q^2(x, y), sum_{x not in S} Q^2(x, y))."""
    n = chain.n
    members = np.unique(np.fromiter(s, dtype=np.int64))
    if len(members) == 0:
        raise ValueError("S must be nonempty")
    if len(members) > n // 2:
        raise ValueError(f"|S| = {len(members)} exceeds n/2")
    if members[0] < 0 or members[-1] >= n:
        raise IndexError("state out of range")
    block = np.zeros((2, n))
    block[0, members] = 1.0
    block[1] = 1.0 - block[0]
    tmp = np.empty_like(block)
    for _ in range(2):
        kernels.propagate_block(chain.p.indptr, chain.qcols, chain.p.data, block, tmp)
        block, tmp = tmp, block
    return float(np.minimum(block[0], block[1]).sum() / (2 * len(members)))


def phi_star_exact(chain: PermutedChain, n_cap: int = EXACT_N_CAP) -> tuple[float, tuple[int, ...]]:
    """Minimum of phi_S over 1 <= |S| <= n/2, and a minimizing set."""
    n = chain.n
    if n > n_cap:
        raise ValueError(f"exact enumeration limited to n <= {n_cap}, got n={n}")
    if n < 2:
        raise ValueError("phi_star needs n >= 2")
    q = densify_q(chain)
    phi, mask = kernels.phi_star_dense(np.ascontiguousarray(q @ q), n)
    return float(phi), _mask_to_set(int(mask), n)


@dataclass(frozen=True)
class EvolvingSetReport:
    n: int
    alpha: float
    delta: float
    gamma: float
    eps: float
    phi_lower: float
    bound_integral: float
    bound_headline: float
    phi_star: Optional[float] = None
    bound_from_phi_star: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "delta": self.delta,
            "gamma": self.gamma,
            "eps": self.eps,
            "phi_star": self.phi_star,
            "phi_lower": self.phi_lower,
            "bound_integral": self.bound_integral,
            "bound_headline": self.bound_headline,
            "bound_from_phi_star": self.bound_from_phi_star,
        }


def evolving_set_bound(
    n: int, alpha: float, delta: float, gamma: float, eps: float, phi_star: Optional[float] = None
) -> EvolvingSetReport:
    """Mixing-time bounds from the evolving-set integral.

    ``bound_integral`` is (16 / (gamma^4 delta^4 alpha^2)) (ln(n/4) + 2 ln(1/eps));
    ``bound_headline`` is the laziness-free 17 ln n / (alpha^2 delta^4).
    With an exact ``phi_star`` the integral is also evaluated directly.
    """
    if n < 5:
        raise ValueError("n must be >= 5")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if not (0 < delta <= 1 and 0 < gamma <= 1):
        raise ValueError("delta and gamma must lie in (0, 1]")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    log_term = math.log(n / 4.0) + 2.0 * math.log(1.0 / eps)
    from_phi = None
    if phi_star is not None:
        if not 0 < phi_star <= 1:
            raise ValueError("phi_star must lie in (0, 1]")
        from_phi = 4.0 / phi_star**2 * log_term
    return EvolvingSetReport(
        n=n,
        alpha=alpha,
        delta=delta,
        gamma=gamma,
        eps=eps,
        phi_lower=gamma**2 * delta**2 * alpha / 2.0,
        bound_integral=16.0 / (gamma**4 * delta**4 * alpha**2) * log_term,
        bound_headline=17.0 * math.log(n) / (alpha**2 * delta**4),
        phi_star=phi_star,
        bound_from_phi_star=from_phi,
    )


@dataclass
class Certificate:
    stats: dict
    expansion: ExpansionCertificate
    evolving: EvolvingSetReport
    measured: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.expansion.mode == "exact"

    def to_dict(self) -> dict:
        return {
            "stats": self.stats,
            "expansion": self.expansion.to_dict(),
            "evolving_set": self.evolving.to_dict(),
            "measured": self.measured,
        }


MEASURE_T_CAP = 10**6


def certify(
    p: StochasticMatrix,
    perm: Permutation,
    eps: float = 0.25,
    samples: int = 64,
    seed: int = 0,
    measure: bool = True,
) -> Certificate:
    """Expansion, evolving-set bounds and, for n <= 20, a measured cross-check."""
    st = stats(p)
    if st.gamma <= 0:
        raise CertificateRefused("laziness", "some diagonal entry of P is 0 (gamma = 0)")
    chain = PermutedChain(p, perm)
    exact = p.n <= EXACT_N_CAP
    cert = alpha_exact(p, perm) if exact else alpha_search(p, perm, samples, seed)
    if cert.alpha <= 0:
        raise CertificateRefused("expansion", f"alpha = {cert.alpha} (witness {list(cert.witness)}); the bound is undefined")
    phi = phi_star_exact(chain)[0] if exact else None
    ev = evolving_set_bound(p.n, cert.alpha, st.delta, st.gamma, eps, phi_star=phi if phi and phi > 0 else None)
    measured: dict = {}
    if exact and measure:
        targets = [eps] + ([1.0 / p.n] if not math.isclose(1.0 / p.n, eps) else [])
        cap = int(min(MEASURE_T_CAP, math.ceil(max(ev.bound_integral, ev.bound_headline)) + 1))
        rep = mixing_time(chain, targets, StartMode.exhaustive(), cap)
        t_eps, t_n = rep.t_mix[0], rep.t_mix[-1]
        measured = {
            "t_cap": cap,
            "t_mix_eps": t_eps,
            "t_mix_inv_n": t_n,
            "within_bound_integral": t_eps is not None and t_eps <= ev.bound_integral,
            "within_bound_headline": t_eps is not None and t_eps <= ev.bound_headline,
            "headline_covers_inv_n": t_n is not None and t_n <= ev.bound_headline,
        }
    return Certificate(stats=st.to_dict(), expansion=cert, evolving=ev, measured=measured)
