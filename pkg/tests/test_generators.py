import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps

from permchain.core import Permutation, PermutedChain, StochasticMatrix, load_matrix, save_matrix, stats
from permchain.generators import (
    doubling_perm,
    inverse_perm,
    is_prime,
    lazy_cycle,
    no_cutoff_graph,
    no_cutoff_k,
    no_cutoff_sizes,
    power_chain,
    random_bistochastic,
    random_perm,
    random_regular_digraph,
)
from permchain.mixing import tv_profile

GOLDEN = Path(__file__).parent / "golden" / "random_perm.json"


class TestLazyCycle:
    def test_n3_full(self):
        assert np.allclose(lazy_cycle(3).to_dense(), 1 / 3)

    def test_row0(self):
        cols, vals = lazy_cycle(5).row(0)
        assert cols.tolist() == [0, 1, 4] and np.allclose(vals, 1 / 3)

    def test_stats(self):
        s = stats(lazy_cycle(11))
        assert s.entropy_rate == pytest.approx(math.log(3))
        assert s.delta == s.delta_max == s.gamma == pytest.approx(1 / 3)

    def test_small_n(self):
        with pytest.raises(ValueError):
            lazy_cycle(2)


class TestArithmeticPerms:
    def test_doubling(self):
        assert doubling_perm(5).images.tolist() == [0, 2, 4, 1, 3]
        assert doubling_perm(9, 1) == Permutation.identity(9)

    def test_doubling_not_bijective(self):
        with pytest.raises(ValueError):
            doubling_perm(6, 2)

    def test_inverse_small(self):
        assert inverse_perm(5).images.tolist() == [0, 1, 3, 2, 4]
        assert inverse_perm(7).images.tolist() == [0, 1, 4, 5, 2, 3, 6]

    @pytest.mark.parametrize("p", [2, 3, 7, 31, 101])
    def test_inverse_oracle_and_involution(self, p):
        perm = inverse_perm(p)
        for x in range(1, p):
            assert (x * perm(x)) % p == 1
        assert perm.compose(perm) == Permutation.identity(p)

    def test_inverse_composite(self):
        with pytest.raises(ValueError):
            inverse_perm(9)

    def test_is_prime(self):
        assert [k for k in range(30) if is_prime(k)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]


class TestRandomPerm:
    def test_n1(self):
        assert random_perm(1, 123).images.tolist() == [0]

    def test_golden(self):
        golden = json.loads(GOLDEN.read_text())
        for seed, images in golden["seeds"].items():
            assert random_perm(golden["n"], int(seed)).images.tolist() == images

    def test_deterministic(self):
        assert random_perm(100, 9) == random_perm(100, 9)
        assert random_perm(100, 9) != random_perm(100, 10)

    def test_uniform_on_s4(self):
        draws = 100_000
        index = {p: i for i, p in enumerate(itertools.permutations(range(4)))}
        counts = np.zeros(24, dtype=int)
        for s in range(draws):
            counts[index[tuple(random_perm(4, s).images.tolist())]] += 1
        sigma = math.sqrt(draws * (1 / 24) * (23 / 24))
        assert np.all(np.abs(counts - draws / 24) <= 5 * sigma)
        assert sps.chisquare(counts).pvalue > 1e-4


class TestRegularDigraph:
    def test_identity_stub(self):
        _, m = random_regular_digraph(5, 3, 0, perms=[Permutation.identity(5)] * 3)
        assert m == StochasticMatrix.identity(5)

    def test_id_swap(self):
        _, m = random_regular_digraph(2, 2, 0, perms=[Permutation.identity(2), Permutation([1, 0])])
        assert np.allclose(m.to_dense(), 0.5)

    @pytest.mark.parametrize("seed", range(5))
    def test_invariants(self, seed):
        g, m = random_regular_digraph(50, 3, seed)
        assert g.is_regular() and m.bistochastic
        assert np.all(m.row_lengths() <= 3)
        assert np.allclose(m.to_dense().sum(axis=0), 1)

    def test_d1_is_permutation(self):
        _, m = random_regular_digraph(20, 1, 4)
        assert np.all(m.row_lengths() == 1) and np.all(m.data == 1.0)

    def test_entropy_of_power(self):
        _, m = random_regular_digraph(60, 3, 1)
        for k in (1, 2, 3):
            assert stats(power_chain(m, k, Permutation.identity(60)).p).entropy_rate <= k * math.log(3) + 1e-9


class TestNoCutoff:
    def test_sizes(self):
        for n in (100, 1000, 4096):
            r, copies = no_cutoff_sizes(n)
            assert r % 2 == 0 and r + 4 * copies == n
            target = n / math.sqrt(math.log(n))
            assert abs(r - target) <= 4

    def test_odd_rejected(self):
        with pytest.raises(ValueError):
            no_cutoff_sizes(1001)

    def test_structure(self):
        g, m = no_cutoff_graph(400, 3)
        r, copies = no_cutoff_sizes(400)
        assert g.is_regular() and m.bistochastic
        assert np.all(m.row_lengths() == 3) and np.allclose(m.data, 1 / 3)
        adj = m.to_dense() > 0
        # no self-loops or repeated edges anywhere; K4 blocks are closed
        assert not np.any(np.diag(adj))
        for c in range(copies):
            block = slice(r + 4 * c, r + 4 * c + 4)
            assert adj[block, block].sum() == 12
        # component count via scipy
        from scipy.sparse.csgraph import connected_components

        ncomp, labels = connected_components(m.to_scipy(), directed=False)
        expander_components = len(np.unique(labels[:r]))
        assert ncomp == expander_components + copies

    def test_edge_list(self):
        g, _ = no_cutoff_graph(100, 0)
        text = g.to_edge_list().splitlines()
        assert text[0] == "# 3-regular n=100" and len(text) == 1 + 300

    def test_k_budget(self):
        for n in (64, 4096):
            k = no_cutoff_k(n)
            assert k > 3 * math.log2(n) >= k - 1


def test_power_chain_k1():
    p = lazy_cycle(7)
    perm = doubling_perm(7)
    assert power_chain(p, 1, perm) == PermutedChain(p, perm)


def test_power_chain_lazy_square():
    vals = np.sort(power_chain(lazy_cycle(9), 2, Permutation.identity(9)).p.row(0)[1])
    assert np.allclose(vals, np.array([1, 1, 2, 2, 3]) / 9)


@pytest.mark.parametrize(
    "make",
    [
        lambda: lazy_cycle(12),
        lambda: random_bistochastic(30, 4, 2, laziness=0.2),
        lambda: random_regular_digraph(30, 2, 3)[1],
        lambda: no_cutoff_graph(100, 1)[1],
    ],
)
def test_round_trip_and_bistochastic(make, tmp_path):
    m = make()
    save_matrix(m, tmp_path / "m.txt")
    assert load_matrix(tmp_path / "m.txt") == m and m.bistochastic


def test_random_bistochastic_laziness():
    p = random_bistochastic(25, 3, 0, laziness=0.3)
    assert stats(p).gamma >= 0.3 - 1e-12


@pytest.mark.parametrize("make_perm", [lambda n: doubling_perm(n, 2), lambda n: inverse_perm(n)])
def test_rotation_relabeling(make_perm):
    n, c = 13, 5
    p = lazy_cycle(n)
    perm = make_perm(n)
    rot = Permutation((np.arange(n) + c) % n)
    conj = rot.compose(perm).compose(rot.inverse())
    a = tv_profile(PermutedChain(p, perm), 0, 25).values
    b = tv_profile(PermutedChain(p, conj), rot(0), 25).values
    assert np.allclose(a, b, atol=1e-12)
