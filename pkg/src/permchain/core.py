"""Sparse bistochastic matrices, permutations and the permuted chain Q = P Pi.

Matrices are stored row-major (CSR) with strictly positive entries. The
permuted chain is never densified: a step from ``x`` samples ``z ~ P(x, .)``
and moves to ``perm(z)``, so ``Q(x, y) = P(x, perm^{-1}(y))``.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp

STOCHASTIC_TOL = 1e-9
POWER_DROP_TOL = 1e-15
DEFAULT_FILL_CAP = 10**8

PathOrStream = Union[str, os.PathLike, IO[str]]


class ChainError(ValueError):
    """Base class for input and construction errors."""


class ParseError(ChainError):
    pass


class ValidationError(ChainError):
    """An invariant of the input does not hold; ``invariant`` names it."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class FillInCapError(ChainError):
    def __init__(self, projected: int, cap: int):
        super().__init__(f"projected nnz {projected} exceeds fill-in cap {cap}")
        self.projected = projected
        self.cap = cap


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# StochasticMatrix


class StochasticMatrix:
    """Immutable sparse row-stochastic matrix in CSR form.

    Rows hold strictly increasing column indices with probabilities in
    (0, 1]. ``bistochastic`` is set when every column also sums to 1.
    """

    __slots__ = ("n", "indptr", "indices", "data", "bistochastic")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray, data: np.ndarray):
        n = int(n)
        if n < 1:
            raise ValidationError("positive-size", f"n must be >= 1, got {n}")
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        data = np.ascontiguousarray(data, dtype=np.float64)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices) or len(indices) != len(data):
            raise ValidationError("csr-shape", "inconsistent CSR arrays")
        if np.any(np.diff(indptr) < 0):
            raise ValidationError("csr-shape", "indptr must be non-decreasing")
        if len(indices) and (indices.min() < 0 or indices.max() >= n):
            raise ValidationError("index-range", f"column index outside [0, {n})")
        if np.any(~(data > 0.0)) or np.any(data > 1.0):
            raise ValidationError("positive-probability", "stored probabilities must lie in (0, 1]")
        rows = np.repeat(np.arange(n), np.diff(indptr))
        same_row = rows[1:] == rows[:-1]
        if np.any(indices[1:][same_row] <= indices[:-1][same_row]):
            raise ValidationError("sorted-unique-columns", "duplicate or unsorted column index within a row")
        row_sums = np.bincount(rows, weights=data, minlength=n)
        bad = np.flatnonzero(np.abs(row_sums - 1.0) > STOCHASTIC_TOL)
        if len(bad):
            x = int(bad[0])
            raise ValidationError("row-sum", f"row {x} sums to {float(row_sums[x])!r}, off by more than {STOCHASTIC_TOL}")
        col_sums = np.bincount(indices, weights=data, minlength=n)
        self.n = n
        self.indptr = _readonly(indptr)
        self.indices = _readonly(indices)
        self.data = _readonly(data)
        self.bistochastic = bool(np.all(np.abs(col_sums - 1.0) <= STOCHASTIC_TOL))

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_entries(cls, n: int, rows: Iterable[int], cols: Iterable[int], vals: Iterable[float]) -> "StochasticMatrix":
        """Build from unordered (row, col, prob) triples. Duplicates are an error."""
        rows = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.int64)
        cols = np.asarray(list(cols) if not isinstance(cols, np.ndarray) else cols, dtype=np.int64)
        vals = np.asarray(list(vals) if not isinstance(vals, np.ndarray) else vals, dtype=np.float64)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValidationError("csr-shape", "entry arrays differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise ValidationError("index-range", f"entry index outside [0, {n})")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if np.any(dup):
            i = int(np.flatnonzero(dup)[0])
            raise ValidationError("duplicate-entry", f"entry ({rows[i]}, {cols[i]}) appears twice")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(n, indptr, cols, vals)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "StochasticMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("square", "matrix must be square")
        rows, cols = np.nonzero(a)
        return cls.from_entries(a.shape[0], rows, cols, a[rows, cols])

    @classmethod
    def from_scipy(cls, m: sp.spmatrix) -> "StochasticMatrix":
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.shape[0], m.indptr, m.indices, m.data)

    @classmethod
    def identity(cls, n: int) -> "StochasticMatrix":
        return cls(n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def uniform(cls, n: int) -> "StochasticMatrix":
        return cls(n, np.arange(n + 1) * n, np.tile(np.arange(n), n), np.full(n * n, 1.0 / n))

    @classmethod
    def from_permutation(cls, perm: "Permutation") -> "StochasticMatrix":
        """The permutation matrix with a 1 at ``(x, perm(x))``."""
        n = perm.n
        return cls(n, np.arange(n + 1), perm.images.copy(), np.ones(n))

    # -- accessors ----------------------------------------------------------

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row(self, x: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= x < self.n:
            raise IndexError(f"state {x} out of range [0, {self.n})")
        lo, hi = self.indptr[x], self.indptr[x + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        rows = self.row_ids()
        on = rows == self.indices
        d[rows[on]] = self.data[on]
        return d

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data.copy(), self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))

    def to_dense(self, cap: int = DEFAULT_FILL_CAP) -> np.ndarray:
        if self.n * self.n > cap:
            raise FillInCapError(self.n * self.n, cap)
        a = np.zeros((self.n, self.n))
        a[self.row_ids(), self.indices] = self.data
        return a

    def transpose(self) -> "StochasticMatrix":
        if not self.bistochastic:
            raise ValidationError("bistochastic", "transpose of a non-bistochastic matrix is not row-stochastic")
        rows = self.row_ids()
        order = np.lexsort((rows, self.indices))
        new_rows = self.indices[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(new_rows, minlength=self.n), out=indptr[1:])
        return StochasticMatrix(self.n, indptr, rows[order], self.data[order])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StochasticMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"StochasticMatrix(n={self.n}, nnz={self.nnz}, bistochastic={self.bistochastic})"


# ---------------------------------------------------------------------------
# Permutation


class Permutation:
    """Bijection of {0, ..., n-1}; ``images[x]`` is the image of ``x``."""

    __slots__ = ("n", "images")

    def __init__(self, images: Iterable[int]):
        images = np.array(images if isinstance(images, np.ndarray) else list(images), dtype=np.int64)
        if images.ndim != 1 or len(images) < 1:
            raise ValidationError("positive-size", "permutation must have at least one element")
        n = len(images)
        if images.min() < 0 or images.max() >= n or len(np.unique(images)) != n:
            raise ValidationError("bijection", "images are not a bijection of {0, ..., n-1}")
        self.n = n
        self.images = _readonly(images)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    def inverse(self) -> "Permutation":
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.images] = np.arange(self.n)
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """``self o other``: apply ``other`` first."""
        if other.n != self.n:
            raise ValidationError("matching-size", "permutations differ in size")
        return Permutation(self.images[other.images])

    def push(self, mu: np.ndarray) -> np.ndarray:
        """Move the mass at ``x`` to ``perm(x)``."""
        out = np.empty_like(mu)
        out[self.images] = mu
        return out

    def __call__(self, x: int) -> int:
        return int(self.images[x])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.images, other.images)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        if self.n <= 12:
            return f"Permutation({self.images.tolist()})"
        return f"Permutation(n={self.n})"


# ---------------------------------------------------------------------------
# PermutedChain


class PermutedChain:
    """The chain Q = P Pi for a bistochastic ``p`` and a permutation ``perm``."""

    __slots__ = ("p", "perm", "_qcols")

    def __init__(self, p: StochasticMatrix, perm: Permutation):
        if p.n != perm.n:
            raise ValidationError("matching-size", f"matrix has n={p.n}, permutation has n={perm.n}")
        if not p.bistochastic:
            raise ValidationError("bistochastic", "the permuted chain requires a bistochastic matrix")
        self.p = p
        self.perm = perm
        # Column of Q for each stored entry of P, in P's storage order.
        self._qcols = _readonly(perm.images[p.indices])

    @property
    def n(self) -> int:
        return self.p.n

    @property
    def qcols(self) -> np.ndarray:
        return self._qcols

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PermutedChain):
            return NotImplemented
        return self.p == other.p and self.perm == other.perm

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"PermutedChain(n={self.n}, nnz={self.p.nnz})"


def q_row(chain: PermutedChain, x: int) -> tuple[np.ndarray, np.ndarray]:
    """Row ``x`` of Q as (sorted columns, probabilities)."""
    if not 0 <= x < chain.n:
        raise IndexError(f"state {x} out of range [0, {chain.n})")
    lo, hi = chain.p.indptr[x], chain.p.indptr[x + 1]
    cols = chain.qcols[lo:hi]
    order = np.argsort(cols, kind="stable")
    return cols[order], chain.p.data[lo:hi][order]


def reverse(chain: PermutedChain) -> PermutedChain:
    """The reverse chain with matrix P transposed and permutation inverted."""
    return PermutedChain(chain.p.transpose(), chain.perm.inverse())


def densify_q(chain: PermutedChain, cap: int = DEFAULT_FILL_CAP) -> np.ndarray:
    """Dense Q. Only for small chains and oracles."""
    if chain.n * chain.n > cap:
        raise FillInCapError(chain.n * chain.n, cap)
    q = np.zeros((chain.n, chain.n))
    np.add.at(q, (chain.p.row_ids(), chain.qcols), chain.p.data)
    return q


# ---------------------------------------------------------------------------
# power


def power(p: StochasticMatrix, k: int, cap: int = DEFAULT_FILL_CAP) -> StochasticMatrix:
    """Exact sparse ``p**k`` with entries below 1e-15 dropped and rows renormalized."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    k = int(k)
    m = p.to_scipy()
    acc = m.copy()
    row_len = np.diff(m.indptr)
    for _ in range(k - 1):
        # Upper bound on nnz(acc @ m): per row, total out-degree of its support, capped at n.
        per_row = np.zeros(p.n, dtype=np.int64)
        if acc.nnz:
            contrib = row_len[acc.indices]
            nonempty = np.diff(acc.indptr) > 0
            per_row[nonempty] = np.add.reduceat(contrib, acc.indptr[:-1][nonempty])
        projected = int(np.minimum(per_row, p.n).sum())
        if projected > cap:
            raise FillInCapError(projected, cap)
        acc = acc @ m
        acc.data[acc.data < POWER_DROP_TOL] = 0.0
        acc.eliminate_zeros()
        sums = np.asarray(acc.sum(axis=1)).ravel()
        acc = sp.csr_matrix(sp.diags(1.0 / sums) @ acc)
        acc.sort_indices()
    return StochasticMatrix.from_scipy(acc)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class ChainStats:
    n: int
    delta: float
    delta_max: float
    gamma: float
    entropy_rate: float
    entropy_variance: float
    bistochastic: bool

    @property
    def entropic_time(self) -> Optional[float]:
        """``ln n / entropy_rate``; None when the entropy rate is zero."""
        if self.entropy_rate <= 0.0:
            return None
        return math.log(self.n) / self.entropy_rate

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "delta": self.delta,
            "delta_max": self.delta_max,
            "gamma": self.gamma,
            "entropy_rate": self.entropy_rate,
            "entropy_variance": self.entropy_variance,
            "entropic_time": self.entropic_time,
            "bistochastic": self.bistochastic,
        }


def stats(p: StochasticMatrix) -> ChainStats:
    d = p.data
    cost = -np.log(d)
    h = float(np.sum(d * cost) / p.n)
    var = float(np.sum(d * (cost - h) ** 2) / p.n)
    return ChainStats(
        n=p.n,
        delta=float(d.min()),
        delta_max=float(d.max()),
        gamma=float(p.diagonal().min()),
        entropy_rate=max(h, 0.0),
        entropy_variance=var,
        bistochastic=p.bistochastic,
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Finite-n proxies for the hypotheses of the random-permutation cutoff theorem.

    Small ``sparsity_ratio``, ``loglog_ratio`` and ``variance_ratio`` make the
    corresponding asymptotic condition plausible. ``branching_ok`` is exact.
    None marks a proxy that is undefined at this n.
    """

    sparsity_ratio: Optional[float]
    branching_ok: bool
    loglog_ratio: Optional[float]
    variance_ratio: Optional[float]

    def to_dict(self) -> dict:
        return {
            "sparsity_ratio": self.sparsity_ratio,
            "branching_ok": self.branching_ok,
            "loglog_ratio": self.loglog_ratio,
            "variance_ratio": self.variance_ratio,
        }


def check_assumptions(st: ChainStats) -> AssumptionReport:
    logn = math.log(st.n) if st.n > 1 else 0.0
    sparsity = math.log(1.0 / st.delta) / logn if logn > 0 else None
    loglog = st.entropy_rate * math.log(logn) / logn if logn > 1.0 else None
    variance = st.entropy_variance / (st.entropy_rate * logn) if st.entropy_rate > 0 and logn > 0 else None
    return AssumptionReport(
        sparsity_ratio=sparsity,
        branching_ok=st.delta_max < 1.0,
        loglog_ratio=loglog,
        variance_ratio=variance,
    )


# ---------------------------------------------------------------------------
# file formats


def _open_text(src: PathOrStream, mode: str):
    if isinstance(src, (str, os.PathLike)):
        return open(src, mode, encoding="utf-8"), True
    return src, False


def _data_lines(stream: IO[str]):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if line:
            yield lineno, line


def load_matrix(source: PathOrStream) -> StochasticMatrix:
    """Parse the ``n nnz`` header followed by ``row col prob`` lines."""
    stream, close = _open_text(source, "r")
    try:
        lines = _data_lines(stream)
        try:
            lineno, header = next(lines)
        except StopIteration:
            raise ParseError("empty matrix file") from None
        parts = header.split()
        try:
            n, nnz = int(parts[0]), int(parts[1])
            if len(parts) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise ParseError(f"line {lineno}: expected header 'n nnz', got {header!r}") from None
        if n < 1 or nnz < 0:
            raise ParseError(f"line {lineno}: invalid header values n={n}, nnz={nnz}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        count = 0
        for lineno, line in lines:
            if count >= nnz:
                raise ParseError(f"line {lineno}: more than {nnz} entries")
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError
                r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"line {lineno}: expected 'row col prob', got {line!r}") from None
            if not (0 <= r < n and 0 <= c < n):
                raise ParseError(f"line {lineno}: index out of range for n={n}")
            rows[count], cols[count], vals[count] = r, c, v
            count += 1
        if count != nnz:
            raise ParseError(f"expected {nnz} entries, found {count}")
    finally:
        if close:
            stream.close()
    return StochasticMatrix.from_entries(n, rows, cols, vals)


def save_matrix(p: StochasticMatrix, dest: PathOrStream) -> None:
    stream, close = _open_text(dest, "w")
    try:
        stream.write(f"{p.n} {p.nnz}\n")
        rows = p.row_ids()
        stream.writelines(f"{r} {c} {v:.17g}\n" for r, c, v in zip(rows.tolist(), p.indices.tolist(), p.data.tolist()))
    finally:
        if close:
            stream.close()


def load_permutation(source: PathOrStream) -> Permutation:
    stream, close = _open_text(source, "r")
    try:
        lines = list(_data_lines(stream))
    finally:
        if close:
            stream.close()
    if len(lines) != 2:
        raise ParseError(f"permutation file must have 2 non-empty lines, found {len(lines)}")
    try:
        n = int(lines[0][1])
        images = [int(tok) for tok in lines[1][1].split()]
    except ValueError:
        raise ParseError("permutation file holds non-integer tokens") from None
    if len(images) != n:
        raise ParseError(f"header says n={n} but {len(images)} images given")
    return Permutation(images)


def save_permutation(perm: Permutation, dest: PathOrStream) -> None:
    stream, close = _open_text(dest, "w")
    try:
        stream.write(f"{perm.n}\n")
        stream.write(" ".join(map(str, perm.images.tolist())) + "\n")
    finally:
        if close:
            stream.close()


def matrix_to_text(p: StochasticMatrix) -> str:
    buf = io.StringIO()
    save_matrix(p, buf)
    return buf.getvalue()
