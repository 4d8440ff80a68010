"""Multi-indices and truncated multi-index sets.

A multi-index is a finitely supported sequence of nonnegative integers
``alpha = (alpha_1, alpha_2, ...)`` with slots numbered from 1.  Single
objects use :class:`MultiIndex`; bulk work (propagators with millions of
indices) goes through :class:`IndexSet`, which stores every index by its
*characteristic set*: the nondecreasing list of slots in which slot ``k``
appears ``alpha_k`` times.

Ordering is graded: first by order ``|alpha|``, then lexicographically on
``(alpha_1, ..., alpha_K)`` from the largest leading entry down, so that
``(N=1, K=2)`` enumerates ``(0), e_1, e_2``.  Within one grade this is the
same as ascending lexicographic order of characteristic sets, which is what
``itertools.combinations_with_replacement`` produces.

Several driving fields are handled by flattening the double index
``(k, l)`` into the single slot ``(l - 1) * K_max + k`` (see
:func:`flat_slot`).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .errors import UnderflowAt

__all__ = [
    "MultiIndex",
    "TruncationSpec",
    "IndexSet",
    "factorial",
    "add",
    "sub_unit",
    "enumerate_indices",
    "characteristic_set",
    "graded_rank",
    "graded_unrank",
    "flat_slot",
    "unflat_slot",
]


class MultiIndex:
    """Immutable sparse multi-index.

    Parameters
    ----------
    entries : mapping slot -> multiplicity, or iterable of dense entries
        ``MultiIndex({1: 2, 3: 1})`` and ``MultiIndex((2, 0, 1))`` are equal.
        Zero multiplicities are dropped.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[int] = ()):
        if isinstance(entries, Mapping):
            pairs = entries.items()
        else:
            pairs = ((k + 1, int(a)) for k, a in enumerate(entries))
        items = []
        for k, a in pairs:
            k, a = int(k), int(a)
            if k < 1:
                raise ValueError(f"slots start at 1, got {k}")
            if a < 0:
                raise ValueError(f"negative multiplicity {a} at slot {k}")
            if a:
                items.append((k, a))
        items.sort()
        self._items = tuple(items)
        self._hash = hash(self._items)

    @classmethod
    def unit(cls, k: int) -> "MultiIndex":
        return cls({k: 1})

    @classmethod
    def from_characteristic_set(cls, slots: Iterable[int]) -> "MultiIndex":
        counts: dict[int, int] = {}
        for k in slots:
            counts[int(k)] = counts.get(int(k), 0) + 1
        return cls(counts)

    @property
    def items(self) -> tuple[tuple[int, int], ...]:
        return self._items

    @property
    def order(self) -> int:
        return sum(a for _, a in self._items)

    def __len__(self) -> int:
        return self.order

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self._items)

    @property
    def max_slot(self) -> int:
        return self._items[-1][0] if self._items else 0

    def __getitem__(self, k: int) -> int:
        for slot, a in self._items:
            if slot == k:
                return a
        return 0

    def to_dense(self, K: int | None = None) -> tuple[int, ...]:
        K = self.max_slot if K is None else K
        if self.max_slot > K:
            raise ValueError(f"index {self} does not fit in {K} slots")
        out = [0] * K
        for k, a in self._items:
            out[k - 1] = a
        return tuple(out)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return add(self, other)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndex) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "MultiIndex") -> bool:
        return (self.order, characteristic_set(self)) < (
            other.order,
            characteristic_set(other),
        )

    def __repr__(self) -> str:
        if not self._items:
            return "MultiIndex(0)"
        body = " + ".join(f"{a}e{k}" if a > 1 else f"e{k}" for k, a in self._items)
        return f"MultiIndex({body})"


@dataclass(frozen=True)
class TruncationSpec:
    """Finite section of the multi-index set.

    ``max_order`` bounds ``|alpha|``, ``max_dim`` bounds the slots.  The
    optional ``max_support`` caps the number of distinct nonzero slots (a
    sparse truncation); with it unset the enumeration has
    ``binomial(N + K, K)`` members.
    """

    max_order: int
    max_dim: int
    max_support: int | None = None

    def __post_init__(self):
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        if self.max_dim < 1:
            raise ValueError("max_dim must be >= 1")
        if self.max_support is not None and self.max_support < 1:
            raise ValueError("max_support must be >= 1")

    @property
    def is_full(self) -> bool:
        s = self.max_support
        return s is None or s >= min(self.max_order, self.max_dim)

    def size(self) -> int:
        if self.is_full:
            return math.comb(self.max_order + self.max_dim, self.max_dim)
        total = 1
        for n in range(1, self.max_order + 1):
            for s in range(1, min(n, self.max_support, self.max_dim) + 1):
                total += math.comb(self.max_dim, s) * math.comb(n - 1, s - 1)
        return total

    def contains(self, alpha: MultiIndex) -> bool:
        if alpha.order > self.max_order or alpha.max_slot > self.max_dim:
            return False
        return self.max_support is None or len(alpha.support) <= self.max_support

    def widen(self, other: "TruncationSpec") -> "TruncationSpec":
        if self.max_support is None or other.max_support is None:
            s = None
        else:
            s = max(self.max_support, other.max_support)
        return TruncationSpec(
            max(self.max_order, other.max_order), max(self.max_dim, other.max_dim), s
        )

    def to_dict(self) -> dict:
        return {
            "max_order": self.max_order,
            "max_dim": self.max_dim,
            "max_support": self.max_support,
        }


def factorial(alpha: MultiIndex) -> float:
    """``prod_k alpha_k!`` as a float (``inf`` once it overflows)."""
    if any(a > 170 for _, a in alpha.items):
        return math.inf
    out = 1.0
    for _, a in alpha.items:
        out *= math.factorial(a)
    return out


def add(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex:
    counts = dict(alpha.items)
    for k, b in beta.items:
        counts[k] = counts.get(k, 0) + b
    return MultiIndex(counts)


def sub_unit(alpha: MultiIndex, k: int) -> MultiIndex:
    """``alpha - e_k``; raises :class:`UnderflowAt` when ``alpha_k == 0``."""
    counts = dict(alpha.items)
    a = counts.get(k, 0)
    if a == 0:
        raise UnderflowAt(k)
    counts[k] = a - 1
    return MultiIndex(counts)


def characteristic_set(alpha: MultiIndex) -> tuple[int, ...]:
    out: list[int] = []
    for k, a in alpha.items:
        out.extend([k] * a)
    return tuple(out)


def flat_slot(k: int, field: int, k_max: int) -> int:
    """Slot of the double index ``(k, field)``, both 1-based."""
    if not 1 <= k <= k_max:
        raise ValueError(f"basis slot {k} outside 1..{k_max}")
    return (field - 1) * k_max + k


def unflat_slot(slot: int, k_max: int) -> tuple[int, int]:
    return (slot - 1) % k_max + 1, (slot - 1) // k_max + 1


def graded_rank(alpha: MultiIndex, K: int) -> int:
    """Position of ``alpha`` in the full graded enumeration over ``K`` slots.

    The rank does not depend on the order bound ``N``: lower grades come
    first and there are ``binomial(K + n - 1, n - 1)`` indices below grade
    ``n``.
    """
    seq = characteristic_set(alpha)
    n = len(seq)
    if n and seq[-1] > K:
        raise ValueError(f"{alpha} uses slots beyond {K}")
    if n == 0:
        return 0
    r = math.comb(K + n - 1, n - 1)
    prev = 1
    for p, kp in enumerate(seq):
        m = n - p - 1
        for v in range(prev, kp):
            r += math.comb(K - v + m, m)
        prev = kp
    return r


def graded_unrank(rank: int, K: int) -> MultiIndex:
    if rank < 0:
        raise ValueError("rank must be nonnegative")
    n = 0
    while math.comb(K + n, n) <= rank:
        n += 1
    if n == 0:
        return MultiIndex()
    r = rank - math.comb(K + n - 1, n - 1)
    seq = []
    prev = 1
    for p in range(n):
        m = n - p - 1
        v = prev
        while True:
            c = math.comb(K - v + m, m)
            if r < c:
                break
            r -= c
            v += 1
        seq.append(v)
        prev = v
    return MultiIndex.from_characteristic_set(seq)


def _code_base_ok(K: int, N: int) -> None:
    if N and N * math.log2(K + 1) >= 62:
        raise ValueError(
            f"(K={K}, N={N}) too large for 64-bit index codes; reduce the truncation"
        )


class IndexSet:
    """Ordered, downward-closed-or-not collection of multi-indices.

    Indices are stored as rows of ``seq`` (characteristic sets padded with
    zeros) together with their grades and integer codes; the code of a
    grade-``n`` index is its characteristic set read as a base ``K + 1``
    number, so codes are increasing within each grade.
    """

    def __init__(self, K: int, seq: np.ndarray, grade: np.ndarray, *, _sorted=False):
        self.K = int(K)
        seq = np.asarray(seq, dtype=np.int32)
        grade = np.asarray(grade, dtype=np.int32)
        self.N = int(grade.max()) if grade.size else 0
        _code_base_ok(self.K, max(self.N, seq.shape[1] if seq.ndim == 2 else 0))
        if seq.ndim != 2:
            seq = seq.reshape(len(grade), -1)
        if seq.shape[1] < self.N:
            seq = np.pad(seq, ((0, 0), (0, self.N - seq.shape[1])))
        seq = seq[:, : self.N] if self.N else np.zeros((len(grade), 0), np.int32)
        codes = self._encode(seq, grade)
        if not _sorted:
            order = np.lexsort((codes, grade))
            seq, grade, codes = seq[order], grade[order], codes[order]
            if len(codes) > 1:
                dup = (np.diff(grade) == 0) & (np.diff(codes) == 0)
                if dup.any():
                    keep = np.concatenate(([True], ~dup))
                    seq, grade, codes = seq[keep], grade[keep], codes[keep]
        self.seq = np.ascontiguousarray(seq)
        self.grade = grade
        self.codes = codes
        self.grade_ptr = np.searchsorted(grade, np.arange(self.N + 2)).astype(np.int64)

    def _encode(self, seq, grade):
        B = self.K + 1
        codes = np.zeros(len(grade), dtype=np.int64)
        for p in range(seq.shape[1]):
            live = p < grade
            codes = np.where(live, codes * B + seq[:, p], codes)
        return codes

    # construction -----------------------------------------------------
    @classmethod
    def from_truncation(cls, spec: TruncationSpec) -> "IndexSet":
        K, N = spec.max_dim, spec.max_order
        _code_base_ok(K, N)
        blocks = [np.zeros((1, N), np.int32)]
        grades = [np.zeros(1, np.int32)]
        for n in range(1, N + 1):
            if spec.is_full or spec.max_support >= n:
                flat = np.fromiter(
                    itertools.chain.from_iterable(
                        itertools.combinations_with_replacement(range(1, K + 1), n)
                    ),
                    dtype=np.int32,
                )
                block = flat.reshape(-1, n)
            else:
                block = _sparse_grade(K, n, spec.max_support)
            blocks.append(np.pad(block, ((0, 0), (0, N - n))))
            grades.append(np.full(len(block), n, np.int32))
        seq = np.concatenate(blocks)
        grade = np.concatenate(grades)
        sorted_ = spec.is_full
        return cls(K, seq, grade, _sorted=sorted_)

    @classmethod
    def from_multiindices(cls, alphas: Iterable[MultiIndex], K: int | None = None):
        alphas = list(alphas)
        if K is None:
            K = max((a.max_slot for a in alphas), default=1) or 1
        N = max((a.order for a in alphas), default=0)
        seq = np.zeros((len(alphas), N), np.int32)
        grade = np.zeros(len(alphas), np.int32)
        for i, a in enumerate(alphas):
            cs = characteristic_set(a)
            if cs and cs[-1] > K:
                raise ValueError(f"{a} uses slots beyond {K}")
            seq[i, : len(cs)] = cs
            grade[i] = len(cs)
        return cls(K, seq, grade)

    # access -----------------------------------------------------------
    def __len__(self) -> int:
        return len(self.grade)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> MultiIndex:
        g = self.grade[i]
        return MultiIndex.from_characteristic_set(self.seq[i, :g].tolist())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IndexSet)
            and self.K == other.K
            and np.array_equal(self.grade, other.grade)
            and np.array_equal(self.codes, other.codes)
        )

    def grade_slice(self, n: int) -> slice:
        if n > self.N:
            return slice(len(self), len(self))
        return slice(int(self.grade_ptr[n]), int(self.grade_ptr[n + 1]))

    def lookup_codes(self, codes: np.ndarray, grades: np.ndarray) -> np.ndarray:
        """Row numbers of the given (grade, code) pairs, -1 where absent."""
        codes = np.asarray(codes, np.int64)
        grades = np.asarray(grades)
        out = np.full(codes.shape, -1, dtype=np.int64)
        for n in np.unique(grades):
            if n < 0 or n > self.N:
                continue
            sel = grades == n
            sl = self.grade_slice(int(n))
            block = self.codes[sl]
            pos = np.searchsorted(block, codes[sel])
            pos_c = np.minimum(pos, max(len(block) - 1, 0))
            hit = (pos < len(block)) & (block[pos_c] == codes[sel]) if len(block) else np.zeros(
                pos.shape, bool
            )
            out[sel] = np.where(hit, pos_c + sl.start, -1)
        return out

    def index_of(self, alpha: MultiIndex) -> int:
        cs = characteristic_set(alpha)
        if cs and cs[-1] > self.K:
            return -1
        code = 0
        for k in cs:
            code = code * (self.K + 1) + k
        return int(self.lookup_codes(np.array([code]), np.array([len(cs)]))[0])

    def __contains__(self, alpha: MultiIndex) -> bool:
        return self.index_of(alpha) >= 0

    @cached_property
    def alphas(self) -> np.ndarray:
        """Dense ``(n_indices, K)`` multiplicity matrix."""
        out = np.zeros((len(self), self.K), dtype=np.int16)
        rows = np.arange(len(self))
        for p in range(self.seq.shape[1]):
            live = p < self.grade
            np.add.at(out, (rows[live], self.seq[live, p] - 1), 1)
        return out

    @cached_property
    def log_factorials(self) -> np.ndarray:
        from scipy.special import gammaln

        return gammaln(self.alphas.astype(float) + 1.0).sum(axis=1)

    @cached_property
    def multiplicity_runs(self):
        """Per position: (is last occurrence, multiplicity of that slot)."""
        n_idx, N = self.seq.shape
        last = np.zeros((n_idx, N), bool)
        mult = np.zeros((n_idx, N), np.int32)
        start = np.zeros(n_idx, np.int32)
        for p in range(N):
            live = p < self.grade
            if p > 0:
                new_run = self.seq[:, p] != self.seq[:, p - 1]
                start = np.where(new_run, p, start)
            nxt_diff = (
                (self.seq[:, p + 1] != self.seq[:, p]) | (p + 1 >= self.grade)
                if p + 1 < N
                else np.ones(n_idx, bool)
            )
            last[:, p] = live & nxt_diff
            mult[:, p] = np.where(last[:, p], p - start + 1, 0)
        return last, mult

    def lowering_table(self, source: "IndexSet | None" = None):
        """Parents ``alpha - e_k`` of every index, looked up in ``source``.

        Returns ``(parent, slot, mult)`` arrays of shape ``(n, P)`` where
        ``slot`` is 0-based, ``mult`` is ``alpha_k`` and unused or missing
        entries have ``mult == 0`` and ``parent == 0``.  The table is
        compacted to the left.
        """
        source = self if source is None else source
        n_idx, N = self.seq.shape
        last, mult = self.multiplicity_runs
        Bs = source.K + 1
        parents = np.zeros((n_idx, N), np.int64)
        slots = np.zeros((n_idx, N), np.int32)
        mults = np.zeros((n_idx, N), np.int32)
        for p in range(N):
            sel = last[:, p]
            if sel.any():
                rows = np.nonzero(sel)[0]
                g = self.grade[rows]
                # parent code in the source base
                code = np.zeros(len(rows), np.int64)
                fits = np.ones(len(rows), bool)
                for q in range(N):
                    if q == p:
                        continue
                    live = q < g
                    digit = self.seq[rows, q]
                    fits &= ~live | (digit <= source.K)
                    code = np.where(live, code * Bs + digit, code)
                found = np.where(fits, source.lookup_codes(code, g - 1), -1)
                ok = found >= 0
                parents[rows[ok], p] = found[ok]
                slots[rows[ok], p] = self.seq[rows[ok], p] - 1
                mults[rows[ok], p] = mult[rows[ok], p]
        # compact to the left
        order = np.argsort(mults == 0, axis=1, kind="stable")
        parents = np.take_along_axis(parents, order, 1)
        slots = np.take_along_axis(slots, order, 1)
        mults = np.take_along_axis(mults, order, 1)
        width = int((mults > 0).sum(axis=1).max()) if n_idx and N else 0
        width = max(width, 1)
        return (
            np.ascontiguousarray(parents[:, :width].astype(np.int32)),
            np.ascontiguousarray(slots[:, :width]),
            np.ascontiguousarray(mults[:, :width]),
        )

    def is_downward_closed(self) -> bool:
        par, _, mult = self.lowering_table()
        return bool(np.all((mult > 0).sum(axis=1) == self._distinct_slots()))

    def _distinct_slots(self):
        last, _ = self.multiplicity_runs
        return last.sum(axis=1)

    def ranks(self) -> list[int]:
        return [graded_rank(a, self.K) for a in self]


def _sparse_grade(K: int, n: int, q: int) -> np.ndarray:
    """Characteristic sets of grade ``n`` with at most ``q`` distinct slots."""
    rows = []
    for s in range(1, min(n, q, K) + 1):
        supports = np.array(list(itertools.combinations(range(1, K + 1), s)), np.int32)
        comps = []
        for cuts in itertools.combinations(range(1, n), s - 1):
            edges = (0,) + cuts + (n,)
            comps.append([edges[i + 1] - edges[i] for i in range(s)])
        comps = np.array(comps, np.int32)
        for c in comps:
            block = np.repeat(supports, c, axis=1)
            rows.append(block)
    return np.concatenate(rows) if rows else np.zeros((0, n), np.int32)


def enumerate_indices(spec: TruncationSpec) -> list[MultiIndex]:
    """All indices of the truncation in graded order."""
    return list(IndexSet.from_truncation(spec))
