"""Hermite polynomials, the chaos basis and Wick algebra on truncated vectors."""
from __future__ import annotations

import json
import math
from typing import Mapping

import numpy as np

from .errors import IncompatibleGrids, NotFirstOrder, SupportExceeded
from .multiindex import (
    IndexSet,
    MultiIndex,
    TruncationSpec,
    add,
    factorial,
    graded_rank,
    graded_unrank,
)

__all__ = [
    "hermite",
    "hermite_table",
    "xi_alpha",
    "ChaosVector",
    "wick_product",
    "wick_exp",
    "mean",
    "second_moment",
    "inner",
]


def hermite(n: int, t):
    """Probabilists' Hermite polynomial ``He_n(t)`` by the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be >= 0")
    t = np.asarray(t, dtype=float)
    h_prev, h = np.ones_like(t), t.copy()
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for k in range(1, n):
        h_prev, h = h, t * h - k * h_prev
    return h if h.ndim else float(h)


def hermite_table(nmax: int, x, normalized: bool = False) -> np.ndarray:
    """Rows ``He_0(x), ..., He_nmax(x)``, optionally divided by ``sqrt(n!)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for k in range(1, nmax):
        out[k + 1] = x * out[k] - k * out[k - 1]
    if normalized:
        scale = np.sqrt([math.factorial(k) for k in range(nmax + 1)], dtype=float)
        out /= scale.reshape((-1,) + (1,) * x.ndim)
    return out


def xi_alpha(alpha: MultiIndex, xi) -> float | np.ndarray:
    """Basis element ``prod_k He_{alpha_k}(xi_k) / sqrt(alpha_k!)``.

    ``xi`` holds ``xi_1, xi_2, ...`` along its last axis, so a matrix of
    samples gives one value per row.
    """
    xi = np.asarray(xi, dtype=float)
    if alpha.max_slot > xi.shape[-1]:
        raise SupportExceeded(
            f"{alpha} needs {alpha.max_slot} variables, got {xi.shape[-1]}"
        )
    val = np.ones(xi.shape[:-1])
    for k, a in alpha.items:
        val = val * hermite(a, xi[..., k - 1]) / math.sqrt(math.factorial(a))
    return float(val) if val.ndim == 0 else val


class ChaosVector:
    """Truncated chaos expansion ``sum_alpha c_alpha xi_alpha``.

    Coefficients live in a dense array aligned with ``indices``: shape
    ``(n,)`` for a random variable, ``(n, m)`` for a process sampled on a
    time grid of ``m`` nodes.  Only indices carried by ``indices`` are stored,
    so vectors built from propagators hold exactly the reachable set.

    ``dropped_mass`` records the squared norm discarded by truncation when
    the vector came out of a Wick product (zero otherwise).
    """

    def __init__(
        self,
        indices: IndexSet,
        coeffs,
        truncation: TruncationSpec | None = None,
        grid=None,
        dropped_mass=0.0,
    ):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[:1] != (len(indices),):
            raise ValueError(
                f"{coeffs.shape[0] if coeffs.ndim else 0} coefficients for "
                f"{len(indices)} indices"
            )
        if truncation is None:
            truncation = TruncationSpec(indices.N, indices.K)
        elif indices.N > truncation.max_order or indices.K > truncation.max_dim:
            raise ValueError("indices exceed the truncation")
        self.indices = indices
        self.coeffs = coeffs
        self.truncation = truncation
        self.grid = grid
        self.dropped_mass = dropped_mass

    # constructors -----------------------------------------------------
    @classmethod
    def from_dict(cls, mapping: Mapping[MultiIndex, object], truncation=None, grid=None):
        keys = [k for k in mapping]
        if truncation is None:
            N = max((k.order for k in keys), default=0)
            K = max((k.max_slot for k in keys), default=1) or 1
            truncation = TruncationSpec(N, K)
        for k in keys:
            if not truncation.contains(k):
                raise ValueError(f"{k} lies outside {truncation}")
        idx = IndexSet.from_multiindices(keys or [MultiIndex()], truncation.max_dim)
        sample = np.asarray(next(iter(mapping.values()), 0.0), dtype=float)
        coeffs = np.zeros((len(idx),) + sample.shape)
        for k, v in mapping.items():
            coeffs[idx.index_of(k)] = v
        return cls(idx, coeffs, truncation, grid)

    @classmethod
    def constant(cls, value=1.0, truncation=None, grid=None):
        return cls.from_dict({MultiIndex(): value}, truncation, grid)

    @classmethod
    def first_order(cls, c, truncation=None, grid=None, shift=0.0):
        """``shift + sum_k c[k-1] xi_k``; ``c`` may be ``(K,)`` or ``(K, m)``."""
        c = np.asarray(c, dtype=float)
        mapping = {MultiIndex.unit(k + 1): c[k] for k in range(len(c))}
        mapping[MultiIndex()] = np.full(c.shape[1:], float(shift)) if c.ndim > 1 else shift
        if truncation is None:
            truncation = TruncationSpec(1, len(c))
        return cls.from_dict(mapping, truncation, grid)

    # basic access -----------------------------------------------------
    @property
    def is_process(self) -> bool:
        return self.coeffs.ndim > 1

    def __len__(self):
        return len(self.indices)

    def coefficient(self, alpha: MultiIndex):
        i = self.indices.index_of(alpha)
        if i < 0:
            return np.zeros(self.coeffs.shape[1:]) if self.is_process else 0.0
        c = self.coeffs[i]
        return c if self.is_process else float(c)

    def to_dict(self, drop_zeros: bool = True) -> dict:
        out = {}
        for i, a in enumerate(self.indices):
            c = self.coeffs[i]
            if drop_zeros and not np.any(c):
                continue
            out[a] = c.copy() if self.is_process else float(c)
        return out

    def at(self, node: int) -> "ChaosVector":
        """Random variable obtained by freezing a process at one grid node."""
        if not self.is_process:
            raise ValueError("not a process")
        return ChaosVector(self.indices, self.coeffs[:, node], self.truncation)

    def mean(self):
        i = self.indices.index_of(MultiIndex())
        if i < 0:
            return np.zeros(self.coeffs.shape[1:]) if self.is_process else 0.0
        return self.coeffs[i] if self.is_process else float(self.coeffs[i])

    def second_moment(self):
        s = np.sum(self.coeffs**2, axis=0)
        return s if self.is_process else float(s)

    def variance(self):
        return self.second_moment() - self.mean() ** 2

    def grade_energy(self) -> np.ndarray:
        """Sum of squared coefficients per order ``|alpha|``."""
        out = np.zeros((self.indices.N + 1,) + self.coeffs.shape[1:])
        for n in range(self.indices.N + 1):
            out[n] = np.sum(self.coeffs[self.indices.grade_slice(n)] ** 2, axis=0)
        return out

    def evaluate(self, xi, chunk: int = 20000) -> np.ndarray:
        """Pathwise value at sampled ``xi`` (one sample per row)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        K = self.indices.K
        if xi.shape[1] < K and np.any(self.indices.seq > xi.shape[1]):
            raise SupportExceeded(f"need {K} variables, got {xi.shape[1]}")
        last, mult = self.indices.multiplicity_runs
        N = self.indices.N
        out = []
        for start in range(0, len(xi), chunk):
            x = xi[start : start + chunk]
            table = hermite_table(N, x[:, : min(K, x.shape[1])].T, normalized=True)
            vals = np.ones((len(self.indices), len(x)))
            for p in range(self.indices.seq.shape[1]):
                rows = np.nonzero(last[:, p])[0]
                if rows.size:
                    slot = self.indices.seq[rows, p] - 1
                    vals[rows] *= table[mult[rows, p], slot]
            out.append(np.tensordot(self.coeffs, vals, axes=([0], [0])))
        res = np.concatenate(out, axis=-1)
        return res

    def scale(self, factor) -> "ChaosVector":
        return ChaosVector(self.indices, self.coeffs * factor, self.truncation, self.grid)

    def __add__(self, other: "ChaosVector") -> "ChaosVector":
        return _combine(self, other, 1.0)

    def __sub__(self, other: "ChaosVector") -> "ChaosVector":
        return _combine(self, other, -1.0)

    def __mul__(self, factor):
        return self.scale(factor)

    __rmul__ = __mul__

    def __repr__(self):
        kind = "process" if self.is_process else "scalar"
        return f"ChaosVector({len(self)} terms, {kind}, {self.truncation})"

    # serialization ----------------------------------------------------
    def to_json_obj(self) -> dict:
        K = self.truncation.max_dim
        pairs = []
        for i, a in enumerate(self.indices):
            c = self.coeffs[i]
            if not np.any(c):
                continue
            pairs.append((graded_rank(a, K), c.tolist() if self.is_process else float(c)))
        pairs.sort()
        obj = {"truncation": self.truncation.to_dict(), "kind": "process" if self.is_process else "scalar"}
        if self.grid is not None:
            obj["grid"] = self.grid.to_dict()
        obj["coefficients"] = {str(r): c for r, c in pairs}
        return obj

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_json_obj(), **kw)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ChaosVector":
        tr = TruncationSpec(**obj["truncation"])
        grid = None
        if "grid" in obj:
            from .gaussian_field import TimeGrid

            grid = TimeGrid(**obj["grid"])
        mapping = {
            graded_unrank(int(r), tr.max_dim): np.asarray(c, dtype=float)
            for r, c in obj["coefficients"].items()
        }
        if not mapping:
            shape = (grid.n + 1,) if (grid is not None and obj.get("kind") == "process") else ()
            mapping = {MultiIndex(): np.zeros(shape)}
        return cls.from_dict(mapping, tr, grid)

    @classmethod
    def from_json(cls, text: str) -> "ChaosVector":
        return cls.from_json_obj(json.loads(text))


def _check_grids(F: ChaosVector, G: ChaosVector):
    if F.is_process and G.is_process:
        if F.coeffs.shape[1:] != G.coeffs.shape[1:] or (
            F.grid is not None and G.grid is not None and F.grid != G.grid
        ):
            raise IncompatibleGrids("both operands are processes on different grids")
    return F.grid if F.grid is not None else G.grid


def _combine(F: ChaosVector, G: ChaosVector, sign: float) -> ChaosVector:
    grid = _check_grids(F, G)
    tr = F.truncation.widen(G.truncation)
    if F.indices == G.indices:
        return ChaosVector(F.indices, F.coeffs + sign * G.coeffs, tr, grid)
    acc: dict = {}
    for vec, s in ((F, 1.0), (G, sign)):
        for i, a in enumerate(vec.indices):
            acc[a] = acc.get(a, 0.0) + s * vec.coeffs[i]
    return ChaosVector.from_dict(acc, tr, grid)


def mean(F: ChaosVector):
    return F.mean()


def second_moment(F: ChaosVector):
    return F.second_moment()


def inner(F: ChaosVector, G: ChaosVector):
    """``E(FG) = sum_alpha F_alpha G_alpha`` (pointwise for processes)."""
    _check_grids(F, G)
    if F.indices == G.indices:
        return np.sum(F.coeffs * G.coeffs, axis=0)
    if len(F) > len(G):
        F, G = G, F
    rows = np.array([G.indices.index_of(a) for a in F.indices])
    hit = rows >= 0
    return np.sum(F.coeffs[hit] * G.coeffs[rows[hit]], axis=0)


def wick_product(F: ChaosVector, G: ChaosVector) -> ChaosVector:
    """Wick product on basis coefficients.

    Each pair contributes ``c_a d_b sqrt((a+b)!/(a! b!))`` at ``a + b``.  The
    result is truncated to the wider of the two truncations; the squared norm
    of everything beyond it is stored in ``dropped_mass``.
    """
    grid = _check_grids(F, G)
    tr = F.truncation.widen(G.truncation)
    Fd = F.to_dict()
    Gd = G.to_dict()
    fact = {}

    def fac(a):
        if a not in fact:
            fact[a] = factorial(a)
        return fact[a]

    acc: dict = {}
    for a, c in Fd.items():
        for b, d in Gd.items():
            ab = add(a, b)
            w = math.sqrt(fac(ab) / (fac(a) * fac(b)))
            acc[ab] = acc.get(ab, 0.0) + c * d * w
    kept = {k: v for k, v in acc.items() if tr.contains(k)}
    dropped = sum((np.asarray(v) ** 2 for k, v in acc.items() if not tr.contains(k)), 0.0)
    if not kept:
        shape = np.broadcast(F.coeffs[0], G.coeffs[0]).shape
        kept = {MultiIndex(): np.zeros(shape) if shape else 0.0}
    out = ChaosVector.from_dict(kept, tr, grid)
    out.dropped_mass = dropped
    return out


def wick_exp(eta: ChaosVector, truncation: TruncationSpec | None = None) -> ChaosVector:
    """Wick exponential of a first-order vector.

    The coefficient at ``alpha`` is ``exp(c_0) prod_k c_k^alpha_k / sqrt(alpha!)``.
    A constant term ``c_0`` only rescales.  Process-valued ``eta`` gives a
    process-valued result, evaluated node by node.
    """
    if eta.indices.N >= 2 and np.any(eta.coeffs[eta.indices.grade >= 2]):
        raise NotFirstOrder("wick_exp needs a vector supported on |alpha| <= 1")
    tr = eta.truncation if truncation is None else truncation
    K = tr.max_dim
    c = np.zeros((K + 1,) + eta.coeffs.shape[1:])
    c[0] = 1.0
    if eta.indices.N >= 1:
        first = eta.indices.grade_slice(1)
        slots = eta.indices.seq[first, 0]
        keep = slots <= K
        c[slots[keep]] = eta.coeffs[first][keep]
    idx = IndexSet.from_truncation(tr)
    return _product_coefficients(idx, c, np.exp(eta.mean()), tr, eta.grid)


def _product_coefficients(idx: IndexSet, c: np.ndarray, scale, tr, grid) -> ChaosVector:
    """``scale * prod_k c[k]^alpha_k / sqrt(alpha!)`` for every index; ``c[0] == 1``."""
    coeffs = np.broadcast_to(np.asarray(scale, float), c.shape[1:]) * np.ones(
        (len(idx),) + c.shape[1:]
    )
    for p in range(idx.seq.shape[1]):
        coeffs *= c[idx.seq[:, p]]
    norm = np.exp(-0.5 * idx.log_factorials)
    coeffs *= norm.reshape((-1,) + (1,) * (c.ndim - 1))
    return ChaosVector(idx, coeffs, tr, grid)
