"""The linear Wick equation ``u(t) = u0 + int_0^t a u ds + sum_l int_0^t u dX_l``.

Its chaos coefficients satisfy the lower-triangular propagator system

    u_alpha(t) = sum_k sqrt(alpha_k) int_0^t u_(alpha - e_k)(s) m~_k(s) ds

(drift removed by the factor ``u0 exp(int_0^t a)``), whose solution is the
Wick exponential of ``sum_l X_l(t)``.  :func:`solve_propagator` marches the
system with the compiled sweep; :func:`closed_form` evaluates the Wick
exponential directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import _backend
from .errors import UnsupportedField
from .gaussian_field import FieldModel, OUStable, OUUnstable, TimeGrid, Wiener
from .hermite_chaos import ChaosVector, _product_coefficients
from .multiindex import IndexSet, TruncationSpec

__all__ = [
    "SodeProblem",
    "PropagatorResult",
    "propagate",
    "solve_propagator",
    "closed_form",
    "dolean_comparison",
    "prepare_tables",
]


@dataclass
class SodeProblem:
    """Wick SODE driven by one or more fields on a common grid.

    ``fields`` may be a single :class:`FieldModel` or a list; field ``l``
    (0-based) owns the flattened slots ``l*K + 1 .. (l+1)*K``.  ``drift`` is
    ``None``, a constant, a callable of ``t`` or node values.
    """

    fields: FieldModel | Sequence[FieldModel]
    drift: float | Callable | np.ndarray | None = None
    u0: float = 1.0
    _models: list = field(init=False, repr=False)

    def __post_init__(self):
        models = [self.fields] if isinstance(self.fields, FieldModel) else list(self.fields)
        if not models:
            raise ValueError("need at least one field")
        g, K = models[0].grid, models[0].basis_dim
        for m in models[1:]:
            if m.grid != g or m.basis_dim != K:
                raise ValueError("all fields must share grid and basis size")
        self._models = models

    @property
    def models(self) -> list[FieldModel]:
        return self._models

    @property
    def grid(self) -> TimeGrid:
        return self._models[0].grid

    @property
    def basis_dim(self) -> int:
        return self._models[0].basis_dim

    @property
    def n_slots(self) -> int:
        return self.basis_dim * len(self._models)

    @property
    def mtilde(self) -> np.ndarray:
        """Stacked cell rates, shape ``(L*K, n)``."""
        return np.concatenate([m.mtilde for m in self._models])

    @property
    def Mtilde(self) -> np.ndarray:
        return np.concatenate([m.Mtilde for m in self._models])

    def drift_integral(self) -> np.ndarray:
        """``A(t_i) = int_0^t_i a`` by the cumulative trapezoid."""
        g = self.grid
        a = self.drift
        if a is None:
            return np.zeros(g.n + 1)
        if callable(a):
            vals = np.broadcast_to(np.asarray(a(g.nodes), float), (g.n + 1,))
        else:
            vals = np.broadcast_to(np.asarray(a, float), (g.n + 1,))
        out = np.zeros(g.n + 1)
        np.cumsum(0.5 * g.h * (vals[1:] + vals[:-1]), out=out[1:])
        return out

    def scale(self) -> np.ndarray:
        """``u0 exp(A(t))`` at the nodes."""
        return self.u0 * np.exp(self.drift_integral())

    def default_truncation(self, order: int = 4) -> TruncationSpec:
        return TruncationSpec(order, self.n_slots)


@dataclass
class PropagatorResult:
    """Output of :func:`propagate`.

    ``vector`` holds the coefficients at ``nodes`` (a process when more than
    one node is stored, a random variable for a single node); ``energy`` has
    the per-grade squared norms at every node, shape ``(n + 1, N + 1)``.
    """

    vector: ChaosVector
    nodes: np.ndarray
    energy: np.ndarray
    grid: TimeGrid
    backend: str
    mean: np.ndarray

    @property
    def second_moment(self) -> np.ndarray:
        return self.energy.sum(axis=1)


def prepare_tables(idx: IndexSet):
    """Parent tables in the layout the sweeps expect."""
    par, slot, mult = idx.lowering_table()
    return (
        np.ascontiguousarray(par, np.int32),
        np.ascontiguousarray(slot, np.int32),
        np.ascontiguousarray(np.sqrt(mult), np.float64),
        np.ascontiguousarray(idx.grade_ptr, np.int64),
    )


def _store_nodes(store, n: int) -> np.ndarray:
    if isinstance(store, str):
        if store == "all":
            return np.arange(n + 1, dtype=np.int64)
        if store == "final":
            return np.array([n], np.int64)
        if store == "none":
            return np.zeros(0, np.int64)
        raise ValueError(f"unknown store mode {store!r}")
    nodes = np.unique(np.asarray(store, np.int64))
    if nodes.size and (nodes[0] < 0 or nodes[-1] > n):
        raise ValueError("stored nodes outside the grid")
    return nodes


def propagate(
    p: SodeProblem,
    truncation: TruncationSpec | None = None,
    store="all",
    backend: str | None = None,
    indices: IndexSet | None = None,
) -> PropagatorResult:
    """March the propagator system over the grid.

    ``store`` is ``"all"``, ``"final"``, ``"none"`` or a list of node
    numbers; only those nodes keep the full coefficient vector, so very
    large truncations can run with ``store="final"``.
    """
    tr = truncation or p.default_truncation()
    if tr.max_dim > p.n_slots:
        raise ValueError(f"truncation uses {tr.max_dim} slots, problem has {p.n_slots}")
    idx = indices if indices is not None else IndexSet.from_truncation(tr)
    par, slot, coef, gptr = prepare_tables(idx)
    mt = np.ascontiguousarray(p.mtilde[: tr.max_dim])
    g = p.grid
    nodes = _store_nodes(store, g.n)
    kern = _backend.get(backend)
    snaps, energy = kern.sode_march(par, slot, coef, gptr, mt, g.h, nodes)
    sc = p.scale()
    energy = energy * (sc**2)[:, None]
    coeffs = snaps.T * sc[nodes]
    if len(nodes) == 1:
        vec = ChaosVector(idx, coeffs[:, 0], tr)
    else:
        vec = ChaosVector(idx, coeffs, tr, g if len(nodes) == g.n + 1 else None)
    name = "python" if kern is _backend._pykernels else "cython"
    return PropagatorResult(vec, nodes, energy, g, name, sc)


def solve_propagator(
    p: SodeProblem, truncation: TruncationSpec | None = None, backend: str | None = None
) -> ChaosVector:
    """Chaos coefficients ``u_alpha(t_i)`` at every node, as a process."""
    return propagate(p, truncation, "all", backend).vector


def closed_form(
    p: SodeProblem, truncation: TruncationSpec | None = None, nodes=None
) -> ChaosVector:
    """``u0 exp(A(t)) exp_wick(sum_l X_l(t))`` from the ``M~`` matrices.

    The coefficient at ``alpha`` is ``u0 exp(A) prod M~_k^alpha_k / sqrt(alpha!)``.
    """
    tr = truncation or p.default_truncation()
    idx = IndexSet.from_truncation(tr)
    g = p.grid
    sel = np.arange(g.n + 1) if nodes is None else np.atleast_1d(np.asarray(nodes, int))
    M = p.Mtilde[: tr.max_dim][:, sel]
    c = np.concatenate([np.ones((1, len(sel))), M])
    out = _product_coefficients(idx, c, p.scale()[sel], tr, g if nodes is None else None)
    if nodes is not None and np.ndim(nodes) == 0:
        return ChaosVector(idx, out.coeffs[:, 0], tr)
    return out


def dolean_comparison(p: SodeProblem, t=None) -> dict:
    """Exponent corrections of the Wick and the Dolean exponentials.

    For a semimartingale ``X_sigma`` the Wick solution is
    ``exp(X - R_sigma(t, t)/2)`` while the Dolean exponential uses the
    quadratic variation, ``exp(X - <X>_t/2)`` with ``<X>_t = int sigma^2``.
    """
    if len(p.models) != 1:
        raise UnsupportedField("comparison is defined for a single driving field")
    m = p.models[0]
    if not isinstance(m.kernel, (Wiener, OUStable, OUUnstable)):
        raise UnsupportedField(f"{m.kernel} is not a semimartingale kernel")
    g = m.grid
    t = g.nodes if t is None else np.atleast_1d(np.asarray(t, float))
    wick = 0.5 * np.asarray(m.variance(t), float)
    if m.sigma is None:
        qv = t.copy()
    elif callable(m.sigma):
        fine = np.linspace(0.0, 1.0, 2049)
        qv = np.array(
            [integrate.trapezoid(np.broadcast_to(m.sigma(x * fine), fine.shape) ** 2, x * fine) for x in t]
        )
    else:
        qv = float(m.sigma) ** 2 * t
    dolean = 0.5 * qv
    return {
        "t": t.tolist(),
        "wick_correction": wick.tolist(),
        "dolean_correction": dolean.tolist(),
        "difference": (dolean - wick).tolist(),
    }
