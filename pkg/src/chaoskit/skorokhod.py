"""Ito-Skorokhod and Stratonovich-type integrals on chaos coefficients.

An integrand is a process-valued :class:`ChaosVector` whose coefficient
``eta_alpha(t)`` is sampled at the nodes of the model grid.  The Skorokhod
integral has coefficient

    sum_k sqrt(alpha_k) int_0^t eta_(alpha - e_k)(s) m~_k(s) ds

at ``alpha``; the time integral uses the same running trapezoid as the
propagator sweep in :mod:`chaoskit.evolution_sode`.
"""
from __future__ import annotations

import numpy as np

from .errors import GridMismatch
from .gaussian_field import FieldModel, TimeGrid
from .hermite_chaos import ChaosVector
from .multiindex import IndexSet, MultiIndex, TruncationSpec

__all__ = [
    "deterministic_integrand",
    "associated_process",
    "skorokhod_integral",
    "stratonovich_integral",
    "trace_term",
    "check_integrability",
]


def deterministic_integrand(values, grid: TimeGrid, K: int = 1) -> ChaosVector:
    """Process ``eta(t) = f(t)`` given by its values at the grid nodes."""
    values = np.asarray(values, float)
    if values.shape != (grid.n + 1,):
        raise GridMismatch(f"need {grid.n + 1} node values, got {values.shape}")
    return ChaosVector.from_dict({MultiIndex(): values}, TruncationSpec(0, K), grid)


def associated_process(model: FieldModel) -> ChaosVector:
    """``X(t)`` (for the Wiener kernel, ``W(t)``) as a first-order process."""
    K = model.basis_dim
    return ChaosVector.first_order(model.Mtilde, TruncationSpec(1, K), model.grid)


def _check(eta: ChaosVector, model: FieldModel):
    g = model.grid
    if not eta.is_process or eta.coeffs.shape[1] != g.n + 1:
        raise GridMismatch("integrand must be sampled at every node of the model grid")
    if eta.grid is not None and eta.grid != g:
        raise GridMismatch(f"integrand grid {eta.grid} differs from model grid {g}")
    if eta.indices.K > model.basis_dim and np.any(eta.indices.seq > model.basis_dim):
        raise GridMismatch("integrand uses more basis functions than the model provides")


def _node(model: FieldModel, upto) -> int:
    g = model.grid
    if upto is None:
        return g.n
    i = int(round(upto / g.h))
    if not 0 <= i <= g.n or abs(i * g.h - upto) > 1e-9 * max(1.0, g.T):
        raise GridMismatch(f"t = {upto} is not a node of {g}")
    return i


def _output_indices(eta: ChaosVector, K: int) -> tuple[IndexSet, TruncationSpec]:
    tr = eta.truncation
    s = None if tr.max_support is None else tr.max_support + 1
    out_tr = TruncationSpec(eta.indices.N + 1, K, s)
    return IndexSet.from_truncation(out_tr), out_tr


def _running(eta: ChaosVector, model: FieldModel, idx: IndexSet) -> np.ndarray:
    """Running Skorokhod coefficients on ``idx``, shape ``(len(idx), n + 1)``."""
    par, slot, mult = idx.lowering_table(eta.indices)
    coef = np.sqrt(mult)
    mt = model.mtilde
    h = model.grid.h
    E = eta.coeffs
    incr = np.zeros((len(idx), model.grid.n))
    for p in range(par.shape[1]):
        live = coef[:, p] > 0
        if not live.any():
            continue
        rows = np.nonzero(live)[0]
        pp = par[rows, p]
        incr[rows] += (
            0.5 * h * coef[rows, p, None] * mt[slot[rows, p]] * (E[pp, :-1] + E[pp, 1:])
        )
    out = np.zeros((len(idx), model.grid.n + 1))
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out


def skorokhod_integral(
    eta: ChaosVector, model: FieldModel, upto: float | None = None, running: bool = False
) -> ChaosVector:
    """Chaos vector of the Skorokhod integral of ``eta 1_[0, upto]``.

    With ``running=True`` the whole process ``t -> int_0^t eta dX`` is
    returned instead of its value at ``upto`` (default ``T``).
    """
    _check(eta, model)
    idx, tr = _output_indices(eta, model.basis_dim)
    proc = _running(eta, model, idx)
    if running:
        return ChaosVector(idx, proc, tr, model.grid)
    return ChaosVector(idx, proc[:, _node(model, upto)], tr)


def trace_term(eta: ChaosVector, model: FieldModel, idx: IndexSet | None = None):
    """``sum_k sqrt(alpha_k + 1) int_0^T eta_(alpha + e_k) m~_k`` on ``idx``.

    Returns ``(coefficients, top_mass)`` where ``top_mass`` is the squared
    norm of the top-grade integrand coefficients, whose contribution would
    need coefficients one order beyond the truncation.
    """
    _check(eta, model)
    if idx is None:
        idx, _ = _output_indices(eta, model.basis_dim)
    h = model.grid.h
    mt = model.mtilde
    E = eta.coeffs
    out = np.zeros(len(idx))
    src = eta.indices
    for b in range(1, len(src)):
        beta = src[b]
        # int_0^T eta_beta m~_k by the running trapezoid
        for k, bk in beta.items:
            if k > mt.shape[0]:
                continue
            val = 0.5 * h * np.dot(mt[k - 1], E[b, :-1] + E[b, 1:])
            alpha = MultiIndex({**dict(beta.items), k: bk - 1})
            r = idx.index_of(alpha)
            if r >= 0:
                out[r] += np.sqrt(bk) * val
    top = src.grade_slice(src.N)
    top_mass = float(h * np.sum(E[top] ** 2)) if src.N > 0 else 0.0
    return out, top_mass


def stratonovich_integral(eta: ChaosVector, model: FieldModel) -> ChaosVector:
    """Skorokhod integral over ``[0, T]`` plus the trace term.

    ``dropped_mass`` carries the top-grade integrand mass (see
    :func:`trace_term`).
    """
    sk = skorokhod_integral(eta, model)
    tr_coeffs, top_mass = trace_term(eta, model, sk.indices)
    out = ChaosVector(sk.indices, sk.coeffs + tr_coeffs, sk.truncation)
    out.dropped_mass = top_mass
    return out


def check_integrability(eta: ChaosVector, grid: TimeGrid | None = None) -> dict:
    """``sum_alpha |alpha| ||eta_alpha||^2`` and the share of its top grade."""
    grid = eta.grid if grid is None else grid
    if eta.is_process:
        w = grid.weights if grid is not None else np.full(eta.coeffs.shape[1], 1.0)
        norms = (eta.coeffs**2) @ w
    else:
        norms = eta.coeffs**2
    by_grade = np.array(
        [n * norms[eta.indices.grade_slice(n)].sum() for n in range(eta.indices.N + 1)]
    )
    total = float(by_grade.sum())
    tail = float(by_grade[-1] / total) if total > 0 else 0.0
    return {"sum": total, "tail_fraction": tail, "by_grade": by_grade.tolist()}
