"""Monte Carlo oracle: Gaussian paths sampled straight from the kernel.

Paths are ``X(t_i) = sum_c L[i, c] dW_c`` with Brownian increments on the
grid cells.  ``L[i, c]`` carries the sign of the kernel and the root mean
square of ``K(t_i, .)`` over cell ``c`` (Gauss or Gauss-Jacobi quadrature),
so the sampled variance equals the quadrature value of ``R(t_i, t_i)``
even where the kernel is singular.

Random numbers come from Philox streams spawned per block of paths, so an
ensemble depends only on the seed and not on the number of threads
(``CHAOSKIT_THREADS`` caps the worker count).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .gaussian_field import FieldModel, _cell_rule, _weighted_kernel, covariance
from .hermite_chaos import ChaosVector

__all__ = [
    "PathEnsemble",
    "increment_matrix",
    "sample_paths",
    "validate_covariance",
    "validate_wick_exponential",
    "validate_heat_solution",
    "BLOCK",
]

BLOCK = 2048


def _threads() -> int:
    env = os.environ.get("CHAOSKIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def increment_matrix(model: FieldModel, nodes=None, q: int = 8) -> np.ndarray:
    """Rows ``L[i, c]`` for the requested nodes, shape ``(len(nodes), n)``."""
    g = model.grid
    nodes = np.arange(g.n + 1) if nodes is None else np.atleast_1d(np.asarray(nodes, int))
    pts, wts = _cell_rule(model.kernel, g.nodes, 0.0, q)
    pts = pts.reshape(g.n, q)
    wts = wts.reshape(g.n, q)
    t = g.nodes[nodes]
    out = np.zeros((len(nodes), g.n))
    sig = model.sigma
    for r, ti in enumerate(t):
        cells = int(round(ti / g.h))
        if cells == 0:
            continue
        P = pts[:cells]
        if callable(sig):
            vals = _weighted_kernel(model.kernel, sig, float(ti), P.ravel()).reshape(P.shape)
        else:
            vals = model.kernel.eval(ti, P)
            if sig is not None:
                vals = float(sig) * vals
        ms = np.sum(wts[:cells] * vals**2, axis=1) / g.h
        mid = vals[:, q // 2]
        out[r, :cells] = np.where(mid < 0, -1.0, 1.0) * np.sqrt(ms)
    return out


@dataclass
class PathEnsemble:
    """Sampled values of ``X`` at ``nodes``; ``paths`` has one row per path."""

    paths: np.ndarray
    nodes: np.ndarray
    seed: int
    model: FieldModel
    L: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def variance_exact(self) -> np.ndarray:
        """Variance of the discretized process at ``nodes``."""
        return self.model.grid.h * np.sum(self.L**2, axis=1)


def sample_paths(model: FieldModel, n_paths: int, seed: int = 0, nodes=None) -> PathEnsemble:
    """Reproducible ensemble of ``X`` (``X_sigma`` for weighted models)."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    g = model.grid
    nodes = np.arange(g.n + 1) if nodes is None else np.atleast_1d(np.asarray(nodes, int))
    L = increment_matrix(model, nodes)
    n_blocks = -(-n_paths // BLOCK)
    seqs = np.random.SeedSequence(seed).spawn(n_blocks)
    out = np.empty((n_paths, len(nodes)))
    sqh = np.sqrt(g.h)

    def work(b):
        rng = np.random.Generator(np.random.Philox(seqs[b]))
        lo = b * BLOCK
        m = min(BLOCK, n_paths - lo)
        dW = rng.standard_normal((m, g.n)) * sqh
        out[lo : lo + m] = dW @ L.T

    with ThreadPoolExecutor(max_workers=min(_threads(), n_blocks)) as ex:
        list(ex.map(work, range(n_blocks)))
    return PathEnsemble(out, nodes, seed, model, L)


def _row(name, est, ref, se, **extra):
    ok = bool(abs(est - ref) <= 3 * se) if se > 0 else bool(abs(est - ref) <= 1e-12)
    return {"quantity": name, "estimate": float(est), "reference": float(ref), "se": float(se), "pass": ok, **extra}


def validate_covariance(model: FieldModel, n_paths: int = 100_000, seed: int = 0, times=None) -> dict:
    """Sample variances, lag covariances and normality against quadrature."""
    g = model.grid
    times = [0.25 * g.T, 0.5 * g.T, g.T] if times is None else list(times)
    nodes = sorted({g.node_index(t) for t in times})
    ens = sample_paths(model, n_paths, seed, nodes)
    X = ens.paths
    rows = []
    var_closed = model.variance(g.nodes[nodes])
    for j, i in enumerate(nodes):
        x = X[:, j]
        se = np.std(x**2, ddof=1) / np.sqrt(n_paths)
        rows.append(_row("var", np.mean(x**2), var_closed[j], se, t=float(g.nodes[i])))
        # sample-standardized moments have SEs sqrt(6/n) and sqrt(24/n)
        skew, kurt = stats.skew(x), stats.kurtosis(x)
        rows.append(_row("skew", skew, 0.0, np.sqrt(6 / n_paths), t=float(g.nodes[i])))
        rows.append(_row("excess_kurtosis", kurt, 0.0, np.sqrt(24 / n_paths), t=float(g.nodes[i])))
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            prod = X[:, a] * X[:, b]
            ref = covariance(model.kernel, g, g.nodes[nodes[b]], g.nodes[nodes[a]])
            s2 = 1.0 if model.sigma is None else float(model.sigma) ** 2
            rows.append(
                _row(
                    "cov", np.mean(prod), s2 * ref, np.std(prod, ddof=1) / np.sqrt(n_paths),
                    t=float(g.nodes[nodes[b]]), s=float(g.nodes[nodes[a]]),
                )
            )
    return {"target": "covariance", "n_paths": n_paths, "seed": seed, "rows": rows,
            "pass": all(r["pass"] for r in rows)}


def validate_wick_exponential(
    model: FieldModel, t: float | None = None, n_paths: int = 100_000, seed: int = 0, order: int = 8
) -> dict:
    """Pathwise ``exp(X(t) - R(t, t)/2)`` against the chaos Wick exponential."""
    from .evolution_sode import SodeProblem, closed_form
    from .multiindex import TruncationSpec

    g = model.grid
    t = g.T if t is None else t
    i = g.node_index(t)
    ens = sample_paths(model, n_paths, seed, [i])
    x = ens.paths[:, 0]
    R = float(ens.variance_exact[0])
    u = np.exp(x - 0.5 * R)
    tr = TruncationSpec(order, model.basis_dim, 2 if model.basis_dim > 8 and order > 4 else None)
    chaos: ChaosVector = closed_form(SodeProblem(model), tr, nodes=i)
    rows = [
        _row("mean", np.mean(u), chaos.mean(), np.std(u, ddof=1) / np.sqrt(n_paths), t=float(g.nodes[i])),
        _row("second_moment", np.mean(u**2), chaos.second_moment(),
             np.std(u**2, ddof=1) / np.sqrt(n_paths), t=float(g.nodes[i])),
    ]
    return {"target": "wick-exp", "n_paths": n_paths, "seed": seed, "rows": rows,
            "lognormal_second_moment": float(np.exp(R)), "pass": all(r["pass"] for r in rows)}


def validate_heat_solution(p, n_paths: int = 10_000, seed: int = 0, node: int | None = None) -> dict:
    """Average of closed-form solutions over sampled paths versus the heat flow.

    Passes when ``max_x |mean - flow| <= 3 max_x SE``.
    """
    from .evolution_spde import solve_heat_closed

    g = p.grid
    node = g.n if node is None else node
    ref = solve_heat_closed(p, nodes=[node], moments=True)[0]
    model = p.field_model() if not p.sigma_is_constant else FieldModel(p.kernel, g, p.basis_dim)
    ens = sample_paths(model, n_paths, seed, [node])
    X = np.zeros((n_paths, g.n + 1))
    X[:, node] = ens.paths[:, 0]
    acc = np.zeros(p.space.nx)
    acc2 = np.zeros(p.space.nx)
    for lo in range(0, n_paths, BLOCK):
        u = solve_heat_closed(p, X[lo : lo + BLOCK], nodes=[node])[:, 0, :]
        acc += u.sum(axis=0)
        acc2 += (u**2).sum(axis=0)
    mean = acc / n_paths
    var = np.maximum(acc2 / n_paths - mean**2, 0.0) * n_paths / max(n_paths - 1, 1)
    se = np.sqrt(var / n_paths)
    disc = np.abs(mean - ref)
    ok = bool(disc.max() <= 3 * se.max()) if se.max() > 0 else bool(disc.max() <= 1e-12)
    return {
        "target": "heat", "n_paths": n_paths, "seed": seed, "t": float(g.nodes[node]),
        "max_discrepancy": float(disc.max()), "max_se": float(se.max()),
        "x": p.space.x.tolist(), "estimate": mean.tolist(), "reference": ref.tolist(),
        "se": se.tolist(), "pass": ok,
    }
