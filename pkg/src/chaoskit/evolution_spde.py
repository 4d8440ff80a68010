"""Stochastic heat-type equations on a periodic grid.

Two routes are provided.  The heat equation

    u(t, x) = u0(x) + int_0^t a u_xx ds + X_t^wick(sigma u_x)

has the classical solution ``u(t, x) = u_bar(t, x + X_sigma(t))`` where
``u_bar`` is ``u0`` smoothed by a Gaussian of variance ``2 r(t)``,
``r(t) = A(t) - R_sigma(t, t)/2``; :func:`solve_heat_closed` evaluates it
spectrally.  General equations ``du = (A u + f) dt + sum_l (M_l u + g_l) dX_l``
with translation-invariant ``A`` and ``M_l`` are solved through their chaos
propagator by :func:`solve_evolution_chaos`, one Fourier mode at a time.

Norms on the grid: ``||v||_H^2 = dx sum v_i^2`` and
``||v||_X^2 = ||v||_H^2 + ||D+ v||_H^2`` with the forward difference ``D+``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize

from . import _backend
from .errors import NegativeVariance, UnstableStep
from .evolution_sode import _store_nodes, prepare_tables
from .gaussian_field import (
    FBm,
    FieldModel,
    KernelSpec,
    OUStable,
    OUUnstable,
    TimeGrid,
    Wiener,
    norm_bound,
    operator_norm,
)
from .multiindex import IndexSet, TruncationSpec

__all__ = [
    "SpatialGrid",
    "HeatProblem",
    "EvolutionProblem",
    "EvolutionSolution",
    "spectral_derivative",
    "forward_difference_symbol",
    "solve_heat_closed",
    "heat_moments",
    "check_parabolicity",
    "check_parabolicity_general",
    "solve_evolution_chaos",
    "energy_report",
]


# ---------------------------------------------------------------------------
# spatial grid and spectral helpers


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic grid ``x_i = i L / nx`` on ``[0, L)``."""

    L: float = 20.0
    nx: int = 128

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def wavenumbers(self) -> np.ndarray:
        """``y_j = 2 pi j / L`` for the ``rfft`` modes ``j = 0 .. nx/2``."""
        return 2 * math.pi * np.arange(self.nx // 2 + 1) / self.L

    @property
    def nyquist(self) -> int | None:
        return self.nx // 2 if self.nx % 2 == 0 else None

    def mode_weights(self) -> np.ndarray:
        """``||v||_H^2 = sum_j w_j |rfft(v)_j|^2``."""
        w = np.full(self.nx // 2 + 1, 2.0)
        w[0] = 1.0
        if self.nyquist is not None:
            w[-1] = 1.0
        return w * self.L / self.nx**2

    def to_dict(self) -> dict:
        return {"L": self.L, "nx": self.nx}


def forward_difference_symbol(sg: SpatialGrid) -> np.ndarray:
    """``|D+^|^2 = (2 sin(pi j / nx) / dx)^2`` per ``rfft`` mode."""
    j = np.arange(sg.nx // 2 + 1)
    return (2 * np.sin(math.pi * j / sg.nx) / sg.dx) ** 2


def spectral_derivative(sg: SpatialGrid, order: int = 1) -> np.ndarray:
    """Circulant matrix of the spectral ``d^order/dx^order``.

    Odd orders vanish on the Nyquist mode so the matrix stays real.
    """
    y = sg.wavenumbers
    sym = (1j * y) ** order
    if order % 2 and sg.nyquist is not None:
        sym[-1] = 0.0
    col = np.fft.irfft(sym, n=sg.nx)
    idx = (np.arange(sg.nx)[:, None] - np.arange(sg.nx)[None, :]) % sg.nx
    return col[idx]


def _symbol(C: np.ndarray, tol: float = 1e-10) -> np.ndarray | None:
    """Eigenvalues of a circulant matrix per ``rfft`` mode, ``None`` if not circulant."""
    C = np.asarray(C, float)
    n = C.shape[0]
    col = C[:, 0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    scale = max(1.0, float(np.abs(C).max()))
    if np.abs(C - col[idx]).max() > tol * scale:
        return None
    return np.fft.rfft(col)


def _as_node_values(v, grid: TimeGrid) -> np.ndarray:
    if callable(v):
        return np.broadcast_to(np.asarray(v(grid.nodes), float), (grid.n + 1,)).copy()
    return np.broadcast_to(np.asarray(v, float), (grid.n + 1,)).copy()


def _cumtrapz(vals: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(vals)
    out[1:] = np.cumsum(0.5 * h * (vals[1:] + vals[:-1]))
    return out


# ---------------------------------------------------------------------------
# the heat equation in closed form


@dataclass
class HeatProblem:
    """``u_t = a(t) u_xx + sigma(t) u_x * dX`` (Wick sense) on a periodic grid.

    ``a`` and ``sigma`` are constants or callables of ``t``; ``u0`` holds
    samples on the spatial grid (or a callable of ``x``).
    """

    a: float | Callable
    sigma: float | Callable
    kernel: KernelSpec
    grid: TimeGrid = field(default_factory=TimeGrid)
    space: SpatialGrid = field(default_factory=SpatialGrid)
    u0: np.ndarray | Callable | None = None
    basis_dim: int = 16

    def __post_init__(self):
        if self.u0 is None:
            c = 0.5 * self.space.L
            self.u0 = np.exp(-((self.space.x - c) ** 2))
        elif callable(self.u0):
            self.u0 = np.asarray(self.u0(self.space.x), float)
        self.u0 = np.asarray(self.u0, float)
        if self.u0.shape != (self.space.nx,) or not np.all(np.isfinite(self.u0)):
            raise ValueError("u0 must be finite samples on the spatial grid")
        if np.any(_as_node_values(self.a, self.grid) <= 0):
            raise ValueError("a(t) must be positive")

    @property
    def sigma_is_constant(self) -> bool:
        return not callable(self.sigma)

    def field_model(self) -> FieldModel:
        """Field weighted by ``sigma`` (the process ``X_sigma``)."""
        return FieldModel(self.kernel, self.grid, self.basis_dim, self.sigma)

    def drift_integral(self) -> np.ndarray:
        return _cumtrapz(_as_node_values(self.a, self.grid), self.grid.h)

    def variance(self) -> np.ndarray:
        """``R_sigma(t, t)`` at the nodes."""
        return np.asarray(self.field_model().variance(), float)

    def margin(self) -> np.ndarray:
        """``r(t) = A(t) - R_sigma(t, t) / 2`` at the nodes."""
        return self.drift_integral() - 0.5 * self.variance()

    def margin_tolerance(self) -> np.ndarray:
        return 1e-12 * np.maximum(1.0, self.drift_integral())

    def to_evolution(self) -> "EvolutionProblem":
        """The same equation as a general evolution problem."""
        D1 = spectral_derivative(self.space, 1)
        D2 = spectral_derivative(self.space, 2)
        if callable(self.a):
            a = self.a
            A = lambda t: float(a(t)) * D2  # noqa: E731
        else:
            A = float(self.a) * D2
        if self.sigma_is_constant:
            M = float(self.sigma) * D1
            model = FieldModel(self.kernel, self.grid, self.basis_dim)
        else:
            M = D1
            model = self.field_model()
        return EvolutionProblem(A, [M], [model], self.u0, self.space)


def _check_margin(p: HeatProblem, sel: np.ndarray) -> np.ndarray:
    r = p.margin()[sel]
    tol = p.margin_tolerance()[sel]
    bad = np.nonzero(r < -tol)[0]
    if bad.size:
        i = bad[0]
        raise NegativeVariance(float(p.grid.nodes[sel][i]), float(r[i]))
    return np.maximum(r, 0.0)


def solve_heat_closed(p: HeatProblem, X=None, nodes=None, moments: bool = False) -> np.ndarray:
    """Classical solution on the periodic grid.

    ``X`` holds samples of the driving path at the grid nodes, shape
    ``(n + 1,)`` or ``(n_paths, n + 1)``.  For constant ``sigma`` it is the
    associated process ``X(t)`` and the shift is ``sigma X``; for a
    time-dependent ``sigma`` it must already be ``X_sigma``.  With
    ``moments=True`` no path is needed and the mean ``E u(t, .)``, the heat
    flow of ``u0`` at diffusivity ``a``, is returned.

    Output shape: ``(len(nodes), nx)``, with a leading path axis when ``X``
    is two-dimensional.  Raises :class:`NegativeVariance` when ``r(t) < 0``
    at a requested node.
    """
    g = p.grid
    sel = np.arange(g.n + 1) if nodes is None else np.atleast_1d(np.asarray(nodes, int))
    r = _check_margin(p, sel)
    y = p.space.wavenumbers
    u0h = np.fft.rfft(p.u0)
    if moments:
        A = p.drift_integral()[sel]
        return np.fft.irfft(u0h[None, :] * np.exp(-np.outer(A, y**2)), n=p.space.nx)
    if X is None:
        raise ValueError("a sampled path X is required unless moments=True")
    X = np.asarray(X, float)
    shift = X[..., sel]
    if p.sigma_is_constant:
        shift = float(p.sigma) * shift
    base = u0h * np.exp(-np.outer(r, y**2))  # (m, J)
    phase = np.exp(1j * shift[..., None] * y)
    return np.fft.irfft(base * phase, n=p.space.nx)


def heat_moments(p: HeatProblem, nodes=None) -> dict:
    """Mean field and ``E ||u(t)||_H^2`` of the closed-form solution.

    Every mode satisfies ``|u^(t, y)|^2 = |u0^(y)|^2 exp(-2 r(t) y^2)``, so
    the H-norm is deterministic.
    """
    g = p.grid
    sel = np.arange(g.n + 1) if nodes is None else np.atleast_1d(np.asarray(nodes, int))
    r = _check_margin(p, sel)
    y = p.space.wavenumbers
    w = p.space.mode_weights()
    u0h = np.fft.rfft(p.u0)
    norm2 = (np.abs(u0h) ** 2 * w)[None, :] * np.exp(-2 * np.outer(r, y**2))
    return {
        "t": g.nodes[sel],
        "mean": solve_heat_closed(p, nodes=sel, moments=True),
        "norm_H2": norm2.sum(axis=1),
    }


# ---------------------------------------------------------------------------
# parabolicity of the heat equation


def _first_violation_analytic(p: HeatProblem) -> tuple[float | None, str] | None:
    """Closed-form first violation time for constant coefficients, if known."""
    if callable(p.a) or callable(p.sigma):
        return None
    a, s2, T = float(p.a), float(p.sigma) ** 2, p.grid.T
    k = p.kernel
    if s2 == 0:
        return None, "no noise: always parabolic"
    ratio = 2 * a / s2
    if isinstance(k, Wiener):
        msg = f"2a >= sigma^2 reads {2 * a:.6g} >= {s2:.6g}"
        return (None if ratio >= 1 else 0.0), msg
    if isinstance(k, FBm):
        H = k.H
        t_star = ratio ** (1 / (2 * H - 1))
        msg = f"t^(2H-1) <= 2a/sigma^2 fails after t = {t_star:.6g}"
        return (t_star if t_star < T else None), msg
    if isinstance(k, OUStable):
        msg = "equivalent to 2a >= sigma^2 for every t"
        return (None if ratio >= 1 else 0.0), msg
    if isinstance(k, OUUnstable):
        b = k.b
        if ratio < 1:
            return 0.0, "2a < sigma^2: fails for every t > 0"
        # margin a t - sigma^2 (e^{2bt} - 1)/(4b) rises until t_peak, then falls
        m = lambda t: a * t - s2 * math.expm1(2 * b * t) / (4 * b)  # noqa: E731
        t_peak = math.log(ratio) / (2 * b)
        if t_peak == 0.0:
            return 0.0, "2a = sigma^2: fails for every t > 0"
        hi = 2 * t_peak
        while m(hi) >= 0:
            hi *= 2
        t_star = optimize.brentq(m, t_peak, hi, xtol=1e-14)
        msg = f"holds only for t <= {t_star:.6g}"
        return (t_star if t_star < T else None), msg
    return None


def check_parabolicity(p: HeatProblem) -> dict:
    """Evaluate ``r(t) = A(t) - R_sigma(t, t) / 2`` on the grid.

    ``holds`` is true when ``r`` stays above ``-1e-12 max(1, A(t))`` at every
    node (the same test used by :func:`solve_heat_closed`).
    ``first_violation_t`` is exact for the built-in kernels with constant
    coefficients and the first failing node (linearly refined) otherwise.
    """
    g = p.grid
    r = p.margin()
    tol = p.margin_tolerance()
    bad = np.nonzero(r < -tol)[0]
    holds = bad.size == 0
    analytic = _first_violation_analytic(p)
    message = ""
    if analytic is not None:
        first, message = analytic
        if holds:
            first = None
    elif holds:
        first = None
    else:
        i = int(bad[0])
        t0, t1 = g.nodes[i - 1], g.nodes[i]
        r0, r1 = r[i - 1], r[i]
        first = float(t0 + (t1 - t0) * r0 / (r0 - r1)) if r0 > r1 else float(t1)
    return {
        "holds": bool(holds),
        "first_violation_t": first,
        "t": g.nodes,
        "margin": r,
        "message": message,
    }


# ---------------------------------------------------------------------------
# general evolution problems


@dataclass
class EvolutionProblem:
    """``du = (A u + f) dt + sum_l (M_l u + g_l) dX_l`` on a periodic grid.

    ``A`` is a matrix or a callable ``t -> matrix``; ``M`` lists one matrix
    per field.  ``f`` and each ``g_l`` are ``None``, node samples of shape
    ``(n + 1, nx)`` or callables ``t -> (nx,)``.
    """

    A: np.ndarray | Callable
    M: Sequence[np.ndarray]
    fields: Sequence[FieldModel]
    u0: np.ndarray
    space: SpatialGrid
    f: np.ndarray | Callable | None = None
    g: Sequence | None = None

    def __post_init__(self):
        if len(self.M) != len(self.fields):
            raise ValueError("one operator M_l per field")
        if not self.fields:
            raise ValueError("need at least one field")
        g0, K = self.fields[0].grid, self.fields[0].basis_dim
        for m in self.fields[1:]:
            if m.grid != g0 or m.basis_dim != K:
                raise ValueError("all fields must share grid and basis size")
        self.u0 = np.asarray(self.u0, float)
        if self.u0.shape != (self.space.nx,):
            raise ValueError("u0 must live on the spatial grid")

    @property
    def grid(self) -> TimeGrid:
        return self.fields[0].grid

    @property
    def basis_dim(self) -> int:
        return self.fields[0].basis_dim

    def A_at(self, t: float) -> np.ndarray:
        return self.A(t) if callable(self.A) else self.A

    def A_symbols(self) -> np.ndarray:
        """Symbol of ``A`` per node, shape ``(n + 1, J)``; raises if not circulant."""
        nodes = self.grid.nodes
        if not callable(self.A):
            s = _symbol(self.A)
            if s is None:
                raise ValueError("the chaos solver needs a translation-invariant A")
            return np.broadcast_to(s, (len(nodes), len(s))).copy()
        out = []
        for t in nodes:
            s = _symbol(self.A(t))
            if s is None:
                raise ValueError("the chaos solver needs a translation-invariant A")
            out.append(s)
        return np.array(out)

    def M_symbols(self) -> np.ndarray:
        out = []
        for M in self.M:
            s = _symbol(M)
            if s is None:
                raise ValueError("the chaos solver needs translation-invariant M_l")
            out.append(s)
        return np.array(out)

    def forcing_hat(self, v) -> np.ndarray | None:
        if v is None:
            return None
        nodes = self.grid.nodes
        if callable(v):
            vals = np.array([np.broadcast_to(v(t), (self.space.nx,)) for t in nodes], float)
        else:
            vals = np.broadcast_to(np.asarray(v, float), (len(nodes), self.space.nx))
        return np.fft.rfft(vals, axis=1)

    def kappas(self) -> np.ndarray:
        """Norm bounds ``K0 + K1`` of the fields, times ``sup |sigma|`` if weighted."""
        out = []
        for m in self.fields:
            k = norm_bound(m.kernel, m.grid.T).kappa
            out.append(k * float(np.max(np.abs(m.sigma_cells))))
        return np.array(out)


@dataclass
class EvolutionSolution:
    """Chaos coefficients of an evolution problem in Fourier space.

    ``coeffs[s, a, j]`` is the ``rfft`` coefficient of ``u_alpha`` on mode
    ``modes[j]`` at node ``nodes[s]``.  ``EH`` and ``EX`` hold the per-grade
    sums ``sum_|alpha|=n ||u_alpha(t_i)||^2`` in the H and X norms.
    """

    indices: IndexSet
    truncation: TruncationSpec
    grid: TimeGrid
    space: SpatialGrid
    nodes: np.ndarray
    modes: np.ndarray
    coeffs: np.ndarray
    EH: np.ndarray
    EX: np.ndarray
    backend: str

    def spectrum(self, s: int = -1) -> np.ndarray:
        """Full ``rfft`` arrays ``(n_idx, nx//2 + 1)`` at stored node ``s``."""
        out = np.zeros((len(self.indices), self.space.nx // 2 + 1), complex)
        out[:, self.modes] = self.coeffs[s]
        return out

    def physical(self, s: int = -1) -> np.ndarray:
        """``u_alpha(x)`` at stored node ``s``, shape ``(n_idx, nx)``."""
        return np.fft.irfft(self.spectrum(s), n=self.space.nx, axis=1)

    def mean(self, s: int = -1) -> np.ndarray:
        return self.physical(s)[0]

    def second_moment(self, s: int = -1) -> np.ndarray:
        """``E u(t, x)^2`` at stored node ``s``."""
        return np.sum(self.physical(s) ** 2, axis=0)

    def evaluate(self, xi, s: int = -1) -> np.ndarray:
        """Pathwise field at sampled ``xi``, shape ``(n_samples, nx)``."""
        from .hermite_chaos import ChaosVector

        vec = ChaosVector(self.indices, self.physical(s), self.truncation)
        return vec.evaluate(xi).T

    @property
    def norm_H2(self) -> np.ndarray:
        """``E ||u(t_i)||_H^2`` at every node."""
        return self.EH.sum(axis=1)


def _step_coefficients(lam: np.ndarray, h: float):
    """Per-step ``(P, Q, R)`` for ``u+ = P u + Q F + R F+``.

    Constant symbols use the exponential trapezoid rule, time-dependent ones
    Crank-Nicolson.
    """
    if np.all(lam == lam[:1]):
        E = np.exp(lam[0] * h)
        P = np.broadcast_to(E, lam[1:].shape)
        return P.copy(), (0.5 * h * P).copy(), np.full(lam[1:].shape, 0.5 * h, complex)
    den = 1 - 0.5 * h * lam[1:]
    P = (1 + 0.5 * h * lam[:-1]) / den
    Q = 0.5 * h / den
    return P, Q, Q.copy()


def solve_evolution_chaos(
    p: EvolutionProblem,
    truncation: TruncationSpec | None = None,
    store="final",
    backend: str | None = None,
) -> EvolutionSolution:
    """Solve the propagator system grade by grade, mode by mode.

    ``u_(0)`` solves the deterministic problem with forcing ``f``; each
    ``u_alpha`` solves the same equation forced by
    ``sum sqrt(alpha_kl) m~_kl (M_l u_(alpha - e_kl) + g_l 1[|alpha| = 1])``.
    Raises :class:`UnstableStep` when a mode grows faster than the time
    step can resolve (``h max Re lam > 1``) or the sweep overflows.
    """
    L = len(p.fields)
    K = p.basis_dim
    tr = truncation or TruncationSpec(4, L * K)
    if tr.max_dim > L * K:
        raise ValueError(f"truncation uses {tr.max_dim} slots, problem has {L * K}")
    g = p.grid
    sg = p.space
    lam_all = p.A_symbols()
    Mh_all = p.M_symbols()
    fh = p.forcing_hat(p.f)
    gh = None
    if p.g is not None:
        gh = np.stack([p.forcing_hat(gl) if gl is not None else np.zeros((g.n + 1, sg.nx // 2 + 1), complex) for gl in p.g])
    u0h = np.fft.rfft(p.u0)
    active = np.abs(u0h) > 1e-14 * max(1.0, float(np.abs(u0h).max()))
    if fh is not None:
        active |= np.any(np.abs(fh) > 0, axis=0)
    if gh is not None:
        active |= np.any(np.abs(gh) > 0, axis=(0, 1))
    modes = np.nonzero(active)[0]
    if modes.size == 0:
        modes = np.array([0])
    lam = lam_all[:, modes]
    if g.h * float(np.max(lam.real)) > 1.0:
        raise UnstableStep(f"h * max Re(lambda) = {g.h * np.max(lam.real):.3g} > 1")
    P, Q, R = _step_coefficients(lam, g.h)
    idx = IndexSet.from_truncation(tr)
    par, slot, coef, gptr = prepare_tables(idx)
    mt = np.ascontiguousarray(np.concatenate([m.mtilde for m in p.fields])[: tr.max_dim])
    field_of_slot = (np.arange(tr.max_dim) // K).astype(np.int32)
    wH = sg.mode_weights()[modes]
    wX = wH * (1 + forward_difference_symbol(sg)[modes])
    nodes = _store_nodes(store, g.n)
    kern = _backend.get(backend)
    c = np.ascontiguousarray
    snaps, EH, EX = kern.spde_march(
        par, slot, coef, gptr, mt,
        c(P, complex), c(Q, complex), c(R, complex),
        c(Mh_all[:, modes], complex), field_of_slot,
        None if gh is None else c(gh[:, :, modes], complex),
        None if fh is None else c(fh[:, modes], complex),
        c(u0h[modes], complex), c(wH), c(wX), nodes,
    )
    if not (np.all(np.isfinite(EH)) and np.all(np.isfinite(snaps))):
        raise UnstableStep("non-finite values in the propagator sweep")
    name = "python" if kern is _backend._pykernels else "cython"
    return EvolutionSolution(idx, tr, g, sg, nodes, modes, snaps, EH, EX, name)


# ---------------------------------------------------------------------------
# the general parabolicity condition


def check_parabolicity_general(p: EvolutionProblem, kappas=None) -> dict:
    """Largest ``delta0`` with ``2(Av, v) + sum K_l^2 ||M_l v||^2 + delta0 ||v||_X^2 <= C0 ||v||_H^2``.

    For translation-invariant operators the quadratic forms are diagonal in
    the Fourier modes and the inequality is checked mode by mode::

        delta0 = min_{y != 0} -(2 Re A^ + sum K_l^2 |M_l^|^2) / |D+^|^2

    capped at ``delta_A = min_{y != 0} -Re A^ / |D+^|^2``, and
    ``C0 = max(0, max_y (2 Re A^ + sum K_l^2 |M_l^|^2 + delta0 (1 + |D+^|^2)))``.
    Other operators go through a generalized eigenvalue problem (a
    heuristic, reported as such).  ``holds`` means ``delta0 >= 0`` up to a
    relative rounding tolerance of ``1e-12``.

    ``kappas`` defaults to the norm bounds ``K0 + K1`` of the fields.
    """
    kap = p.kappas() if kappas is None else np.asarray(kappas, float)
    g = p.grid
    spectral = [operator_norm(m.kstar_matrix) for m in p.fields]
    sup_m = [float(np.max(np.abs(m.mtilde))) for m in p.fields]
    try:
        lam = p.A_symbols()
        Mh = p.M_symbols()
        method = "fourier"
    except ValueError:
        lam = Mh = None
        method = "generalized-eigen"
    sg = p.space
    if method == "fourier":
        D = forward_difference_symbol(sg)
        nz = D > 0
        noise = np.sum((kap[:, None] ** 2) * np.abs(Mh) ** 2, axis=0)
        q = 2 * lam.real + noise[None, :]  # (n + 1, J)
        delta0 = float(np.min(-q[:, nz] / D[nz]))
        delta_A = float(np.min(-lam.real[:, nz] / D[nz]))
        delta0 = min(delta0, delta_A)
        C0 = max(0.0, float(np.max(q + delta0 * (1 + D))))
    else:
        delta0, delta_A, C0 = _general_eigen(p, kap)
    return {
        "holds": bool(delta0 >= -1e-12 * max(1.0, abs(delta_A))),
        "delta0": delta0,
        "delta_A": delta_A,
        "C0": C0,
        "kappa": kap.tolist(),
        "kappa_spectral": spectral,
        "sup_mtilde": sup_m,
        "method": method,
    }


def _general_eigen(p: EvolutionProblem, kap: np.ndarray):
    sg = p.space
    n = sg.nx
    Dp = (np.roll(np.eye(n), 1, axis=1) - np.eye(n)) / sg.dx
    B = Dp.T @ Dp
    # complement of the constants, where B is positive definite
    Qm = linalg.null_space(np.ones((1, n)))
    Bq = Qm.T @ B @ Qm
    worst = (math.inf, math.inf, -math.inf)
    for t in (p.grid.nodes if callable(p.A) else [0.0]):
        A = p.A_at(t)
        S = A + A.T + sum(k**2 * M.T @ M for k, M in zip(kap, p.M))
        d0 = float(linalg.eigh(-(Qm.T @ S @ Qm), Bq, eigvals_only=True)[0])
        dA = float(linalg.eigh(-0.5 * (Qm.T @ (A + A.T) @ Qm), Bq, eigvals_only=True)[0])
        d0 = min(d0, dA)
        C = float(linalg.eigvalsh(S + d0 * (np.eye(n) + B))[-1])
        worst = (min(worst[0], d0), min(worst[1], dA), max(worst[2], C))
    return worst[0], worst[1], max(0.0, worst[2])


def energy_report(sol: EvolutionSolution, p: EvolutionProblem, delta0: float | None = None) -> dict:
    """Both sides of the energy inequality, per truncation order.

    ``lhs[N] = sup_t sum_{n<=N} E^H_n(t) + delta0 int_0^T sum_{n<=N} E^X_n dt``
    and ``data = ||u0||_H^2 + int ||f||_X'^2 + sum K_l^2 int ||g_l||_X'^2``;
    ``ratio = lhs / data``.  ``partial_sums[N]`` is ``E ||u(T)||_H^2``
    truncated at order ``N`` and ``growth[N] = partial_sums[N] / partial_sums[N-1]``.
    ``delta0`` defaults to the value of :func:`check_parabolicity_general`,
    clipped at zero.
    """
    g = p.grid
    sg = p.space
    if delta0 is None:
        delta0 = check_parabolicity_general(p)["delta0"]
    d0 = max(float(delta0), 0.0)
    cumH = np.cumsum(sol.EH, axis=1)
    cumX = np.cumsum(sol.EX, axis=1)
    w = g.weights
    lhs = cumH.max(axis=0) + d0 * (w @ cumX)
    wH = sg.mode_weights()
    dual = wH / (1 + forward_difference_symbol(sg))
    data = float(np.sum(wH * np.abs(np.fft.rfft(p.u0)) ** 2))
    fh = p.forcing_hat(p.f)
    if fh is not None:
        data += float(w @ (np.abs(fh) ** 2 @ dual))
    if p.g is not None:
        for k, gl in zip(p.kappas(), p.g):
            gh = p.forcing_hat(gl)
            if gh is not None:
                data += k**2 * float(w @ (np.abs(gh) ** 2 @ dual))
    partial = cumH[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = lhs / data if data > 0 else np.zeros_like(lhs)
        growth = np.concatenate([[np.nan], partial[1:] / partial[:-1]])
    return {
        "delta0": float(delta0),
        "lhs": lhs.tolist(),
        "data": data,
        "ratio": ratio.tolist(),
        "partial_sums": partial.tolist(),
        "growth": growth.tolist(),
        "grade_energy_T": sol.EH[-1].tolist(),
    }
