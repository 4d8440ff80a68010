"""Volterra kernels, the discretized operator K*, covariances and norm bounds.

A generalized Gaussian field over ``L2((0, T))`` is represented through a
non-anticipating kernel ``K(t, s)`` (zero for ``s > t``): the associated
process is ``X(t) = int_0^t K(t, s) dW(s)``.  The operator ``K*`` maps
``chi_t`` to ``K(t, .)``; its adjoint ``K`` turns the cosine basis ``m_k``
into the rates ``m~_k = K m_k`` whose running integrals ``M~_k(t)`` are the
first-order chaos coefficients of ``X(t)``.

Discretization
--------------
Functions on ``(0, T)`` are piecewise constant on the ``n`` cells of a
:class:`TimeGrid`.  For such step functions ``K*`` is known exactly; we
sample the result at the cell midpoints ``c_i``::

    A[i, i] = K(t_{i+1}, c_i)
    A[i, j] = K(t_{j+1}, c_i) - K(t_j, c_i)     for j > i
    A[i, j] = 0                                 for j < i

so ``A`` is upper triangular in the ``(s, t)`` ordering.  Cell weights are
uniform, hence ``K = A^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

from .errors import HypothesesUnverifiable, SingularDiagonal

__all__ = [
    "TimeGrid",
    "KernelSpec",
    "Wiener",
    "FBm",
    "OUStable",
    "OUUnstable",
    "Rho",
    "kernel_from_dict",
    "kernel_eval",
    "kernel_dt",
    "kernel_diag",
    "kstar_step",
    "kstar_build",
    "operator_norm",
    "NormBound",
    "norm_bound",
    "fbm_k1_squared",
    "covariance",
    "covariance_matrix",
    "variance",
    "kappa_lower_bound",
    "cosine_basis",
    "FieldModel",
    "mtilde_build",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i T / n`` on ``[0, T]`` with trapezoid weights."""

    T: float = 1.0
    n: int = 512

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.n + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    def node_index(self, t: float) -> int:
        """Index of the node nearest to ``t``."""
        return int(np.clip(round(t / self.h), 0, self.n))

    def to_dict(self) -> dict:
        return {"T": self.T, "n": self.n}


# ---------------------------------------------------------------------------
# kernels


class KernelSpec:
    """Base class of non-anticipating kernels.

    Subclasses implement ``_eval`` and ``_dt`` for ``s < t`` on arrays, plus
    ``diag`` (the limit ``K(s+, s)``).
    """

    tag = "abstract"
    #: power of ``s`` in ``K(t, s)`` as ``s -> 0`` (0 when bounded)
    s_exponent = 0.0
    #: power of ``t - s`` in ``K(t, s)`` as ``s -> t`` (0 when bounded)
    diag_exponent = 0.0

    def eval(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        out = np.zeros(t.shape)
        below = s < t
        if np.any(below):
            out[below] = self._eval(t[below], s[below])
        on = s == t
        if np.any(on):
            out[on] = self.diag(s[on])
        return out if out.ndim else float(out)

    def dt(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        out = np.zeros(t.shape)
        below = s < t
        if np.any(below):
            out[below] = self._dt(t[below], s[below])
        on = s == t
        if np.any(on):
            self._dt_diag(s[on])
            out[on] = self._dt(t[on], s[on])
        return out if out.ndim else float(out)

    def _dt_diag(self, s):
        pass

    def diag(self, s):
        raise NotImplementedError

    def variance(self, t):
        """Closed-form ``R(t, t)`` or ``None`` when only quadrature is available."""
        return None

    def norm_constants(self, T: float) -> tuple[float, float]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "type")
        return f"{type(self).__name__}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.to_dict().items())))


class Wiener(KernelSpec):
    """``K(t, s) = 1`` for ``s <= t``: standard Brownian motion."""

    tag = "wiener"

    def _eval(self, t, s):
        return np.ones_like(t)

    def _dt(self, t, s):
        return np.zeros_like(t)

    def diag(self, s):
        return np.ones_like(np.asarray(s, float))

    def variance(self, t):
        return np.asarray(t, float)

    def norm_constants(self, T):
        return 1.0, 0.0

    def to_dict(self):
        return {"type": self.tag}


def fbm_constant(H: float) -> float:
    return math.sqrt(
        2 * H * math.gamma(1.5 - H) / (math.gamma(H + 0.5) * math.gamma(2 - 2 * H))
    )


def fbm_k1_squared(H: float, T: float) -> float:
    """``sup_t dR(T, t)/dt = 2H 2^(1-2H) T^(2H-1)`` for fractional Brownian motion."""
    return 2 * H * 2 ** (1 - 2 * H) * T ** (2 * H - 1)


class FBm(KernelSpec):
    """Fractional Brownian motion with Hurst index ``1/2 < H < 1``.

    ``K(t, s) = C_H (t-s)^(H-1/2) F(H-1/2, 1/2-H; H+1/2; 1-t/s)``, the
    closed form of ``C_H (H-1/2) s^(1/2-H) int_s^t (u-s)^(H-3/2) u^(H-1/2) du``.
    """

    tag = "fbm"

    def __init__(self, H: float):
        H = float(H)
        if not 0.5 < H < 1.0:
            raise ValueError("FBm needs 1/2 < H < 1")
        self.H = H
        self.C = fbm_constant(H)
        self.s_exponent = 0.5 - H
        self.diag_exponent = H - 0.5

    def _eval(self, t, s):
        H = self.H
        out = np.empty_like(t)
        pos = s > 0
        out[~pos] = np.inf
        tp, sp = t[pos], s[pos]
        out[pos] = (
            self.C * (tp - sp) ** (H - 0.5) * special.hyp2f1(H - 0.5, 0.5 - H, H + 0.5, 1 - tp / sp)
        )
        return out

    def _dt(self, t, s):
        H = self.H
        with np.errstate(divide="ignore"):
            return (
                self.C * (H - 0.5) * s ** (0.5 - H) * (t - s) ** (H - 1.5) * t ** (H - 0.5)
            )

    def _dt_diag(self, s):
        raise SingularDiagonal("dK/dt is not finite on the diagonal for FBm")

    def diag(self, s):
        return np.zeros_like(np.asarray(s, float))

    def variance(self, t):
        return np.asarray(t, float) ** (2 * self.H)

    def norm_constants(self, T):
        return 0.0, math.sqrt(fbm_k1_squared(self.H, T))

    def to_dict(self):
        return {"type": self.tag, "H": self.H}


class Rho(KernelSpec):
    """``K(t, s) = rho((t - s)^alpha)`` for ``s <= t``.

    ``rho`` is an expression in ``x`` (parsed with sympy) or a callable; a
    callable may come with its derivative ``drho``, otherwise a central
    difference is used.  ``monotone`` is ``"increasing"`` or
    ``"decreasing"`` and is required by :func:`norm_bound`.
    """

    tag = "rho"

    def __init__(self, rho, alpha: float = 1.0, monotone: str | None = None, drho=None):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if monotone not in (None, "increasing", "decreasing"):
            raise ValueError("monotone must be 'increasing' or 'decreasing'")
        self.alpha = float(alpha)
        self.monotone = monotone
        self.expr = rho if isinstance(rho, str) else None
        if isinstance(rho, str):
            import sympy

            x = sympy.Symbol("x")
            e = sympy.sympify(rho)
            self._rho = sympy.lambdify(x, e, "numpy")
            self._drho = sympy.lambdify(x, sympy.diff(e, x), "numpy")
        else:
            self._rho = rho
            self._drho = drho

    def rho(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.asarray(self._rho(x), float), x.shape).copy()

    def drho(self, x):
        x = np.asarray(x, float)
        if self._drho is not None:
            return np.broadcast_to(np.asarray(self._drho(x), float), x.shape).copy()
        d = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self.rho(x + d) - self.rho(np.maximum(x - d, 0.0))) / (x + d - np.maximum(x - d, 0.0))

    def _eval(self, t, s):
        return self.rho((t - s) ** self.alpha)

    def _dt(self, t, s):
        u = t - s
        a = self.alpha
        return self.drho(u**a) * a * u ** (a - 1)

    def diag(self, s):
        s = np.asarray(s, float)
        return np.full(s.shape, float(self.rho(0.0)))

    def norm_constants(self, T):
        if self.monotone is None:
            raise HypothesesUnverifiable(
                "declare monotone='increasing' or 'decreasing' for this kernel"
            )
        r0 = float(self.rho(0.0))
        rT = float(self.rho(T**self.alpha))
        if self.monotone == "decreasing":
            k1sq = r0 * (r0 - rT)
        else:
            k1sq = rT * (rT - r0)
        return r0, math.sqrt(max(k1sq, 0.0))

    def to_dict(self):
        if self.expr is None:
            return {"type": self.tag, "rho": repr(self._rho), "alpha": self.alpha, "monotone": self.monotone}
        return {"type": self.tag, "rho": self.expr, "alpha": self.alpha, "monotone": self.monotone}


class OUStable(Rho):
    """``K(t, s) = exp(-b (t - s))``: the mean-reverting Ornstein-Uhlenbeck process."""

    tag = "ou_stable"

    def __init__(self, b: float):
        if not b > 0:
            raise ValueError("b must be positive")
        self.b = float(b)
        super().__init__(
            lambda x: np.exp(-self.b * x), 1.0, "decreasing", lambda x: -self.b * np.exp(-self.b * x)
        )

    def variance(self, t):
        return -np.expm1(-2 * self.b * np.asarray(t, float)) / (2 * self.b)

    def to_dict(self):
        return {"type": self.tag, "b": self.b}


class OUUnstable(Rho):
    """``K(t, s) = exp(b (t - s))``: the explosive Ornstein-Uhlenbeck process."""

    tag = "ou_unstable"

    def __init__(self, b: float):
        if not b > 0:
            raise ValueError("b must be positive")
        self.b = float(b)
        super().__init__(
            lambda x: np.exp(self.b * x), 1.0, "increasing", lambda x: self.b * np.exp(self.b * x)
        )

    def variance(self, t):
        return np.expm1(2 * self.b * np.asarray(t, float)) / (2 * self.b)

    def to_dict(self):
        return {"type": self.tag, "b": self.b}


_KERNELS = {
    "wiener": lambda d: Wiener(),
    "fbm": lambda d: FBm(d["H"]),
    "ou_stable": lambda d: OUStable(d["b"]),
    "ou_unstable": lambda d: OUUnstable(d["b"]),
    "rho": lambda d: Rho(d["rho"], d.get("alpha", 1.0), d.get("monotone")),
}


def kernel_from_dict(d: dict) -> KernelSpec:
    """Build a kernel from ``{"type": "fbm", "H": 0.75}``-style config."""
    try:
        kind = d["type"].lower()
        return _KERNELS[kind](d)
    except KeyError as exc:
        raise ValueError(f"bad kernel description {d!r}: missing {exc}") from None


def kernel_eval(spec: KernelSpec, t, s):
    return spec.eval(t, s)


def kernel_dt(spec: KernelSpec, t, s):
    return spec.dt(t, s)


def kernel_diag(spec: KernelSpec, s):
    d = spec.diag(s)
    return d if np.ndim(d) else float(d)


# ---------------------------------------------------------------------------
# the operator K*


def kstar_step(spec: KernelSpec, breakpoints, levels, s):
    """``K* f`` at points ``s`` for ``f = sum_i a_i 1_(s_i, s_i+1]``.

    Exact: on ``(s_j, s_j+1]`` the value is
    ``a_j K(s_j+1, s) + sum_{k > j} a_k (K(s_k+1, s) - K(s_k, s))``.
    """
    b = np.asarray(breakpoints, float)
    a = np.asarray(levels, float)
    if len(b) != len(a) + 1 or np.any(np.diff(b) <= 0):
        raise ValueError("need increasing breakpoints, one more than levels")
    s = np.asarray(s, float)
    out = np.zeros(s.shape)
    for k in range(len(a)):
        upper = spec.eval(b[k + 1], s)
        lower = spec.eval(b[k], s)
        # the piece K(s_k, s) vanishes for s in (s_k, s_k+1] by non-anticipation
        out += a[k] * np.where(s <= b[k + 1], upper - np.where(s <= b[k], lower, 0.0), 0.0)
    return out


def kstar_build(spec: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Matrix of ``K*`` acting on cell values, sampled at cell midpoints."""
    c = grid.midpoints
    nodes = grid.nodes
    Kv = spec.eval(nodes[None, 1:], c[:, None])  # K(t_{j+1}, c_i)
    A = np.triu(Kv)
    A[:, 1:] -= np.triu(Kv[:, :-1], k=0)
    return A


def operator_norm(A: np.ndarray, maxiter: int = 200, rtol: float = 1e-10) -> float:
    """Spectral norm by power iteration on ``A^T A``."""
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    lam = 0.0
    for _ in range(maxiter):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= rtol * new:
            lam = new
            break
        lam = new
    return math.sqrt(lam)


class NormBound(NamedTuple):
    K0: float
    K1: float
    bound: float

    @property
    def kappa(self) -> float:
        """The norm bound ``K0 + K1`` itself."""
        return self.K0 + self.K1


def norm_bound(spec: KernelSpec, T: float) -> NormBound:
    """Constants with ``||K*||^2 <= (K0 + K1)^2``; ``bound`` is the squared value."""
    K0, K1 = spec.norm_constants(T)
    return NormBound(K0, K1, (K0 + K1) ** 2)


# ---------------------------------------------------------------------------
# covariance


def _jacobi_rule(q: int, a: float, b: float, e_left: float, e_right: float):
    """Nodes and weights for ``int_a^b g(x) (x-a)^e_left (b-x)^e_right dx``."""
    x, w = special.roots_jacobi(q, e_right, e_left)
    half = 0.5 * (b - a)
    return a + half * (x + 1), w * half ** (1 + e_left + e_right)


def _cell_rule(spec: KernelSpec, breaks: np.ndarray, e_top: float, q: int):
    """Quadrature points and weights over ``[0, breaks[-1]]`` cut at ``breaks``.

    End cells use Gauss-Jacobi rules when the integrand has power-type
    behaviour there; the returned weights already include the power factor
    so the caller only evaluates the integrand.
    """
    e0 = 2 * spec.s_exponent
    x, w = special.roots_legendre(q)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    pts = a[:, None] + half[:, None] * (x[None, :] + 1)
    wts = half[:, None] * w[None, :]
    pts, wts = pts.copy(), wts.copy()
    ncell = len(a)
    specials = []
    if e0 != 0 or e_top != 0:
        if ncell == 1:
            specials.append((0, e0, e_top))
        else:
            if e0 != 0:
                specials.append((0, e0, 0.0))
            if e_top != 0:
                specials.append((ncell - 1, 0.0, e_top))
    for c, el, er in specials:
        p, ww = _jacobi_rule(q, a[c], b[c], el, er)
        # fold the power weight back into the integrand convention
        wts[c] = ww / ((p - a[c]) ** el * (b[c] - p) ** er)
        pts[c] = p
    return pts.ravel(), wts.ravel()


def covariance(spec: KernelSpec, grid: TimeGrid, t: float, s: float, q: int = 8) -> float:
    """``R(t, s) = int_0^min(t,s) K(t, u) K(s, u) du`` by composite Gauss rules."""
    u = min(t, s)
    if u <= 0:
        return 0.0
    nodes = grid.nodes
    breaks = np.concatenate([nodes[nodes < u], [u]])
    e_top = spec.diag_exponent * ((t == u) + (s == u))
    pts, wts = _cell_rule(spec, breaks, e_top, q)
    return float(np.sum(wts * spec.eval(t, pts) * spec.eval(s, pts)))


def covariance_matrix(spec: KernelSpec, grid: TimeGrid, q: int = 8) -> np.ndarray:
    """Gram matrix ``[R(t_i, t_j)]`` over the grid nodes.

    Built as ``L W L^T`` from one shared quadrature, so it is symmetric and
    positive semidefinite by construction.
    """
    pts, wts = _cell_rule(spec, grid.nodes, 0.0, q)
    L = spec.eval(grid.nodes[:, None], pts[None, :])
    return (L * wts) @ L.T


def variance(spec: KernelSpec, grid: TimeGrid, t=None):
    """``R(t, t)`` at ``t`` (default: every node), closed form when known."""
    t = grid.nodes if t is None else np.asarray(t, float)
    closed = spec.variance(t)
    if closed is not None:
        return closed
    flat = np.atleast_1d(t)
    out = np.array([covariance(spec, grid, x, x) for x in flat])
    return out.reshape(np.shape(t)) if np.ndim(t) else float(out[0])


def kappa_lower_bound(spec: KernelSpec, grid: TimeGrid) -> float:
    """``sup_t R(t, t) / t``, a lower bound for ``||K*||^2``."""
    t = grid.nodes[1:]
    R = np.array([covariance(spec, grid, x, x) for x in t])
    return float(np.max(R / t))


# ---------------------------------------------------------------------------
# basis and the field model


def cosine_basis(k: int, grid: TimeGrid | None = None, t=None):
    """``m_1 = 1/sqrt(T)``, ``m_k(t) = sqrt(2/T) cos(pi (k-1) t / T)``.

    Evaluated at ``t`` if given, otherwise at the grid nodes.
    """
    if k < 1:
        raise ValueError("k starts at 1")
    if t is None:
        t = grid.nodes
    T = grid.T if grid is not None else 1.0
    t = np.asarray(t, float)
    if k == 1:
        return np.full(t.shape, 1 / math.sqrt(T))
    return math.sqrt(2 / T) * np.cos(math.pi * (k - 1) * t / T)


@dataclass(frozen=True, eq=False)
class FieldModel:
    """A kernel on a grid truncated to ``basis_dim`` cosine modes.

    ``sigma`` (constant or callable of ``t``) weights the field, giving the
    process ``int_0^t sigma dX``: the rates become ``sigma * K m_k``.
    """

    kernel: KernelSpec
    grid: TimeGrid = field(default_factory=TimeGrid)
    basis_dim: int = 64
    sigma: float | Callable | None = None

    @cached_property
    def kstar_matrix(self) -> np.ndarray:
        return kstar_build(self.kernel, self.grid)

    @cached_property
    def basis(self) -> np.ndarray:
        """``m_k`` at the cell midpoints, shape ``(K, n)``."""
        c = self.grid.midpoints
        return np.stack([cosine_basis(k, self.grid, c) for k in range(1, self.basis_dim + 1)])

    @cached_property
    def sigma_cells(self) -> np.ndarray:
        c = self.grid.midpoints
        if self.sigma is None:
            return np.ones_like(c)
        if callable(self.sigma):
            return np.broadcast_to(np.asarray(self.sigma(c), float), c.shape).copy()
        return np.full_like(c, float(self.sigma))

    @cached_property
    def mtilde(self) -> np.ndarray:
        """Rates ``sigma * (K m_k)`` on the cells, shape ``(K, n)``."""
        return (self.basis @ self.kstar_matrix) * self.sigma_cells

    @cached_property
    def Mtilde(self) -> np.ndarray:
        """``M~_k(t_i) = int_0^t_i m~_k``, shape ``(K, n + 1)``."""
        out = np.zeros((self.basis_dim, self.grid.n + 1))
        np.cumsum(self.mtilde * self.grid.h, axis=1, out=out[:, 1:])
        return out

    def variance(self, t=None):
        """``R_sigma(t, t)`` of the weighted process at ``t`` (default: nodes).

        Constant weights use the kernel's variance directly; variable
        weights fall back to quadrature of ``(int sigma K)^2``.
        """
        t = self.grid.nodes if t is None else np.asarray(t, float)
        if self.sigma is None or not callable(self.sigma):
            s2 = 1.0 if self.sigma is None else float(self.sigma) ** 2
            return s2 * variance(self.kernel, self.grid, t)
        return self._weighted_variance(t)

    def _weighted_variance(self, t):
        flat = np.atleast_1d(t)
        out = np.empty(len(flat))
        for i, x in enumerate(flat):
            if x <= 0:
                out[i] = 0.0
                continue
            nodes = self.grid.nodes
            breaks = np.concatenate([nodes[nodes < x], [x]])
            pts, wts = _cell_rule(self.kernel, breaks, 0.0, 8)
            # int_0^x sigma(r) dX(r) = int_0^x (int_u^x sigma(r) K(dr, u)) dW(u)
            G = _weighted_kernel(self.kernel, self.sigma, x, pts)
            out[i] = float(np.sum(wts * G**2))
        return out.reshape(np.shape(t)) if np.ndim(t) else float(out[0])

    def summed_Mtilde_squared(self) -> np.ndarray:
        return np.sum(self.Mtilde**2, axis=0)


def _weighted_kernel(spec: KernelSpec, sigma, x: float, u: np.ndarray, q: int = 64) -> np.ndarray:
    """``sigma(u) K(u+, u) + int_u^x sigma(r) dK(r, u)/dr dr`` by Gauss-Legendre."""
    e = spec.diag_exponent - 1 if spec.diag_exponent else 0.0
    r, w = special.roots_jacobi(q, 0.0, e)
    lo = u[:, None]
    half = 0.5 * (x - lo)
    rr = lo + half * (r[None, :] + 1)
    # Jacobi weight absorbs (r - u)^e; divide it back out of dK/dt
    vals = np.asarray(sigma(rr), float) * spec.dt(rr, np.broadcast_to(lo, rr.shape))
    vals = vals / (rr - lo) ** e
    return np.asarray(sigma(u), float) * spec.diag(u) + np.sum(half ** (1 + e) * w * vals, axis=1)


def mtilde_build(model: FieldModel) -> np.ndarray:
    """``M~_k`` at the grid nodes, shape ``(K, n + 1)``."""
    return model.Mtilde
