"""NumPy reference implementations of the propagator sweeps.

Both sweeps march the lower-triangular propagator system forward in time,
one grid cell per step, updating multi-indices grade by grade so that the
parents of an index are already advanced when it is reached.  The compiled
module ``_ckernels`` implements the same functions with identical
arithmetic order per coefficient.

Common arguments
----------------
parent, slot : int32 (n_idx, P)
    Row of ``alpha - e_k`` and the 0-based flattened slot ``k``.
coef : float64 (n_idx, P)
    ``sqrt(alpha_k)``; zero marks an unused entry.
grade_ptr : int64 (N + 2,)
    Start of every grade in the graded ordering; row 0 is the root.
mt : float64 (S, n)
    Cell rates ``m~_k`` per flattened slot.
store : int64 (n_store,)
    Nodes at which the full coefficient vector is copied out.
"""
from __future__ import annotations

import numpy as np


def _grade_blocks(parent, slot, coef, grade_ptr):
    blocks = []
    for g in range(1, len(grade_ptr) - 1):
        a, b = int(grade_ptr[g]), int(grade_ptr[g + 1])
        if b > a:
            blocks.append((g, a, b, parent[a:b], slot[a:b], coef[a:b]))
    return blocks


def sode_march(parent, slot, coef, grade_ptr, mt, h, store):
    """Running-trapezoid sweep of ``u_a' = sum_k sqrt(a_k) u_(a-e_k) m~_k``, ``u_0 = 1``.

    Returns ``(snapshots (n_store, n_idx), energy (n + 1, N + 1))`` where
    ``energy[i, g]`` is the sum of squared grade-``g`` coefficients at node ``i``.
    """
    n_idx = parent.shape[0]
    n = mt.shape[1]
    N = len(grade_ptr) - 2
    blocks = _grade_blocks(parent, slot, coef, grade_ptr)
    snaps = np.zeros((len(store), n_idx))
    energy = np.zeros((n + 1, N + 1))
    u = np.zeros(n_idx)
    u[0] = 1.0
    si = 0

    def record(i, si):
        energy[i, 0] = u[0] ** 2
        for g, a, b, *_ in blocks:
            energy[i, g] = np.dot(u[a:b], u[a:b])
        while si < len(store) and store[si] == i:
            snaps[si] = u
            si += 1
        return si

    si = record(0, si)
    half = 0.5 * h
    for i in range(n):
        old = u.copy()
        rate = mt[:, i]
        for g, a, b, par, sl, cf in blocks:
            w = cf * rate[sl]
            u[a:b] = old[a:b] + half * np.sum(w * (old[par] + u[par]), axis=1)
        si = record(i + 1, si)
    return snaps, energy


def spde_march(
    parent, slot, coef, grade_ptr, mt, P, Q, R, Mhat, field_of_slot, ghat, fhat, u0, wH, wX, store
):
    """Per-Fourier-mode sweep of the evolution propagator.

    Each coefficient solves ``u' = lam u + F`` with
    ``F_a = sum sqrt(a_k) m~_k (M_l u_(a-e_k) + g_l 1[a - e_k = 0])`` and
    ``F_0 = f``; one step is ``u+ = P u + Q F + R F+``.

    Shapes: ``P, Q, R`` (n, J); ``Mhat`` (L, J); ``ghat`` (L, n + 1, J) or
    None; ``fhat`` (n + 1, J) or None; ``u0`` (J,); ``wH, wX`` (J,).
    Returns ``(snapshots (n_store, n_idx, J), EH, EX)`` with energies of
    shape ``(n + 1, N + 1)``.
    """
    n_idx = parent.shape[0]
    n = mt.shape[1]
    J = u0.shape[0]
    N = len(grade_ptr) - 2
    blocks = _grade_blocks(parent, slot, coef, grade_ptr)
    snaps = np.zeros((len(store), n_idx, J), complex)
    EH = np.zeros((n + 1, N + 1))
    EX = np.zeros((n + 1, N + 1))
    u = np.zeros((n_idx, J), complex)
    u[0] = u0
    fl = field_of_slot
    si = 0

    def record(i, si):
        sq = (u.real**2 + u.imag**2)
        EH[i, 0] = sq[0] @ wH
        EX[i, 0] = sq[0] @ wX
        for g, a, b, *_ in blocks:
            s = sq[a:b].sum(axis=0)
            EH[i, g] = s @ wH
            EX[i, g] = s @ wX
        while si < len(store) and store[si] == i:
            snaps[si] = u
            si += 1
        return si

    def forcing(vals, par, sl, cf, rate, i):
        w = (cf * rate[sl])[:, :, None]
        out = Mhat[fl[sl]] * vals[par]
        if ghat is not None:
            out = out + (par == 0)[:, :, None] * ghat[fl[sl], i]
        return np.sum(w * out, axis=1)

    si = record(0, si)
    for i in range(n):
        old = u.copy()
        rate = mt[:, i]
        u[0] = P[i] * old[0]
        if fhat is not None:
            u[0] += Q[i] * fhat[i] + R[i] * fhat[i + 1]
        for g, a, b, par, sl, cf in blocks:
            F0 = forcing(old, par, sl, cf, rate, i)
            F1 = forcing(u, par, sl, cf, rate, i + 1)
            u[a:b] = P[i] * old[a:b] + Q[i] * F0 + R[i] * F1
        si = record(i + 1, si)
    return snaps, EH, EX
