# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagator sweeps; see ``_pykernels`` for the contract."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def sode_march(const int[:, ::1] parent, const int[:, ::1] slot, const double[:, ::1] coef,
               const long long[::1] grade_ptr, const double[:, ::1] mt, double h,
               const long long[::1] store):
    cdef Py_ssize_t n_idx = parent.shape[0], P = parent.shape[1]
    cdef Py_ssize_t n = mt.shape[1], N = grade_ptr.shape[0] - 2
    cdef Py_ssize_t n_store = store.shape[0]
    snaps_np = np.zeros((n_store, n_idx))
    energy_np = np.zeros((n + 1, N + 1))
    old_np = np.zeros(n_idx)
    u_np = np.zeros(n_idx)
    cdef double[:, ::1] snaps = snaps_np
    cdef double[:, ::1] energy = energy_np
    cdef double[::1] old = old_np
    cdef double[::1] u = u_np
    cdef Py_ssize_t i, a, p, g, si = 0, par
    cdef double half = 0.5 * h, acc, c, e
    u[0] = 1.0
    with nogil:
        for i in range(n + 1):
            if i > 0:
                old[:] = u
                for a in range(1, n_idx):
                    acc = 0.0
                    for p in range(P):
                        c = coef[a, p]
                        if c == 0.0:
                            break
                        par = parent[a, p]
                        acc = acc + c * mt[slot[a, p], i - 1] * (old[par] + u[par])
                    u[a] = old[a] + half * acc
            for g in range(N + 1):
                e = 0.0
                for a in range(grade_ptr[g], grade_ptr[g + 1]):
                    e = e + u[a] * u[a]
                energy[i, g] = e
            while si < n_store and store[si] == i:
                snaps[si, :] = u
                si += 1
    return snaps_np, energy_np


def spde_march(const int[:, ::1] parent, const int[:, ::1] slot, const double[:, ::1] coef,
               const long long[::1] grade_ptr, const double[:, ::1] mt,
               const double complex[:, ::1] Pm, const double complex[:, ::1] Qm,
               const double complex[:, ::1] Rm, const double complex[:, ::1] Mhat,
               const int[::1] field_of_slot, ghat, fhat, const double complex[::1] u0,
               const double[::1] wH, const double[::1] wX, const long long[::1] store):
    cdef Py_ssize_t n_idx = parent.shape[0], P = parent.shape[1]
    cdef Py_ssize_t n = mt.shape[1], N = grade_ptr.shape[0] - 2, J = u0.shape[0]
    cdef Py_ssize_t n_store = store.shape[0]
    cdef bint has_g = ghat is not None, has_f = fhat is not None
    cdef const double complex[:, :, ::1] gv
    cdef const double complex[:, ::1] fv
    if has_g:
        gv = np.ascontiguousarray(ghat, dtype=complex)
    if has_f:
        fv = np.ascontiguousarray(fhat, dtype=complex)
    snaps_np = np.zeros((n_store, n_idx, J), complex)
    EH_np = np.zeros((n + 1, N + 1))
    EX_np = np.zeros((n + 1, N + 1))
    u_np = np.zeros((n_idx, J), complex)
    old_np = np.zeros((n_idx, J), complex)
    F0_np = np.zeros(J, complex)
    F1_np = np.zeros(J, complex)
    cdef double complex[:, :, ::1] snaps = snaps_np
    cdef double[:, ::1] EH = EH_np
    cdef double[:, ::1] EX = EX_np
    cdef double complex[:, ::1] u = u_np
    cdef double complex[:, ::1] old = old_np
    cdef double complex[::1] F0 = F0_np
    cdef double complex[::1] F1 = F1_np
    cdef Py_ssize_t i, a, p, g, j, si = 0, par, l
    cdef double c, w, sq, eh, ex
    cdef double complex z
    u[0, :] = u0
    with nogil:
        for i in range(n + 1):
            if i > 0:
                old[:, :] = u
                for j in range(J):
                    z = Pm[i - 1, j] * old[0, j]
                    if has_f:
                        z = z + Qm[i - 1, j] * fv[i - 1, j] + Rm[i - 1, j] * fv[i, j]
                    u[0, j] = z
                for a in range(1, n_idx):
                    for j in range(J):
                        F0[j] = 0.0
                        F1[j] = 0.0
                    for p in range(P):
                        c = coef[a, p]
                        if c == 0.0:
                            break
                        par = parent[a, p]
                        l = field_of_slot[slot[a, p]]
                        w = c * mt[slot[a, p], i - 1]
                        for j in range(J):
                            if has_g and par == 0:
                                F0[j] = F0[j] + w * (Mhat[l, j] * old[par, j] + gv[l, i - 1, j])
                                F1[j] = F1[j] + w * (Mhat[l, j] * u[par, j] + gv[l, i, j])
                            else:
                                F0[j] = F0[j] + w * (Mhat[l, j] * old[par, j])
                                F1[j] = F1[j] + w * (Mhat[l, j] * u[par, j])
                    for j in range(J):
                        u[a, j] = Pm[i - 1, j] * old[a, j] + Qm[i - 1, j] * F0[j] + Rm[i - 1, j] * F1[j]
            for g in range(N + 1):
                eh = 0.0
                ex = 0.0
                for j in range(J):
                    sq = 0.0
                    for a in range(grade_ptr[g], grade_ptr[g + 1]):
                        sq = sq + u[a, j].real * u[a, j].real + u[a, j].imag * u[a, j].imag
                    eh = eh + sq * wH[j]
                    ex = ex + sq * wX[j]
                EH[i, g] = eh
                EX[i, g] = ex
            while si < n_store and store[si] == i:
                snaps[si, :, :] = u
                si += 1
    return snaps_np, EH_np, EX_np
