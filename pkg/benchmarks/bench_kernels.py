"""Compiled versus NumPy propagator sweeps.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Prints one line per case with the best wall time of each backend, the
speed-up and the largest difference between their outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from chaoskit import _backend
from chaoskit.evolution_sode import SodeProblem, prepare_tables
from chaoskit.evolution_spde import HeatProblem, SpatialGrid, _step_coefficients, forward_difference_symbol
from chaoskit.gaussian_field import FBm, FieldModel, TimeGrid, Wiener
from chaoskit.multiindex import IndexSet, TruncationSpec


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def sode_case(kernel, N, K, n):
    model = FieldModel(kernel, TimeGrid(1.0, n), K)
    idx = IndexSet.from_truncation(TruncationSpec(N, K))
    par, slot, coef, gptr = prepare_tables(idx)
    mt = np.ascontiguousarray(SodeProblem(model).mtilde)
    store = np.array([n], np.int64)
    label = f"sode  {kernel!r:<14} N={N} K={K} n={n} ({len(idx)} indices)"
    return label, lambda k: k.sode_march(par, slot, coef, gptr, mt, model.grid.h, store)


def spde_case(N, K, n, nx):
    hp = HeatProblem(1.0, 1.0, Wiener(), TimeGrid(1.0, n), SpatialGrid(20.0, nx), basis_dim=K)
    p = hp.to_evolution()
    idx = IndexSet.from_truncation(TruncationSpec(N, K))
    par, slot, coef, gptr = prepare_tables(idx)
    u0h = np.fft.rfft(p.u0)
    modes = np.nonzero(np.abs(u0h) > 1e-14 * np.abs(u0h).max())[0]
    lam = p.A_symbols()[:, modes]
    P, Q, R = (np.ascontiguousarray(x, complex) for x in _step_coefficients(lam, p.grid.h))
    Mh = np.ascontiguousarray(p.M_symbols()[:, modes], complex)
    mt = np.ascontiguousarray(p.fields[0].mtilde)
    fos = np.zeros(K, np.int32)
    wH = np.ascontiguousarray(p.space.mode_weights()[modes])
    wX = np.ascontiguousarray(wH * (1 + forward_difference_symbol(p.space)[modes]))
    u0 = np.ascontiguousarray(u0h[modes], complex)
    store = np.array([n], np.int64)
    label = f"spde  heat           N={N} K={K} n={n} ({len(idx)} indices, {len(modes)} modes)"
    return label, lambda k: k.spde_march(par, slot, coef, gptr, mt, P, Q, R, Mh, fos, None, None, u0, wH, wX, store)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        ck = _backend.get("cython")
    except ImportError:
        ck = None
    py = _backend.get("python")
    cases = [
        sode_case(Wiener(), 4, 16, 512),
        sode_case(FBm(0.75), 4, 32, 512),
        sode_case(Wiener(), 6, 16, 256),
        spde_case(3, 8, 64, 64),
        spde_case(4, 16, 128, 128),
    ]
    print(f"{'case':<66} {'numpy [s]':>10} {'cython [s]':>11} {'speed-up':>9} {'max diff':>9}")
    for label, fn in cases:
        tp, op = _best(lambda: fn(py), args.repeat)
        if ck is None:
            print(f"{label:<66} {tp:>10.4f} {'n/a':>11}")
            continue
        tc, oc = _best(lambda: fn(ck), args.repeat)
        diff = max(float(np.max(np.abs(a - b))) if a.size else 0.0 for a, b in zip(op, oc))
        print(f"{label:<66} {tp:>10.4f} {tc:>11.4f} {tp / tc:>8.1f}x {diff:>9.1e}")


if __name__ == "__main__":
    main()
