import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chaoskit.errors import GridMismatch
from chaoskit.gaussian_field import FBm, FieldModel, OUStable, TimeGrid, Wiener
from chaoskit.hermite_chaos import ChaosVector, wick_product
from chaoskit.multiindex import IndexSet, MultiIndex, TruncationSpec
from chaoskit.skorokhod import (
    associated_process,
    check_integrability,
    deterministic_integrand,
    skorokhod_integral,
    stratonovich_integral,
    trace_term,
)

G = TimeGrid(1.0, 256)
WIENER = FieldModel(Wiener(), G, 16)


def coeffs_on(F, tr):
    return np.array([F.coefficient(a) for a in IndexSet.from_truncation(tr)])


def test_constant_integrand_gives_associated_process():
    one = deterministic_integrand(np.ones(G.n + 1), G, 16)
    run = skorokhod_integral(one, WIENER, running=True)
    W = associated_process(WIENER)
    tr = TruncationSpec(1, 16)
    np.testing.assert_allclose(coeffs_on(run, tr), coeffs_on(W, tr), atol=1e-14)
    assert run.coefficient(MultiIndex.unit(1))[-1] == pytest.approx(1.0)


def test_integral_of_w_is_half_wick_square():
    m = FieldModel(Wiener(), TimeGrid(1.0, 512), 64)
    W = associated_process(m)
    got = skorokhod_integral(W, m)
    W1 = ChaosVector.from_dict(W.at(m.grid.n).to_dict(), TruncationSpec(2, 64))
    half_sq = wick_product(W1, W1).scale(0.5)
    tr = TruncationSpec(2, 64)
    np.testing.assert_allclose(coeffs_on(got, tr), coeffs_on(half_sq, tr), atol=1e-3)
    assert got.mean() == 0.0


def test_isometry_for_deterministic_integrand():
    g = TimeGrid(1.0, 512)
    m = FieldModel(OUStable(1.0), g, 64)
    f = np.cos(2 * g.nodes) + g.nodes
    res = skorokhod_integral(deterministic_integrand(f, g, 64), m)
    fc = np.cos(2 * g.midpoints) + g.midpoints
    ref = g.h * np.sum((m.kstar_matrix @ fc) ** 2)
    assert res.second_moment() == pytest.approx(ref, rel=1e-2)


def test_upto_and_running_agree():
    W = associated_process(WIENER)
    run = skorokhod_integral(W, WIENER, running=True)
    half = skorokhod_integral(W, WIENER, upto=0.5)
    np.testing.assert_allclose(run.coeffs[:, 128], half.coeffs)
    with pytest.raises(GridMismatch):
        skorokhod_integral(W, WIENER, upto=0.5 + 1e-3)


def test_output_order_grows_by_one():
    tr = TruncationSpec(2, 16, 1)
    eta = ChaosVector.from_dict({MultiIndex({1: 2}): np.ones(G.n + 1)}, tr, G)
    out = skorokhod_integral(eta, WIENER)
    assert out.truncation == TruncationSpec(3, 16, 2)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linear(a, b):
    W = associated_process(WIENER)
    one = deterministic_integrand(np.exp(-G.nodes), G, 16)
    one = ChaosVector(W.indices, np.vstack([one.coeffs, np.zeros((16, G.n + 1))]), W.truncation, G)
    lhs = skorokhod_integral(W.scale(a) + one.scale(b), WIENER)
    rhs = skorokhod_integral(W, WIENER).scale(a) + skorokhod_integral(one, WIENER).scale(b)
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)


def test_grid_mismatch():
    other = FieldModel(Wiener(), TimeGrid(1.0, 128), 16)
    with pytest.raises(GridMismatch):
        skorokhod_integral(associated_process(WIENER), other)
    with pytest.raises(GridMismatch):
        deterministic_integrand(np.ones(5), G)
    narrow = FieldModel(Wiener(), G, 4)
    with pytest.raises(GridMismatch):
        skorokhod_integral(associated_process(WIENER), narrow)


class TestStratonovich:
    def test_deterministic_equals_skorokhod(self):
        f = deterministic_integrand(np.sin(3 * G.nodes), G, 16)
        a = stratonovich_integral(f, WIENER)
        b = skorokhod_integral(f, WIENER)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        assert a.dropped_mass == 0.0

    def test_w_gives_half_square(self):
        m = FieldModel(Wiener(), TimeGrid(1.0, 512), 64)
        W = associated_process(m)
        res = stratonovich_integral(W, m)
        # int W o dW = W(1)^2 / 2: mean 1/2, the rest as for the Skorokhod integral
        assert res.mean() == pytest.approx(0.5, abs=2e-3)
        sk = skorokhod_integral(W, m)
        tr = TruncationSpec(2, 64)
        diff = coeffs_on(res, tr) - coeffs_on(sk, tr)
        assert np.all(diff[1:] == 0)
        assert res.dropped_mass == pytest.approx(m.grid.h * np.sum(W.coeffs[1:] ** 2))

    def test_trace_term_of_w(self):
        W = associated_process(WIENER)
        coeffs, top = trace_term(W, WIENER)
        # sum_k int_0^1 M~_k m~_k = sum_k M~_k(1)^2 / 2
        assert coeffs[0] == pytest.approx(0.5 * np.sum(WIENER.Mtilde[:, -1] ** 2), rel=1e-9)
        assert top > 0


class TestIntegrability:
    def test_deterministic_is_zero(self):
        r = check_integrability(deterministic_integrand(np.ones(G.n + 1), G))
        assert r["sum"] == 0.0 and r["tail_fraction"] == 0.0

    def test_w_half(self):
        m = FieldModel(Wiener(), TimeGrid(1.0, 512), 64)
        assert check_integrability(associated_process(m))["sum"] == pytest.approx(0.5, rel=1e-2)

    def test_divergent_family_flags_tail(self):
        N = 8
        tr = TruncationSpec(N, 1)
        d = {MultiIndex({1: n}): np.full(G.n + 1, 1 / math.sqrt(n)) for n in range(1, N + 1)}
        r = check_integrability(ChaosVector.from_dict(d, tr, G))
        assert r["tail_fraction"] > 0.1
        np.testing.assert_allclose(r["by_grade"][1:], 1.0)
