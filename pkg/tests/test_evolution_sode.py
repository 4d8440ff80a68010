import math

import numpy as np
import pytest

from chaoskit.errors import UnsupportedField
from chaoskit.evolution_sode import SodeProblem, closed_form, dolean_comparison, propagate, solve_propagator
from chaoskit.gaussian_field import FBm, FieldModel, OUStable, TimeGrid, Wiener
from chaoskit.multiindex import IndexSet, MultiIndex, TruncationSpec

G = TimeGrid(1.0, 256)


def test_no_noise_is_deterministic():
    m = FieldModel(OUStable(1.0), G, 4, sigma=0.0)
    p = SodeProblem(m, drift=0.7, u0=2.0)
    res = propagate(p, TruncationSpec(3, 4), store="final")
    assert res.vector.mean() == pytest.approx(2 * math.exp(0.7), rel=1e-14)
    assert np.all(res.vector.coeffs[1:] == 0)


def test_first_order_coefficients_are_Mtilde():
    m = FieldModel(Wiener(), G, 8)
    u = solve_propagator(SodeProblem(m), TruncationSpec(2, 8))
    for k in range(1, 9):
        np.testing.assert_allclose(u.coefficient(MultiIndex.unit(k)), m.Mtilde[k - 1], atol=1e-14)


@pytest.mark.parametrize("kernel", [Wiener(), FBm(0.75), OUStable(1.0)])
def test_propagator_matches_closed_form(kernel):
    m = FieldModel(kernel, TimeGrid(1.0, 512), 8)
    tr = TruncationSpec(4, 8)
    a = solve_propagator(SodeProblem(m), tr)
    b = closed_form(SodeProblem(m), tr)
    np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-4)


def test_mean_is_exact_with_drift():
    m = FieldModel(Wiener(), G, 8)
    p = SodeProblem(m, drift=lambda t: 1 + np.cos(t), u0=1.5)
    res = propagate(p, TruncationSpec(3, 8), store="all")
    # the cumulative trapezoid of a smooth drift is accurate to O(h^2)
    ref = 1.5 * np.exp(G.nodes + np.sin(G.nodes))
    np.testing.assert_allclose(res.mean, ref, rtol=1e-5)
    np.testing.assert_allclose(res.vector.mean(), res.mean, rtol=1e-14)


def test_second_moment_converges_to_lognormal():
    m = FieldModel(Wiener(), TimeGrid(1.0, 512), 64)
    res = propagate(SodeProblem(m), TruncationSpec(8, 64, 2), store="none")
    assert res.second_moment[256] == pytest.approx(math.exp(0.5), rel=0.02)
    assert res.second_moment[-1] == pytest.approx(math.e, rel=0.02)


def test_two_fields():
    a = FieldModel(Wiener(), G, 4)
    b = FieldModel(Wiener(), G, 4)
    res = propagate(SodeProblem([a, b]), TruncationSpec(10, 8, 2), store="final")
    assert res.second_moment[-1] == pytest.approx(math.exp(2.0), rel=1e-3)


def test_store_modes():
    p = SodeProblem(FieldModel(Wiener(), G, 4))
    tr = TruncationSpec(2, 4)
    full = propagate(p, tr, store="all")
    some = propagate(p, tr, store=[0, 100, 256])
    np.testing.assert_array_equal(some.vector.coeffs, full.vector.coeffs[:, [0, 100, 256]])
    with pytest.raises(ValueError):
        propagate(p, tr, store="sometimes")
    with pytest.raises(ValueError):
        propagate(p, tr, store=[300])
    with pytest.raises(ValueError):
        propagate(p, TruncationSpec(2, 5))


def test_explicit_index_set():
    p = SodeProblem(FieldModel(Wiener(), G, 4))
    tr = TruncationSpec(3, 4)
    idx = IndexSet.from_truncation(tr)
    a = propagate(p, tr, store="final", indices=idx)
    b = propagate(p, tr, store="final")
    np.testing.assert_array_equal(a.vector.coeffs, b.vector.coeffs)


def test_mismatched_fields_rejected():
    with pytest.raises(ValueError):
        SodeProblem([FieldModel(Wiener(), G, 4), FieldModel(Wiener(), TimeGrid(1.0, 128), 4)])
    with pytest.raises(ValueError):
        SodeProblem([])


class TestDolean:
    def test_wiener_no_difference(self):
        d = dolean_comparison(SodeProblem(FieldModel(Wiener(), G, 4)))
        np.testing.assert_allclose(d["difference"], 0.0, atol=1e-14)

    def test_ou_values(self):
        d = dolean_comparison(SodeProblem(FieldModel(OUStable(1.0), G, 4)), t=1.0)
        assert d["dolean_correction"][0] == pytest.approx(0.5)
        assert d["wick_correction"][0] == pytest.approx(-math.expm1(-2) / 4)

    def test_weighted(self):
        d = dolean_comparison(SodeProblem(FieldModel(Wiener(), G, 4, sigma=lambda t: 1 + t)), t=1.0)
        assert d["dolean_correction"][0] == pytest.approx(7 / 6, rel=1e-6)
        assert d["difference"][0] == pytest.approx(0.0, abs=1e-6)

    def test_fbm_unsupported(self):
        with pytest.raises(UnsupportedField):
            dolean_comparison(SodeProblem(FieldModel(FBm(0.7), G, 4)))
