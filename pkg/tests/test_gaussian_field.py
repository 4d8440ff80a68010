import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from chaoskit.errors import HypothesesUnverifiable, SingularDiagonal
from chaoskit.gaussian_field import (
    FBm,
    FieldModel,
    OUStable,
    OUUnstable,
    Rho,
    TimeGrid,
    Wiener,
    cosine_basis,
    covariance,
    covariance_matrix,
    fbm_constant,
    fbm_k1_squared,
    kappa_lower_bound,
    kernel_from_dict,
    kstar_build,
    kstar_step,
    norm_bound,
    operator_norm,
    variance,
)


def fbm_integral_form(H, t, s):
    """C_H (H - 1/2) s^(1/2-H) int_s^t (u-s)^(H-3/2) u^(H-1/2) du, by adaptive quadrature."""
    c = math.sqrt(H * (2 * H - 1) / special.beta(2 - 2 * H, H - 0.5))
    f = lambda u: u ** (H - 0.5)  # noqa: E731
    val, _ = integrate.quad(f, s, t, weight="alg", wvar=(H - 1.5, 0.0))
    return c * s ** (0.5 - H) * val


class TestKernels:
    def test_wiener(self):
        k = Wiener()
        assert k.eval(1.0, 0.5) == 1.0 and k.diag(0.3) == 1.0
        assert k.eval(0.5, 1.0) == 0.0
        assert k.dt(1.0, 0.5) == 0.0

    def test_ou(self):
        assert OUStable(1.0).eval(1.0, 0.0) == pytest.approx(math.exp(-1))
        assert OUUnstable(2.0).eval(1.0, 0.5) == pytest.approx(math.exp(1))
        assert OUStable(1.0).dt(1.0, 0.0) == pytest.approx(-math.exp(-1))

    @pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
    def test_fbm_against_integral_form(self, H):
        k = FBm(H)
        for t, s in [(0.8, 0.4), (1.0, 0.05), (2.0, 1.9), (0.3, 0.2999)]:
            assert k.eval(t, s) == pytest.approx(fbm_integral_form(H, t, s), rel=1e-6)

    def test_fbm_constant_value(self):
        H = 0.75
        c = math.sqrt(H * (2 * H - 1) / special.beta(2 - 2 * H, H - 0.5))
        assert fbm_constant(H) * (H - 0.5) == pytest.approx(c, rel=1e-12)

    def test_fbm_singular_diagonal(self):
        k = FBm(0.75)
        assert k.eval(0.5, 0.5) == 0.0
        with pytest.raises(SingularDiagonal):
            k.dt(0.5, 0.5)
        with pytest.raises(ValueError):
            FBm(0.4)

    def test_fbm_dt_matches_finite_difference(self):
        k = FBm(0.7)
        t, s, d = 0.9, 0.3, 1e-6
        fd = (k.eval(t + d, s) - k.eval(t - d, s)) / (2 * d)
        assert k.dt(t, s) == pytest.approx(fd, rel=1e-6)

    def test_rho_expression_and_callable(self):
        a = Rho("exp(-x)", monotone="decreasing")
        b = OUStable(1.0)
        for t, s in [(1.0, 0.2), (2.0, 1.5)]:
            assert a.eval(t, s) == pytest.approx(b.eval(t, s))
            assert a.dt(t, s) == pytest.approx(b.dt(t, s))
        c = Rho(lambda x: np.exp(-x), drho=lambda x: -np.exp(-x), monotone="decreasing")
        assert c.eval(1.0, 0.2) == pytest.approx(b.eval(1.0, 0.2))

    def test_kernel_dict_roundtrip(self):
        for k in (Wiener(), FBm(0.8), OUStable(0.5), OUUnstable(2.0), Rho("exp(-2*x)")):
            assert kernel_from_dict(k.to_dict()) == k
        with pytest.raises(ValueError):
            kernel_from_dict({"type": "fbm"})
        with pytest.raises(ValueError):
            kernel_from_dict({"kind": "wiener"})


class TestKstar:
    def test_indicator_gives_kernel(self):
        for k in (Wiener(), OUStable(1.5), FBm(0.75)):
            s = np.linspace(0.01, 0.99, 50)
            np.testing.assert_allclose(kstar_step(k, [0, 0.6], [1.0], s), k.eval(0.6, s) * (s <= 0.6))

    def test_two_step_ou(self):
        k, s1, s2 = OUStable(2.0), 0.4, 0.7
        s = np.linspace(0.005, 0.995, 100)
        # chi_s2 - chi_s1 = indicator of (s1, s2]
        got = kstar_step(k, [0.0, s1, s2], [0.0, 1.0], s)
        want = np.where(s <= s1, k.eval(s2, s) - k.eval(s1, s), np.where(s <= s2, k.eval(s2, s), 0.0))
        np.testing.assert_allclose(got, want, atol=1e-14)

    def test_wiener_matrix_is_identity(self):
        np.testing.assert_allclose(kstar_build(Wiener(), TimeGrid(1.0, 16)), np.eye(16), atol=1e-15)

    def test_ou_on_constant(self):
        g = TimeGrid(2.0, 400)
        k = OUStable(1.0)
        Af = kstar_build(k, g) @ np.ones(g.n)
        np.testing.assert_allclose(Af, k.eval(g.T, g.midpoints), atol=5 / g.n)

    def test_fbm_on_first_basis_function(self):
        g = TimeGrid(1.0, 512)
        k = FBm(0.75)
        Af = kstar_build(k, g) @ np.ones(g.n)
        # K* 1 = K(T, s)
        np.testing.assert_allclose(Af, k.eval(1.0, g.midpoints), atol=1e-3)

    def test_power_iteration(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((30, 20))
        assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-8)
        assert operator_norm(np.zeros((3, 3))) == 0.0


class TestNormBound:
    @pytest.mark.parametrize("H", [0.55, 0.75, 0.95])
    @pytest.mark.parametrize("T", [0.5, 1.0, 3.0])
    def test_fbm_formula(self, H, T):
        nb = norm_bound(FBm(H), T)
        assert nb.K0 == 0
        assert nb.K1**2 == pytest.approx(2 * H * 2 ** (1 - 2 * H) * T ** (2 * H - 1), rel=1e-14)
        assert nb.bound == pytest.approx(nb.K1**2)

    def test_fbm_half_is_one(self):
        assert fbm_k1_squared(0.5, 7.0) == 1.0

    @pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
    def test_ou_formulas(self, b):
        T = 1.0
        assert norm_bound(OUStable(b), T).kappa == pytest.approx(1 + math.sqrt(1 - math.exp(-b * T)))
        assert norm_bound(OUUnstable(b), T).kappa == pytest.approx(
            1 + math.sqrt(math.exp(b * T) * (math.exp(b * T) - 1))
        )

    def test_rho_needs_monotonicity(self):
        with pytest.raises(HypothesesUnverifiable):
            norm_bound(Rho(lambda x: np.cos(x), drho=lambda x: -np.sin(x)), 1.0)

    @pytest.mark.parametrize("k", [FBm(0.6), FBm(0.75), FBm(0.9), OUStable(0.5), OUStable(2.0), OUUnstable(1.0)])
    def test_discrete_norm_between_bounds(self, k):
        g = TimeGrid(1.0, 256)
        A = kstar_build(k, g)
        nrm = operator_norm(A)
        assert nrm <= 1.01 * norm_bound(k, g.T).kappa
        if not (isinstance(k, FBm) and k.H > 0.8):
            assert nrm**2 >= 0.98 * kappa_lower_bound(k, g)

    def test_fbm_discrete_norm_approaches_lower_bound(self):
        # midpoint sampling misses part of the s^(1-2H) singularity for H near 1
        k = FBm(0.9)
        norms = [operator_norm(kstar_build(k, TimeGrid(1.0, n))) for n in (64, 256, 1024)]
        assert norms[0] < norms[1] < norms[2] < kappa_lower_bound(k, TimeGrid(1.0, 256)) ** 0.5 + 1e-3


class TestCovariance:
    def test_wiener(self):
        g = TimeGrid(1.0, 64)
        for t, s in [(0.5, 0.25), (1.0, 1.0), (0.3, 0.7)]:
            assert covariance(Wiener(), g, t, s) == pytest.approx(min(t, s), abs=1e-12)

    @pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
    def test_fbm_variance(self, H):
        g = TimeGrid(1.0, 512)
        t = g.nodes[1:]
        R = np.array([covariance(FBm(H), g, x, x) for x in t[::32]])
        np.testing.assert_allclose(R, t[::32] ** (2 * H), atol=1e-3)

    def test_fbm_cross_covariance(self):
        H, g = 0.75, TimeGrid(1.0, 256)
        t, s = 0.8, 0.3
        ref = 0.5 * (t ** (2 * H) + s ** (2 * H) - (t - s) ** (2 * H))
        assert covariance(FBm(H), g, t, s) == pytest.approx(ref, abs=1e-3)

    def test_ou_variance(self):
        g = TimeGrid(1.0, 512)
        for b in (0.5, 1.0, 2.0):
            t = g.nodes[::64]
            quad = np.array([covariance(OUStable(b), g, x, x) for x in t])
            np.testing.assert_allclose(quad, -np.expm1(-2 * b * t) / (2 * b), atol=1e-6)
            np.testing.assert_allclose(variance(OUStable(b), g, t), -np.expm1(-2 * b * t) / (2 * b))

    def test_matrix_symmetric_psd(self):
        g = TimeGrid(1.0, 32)
        C = covariance_matrix(FBm(0.7), g)
        np.testing.assert_allclose(C, C.T, atol=1e-14)
        assert np.linalg.eigvalsh(C).min() > -1e-12

    @given(st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    def test_ou_cross_covariance_closed_form(self, t, s):
        g = TimeGrid(1.0, 128)
        b = 1.0
        lo, hi = min(t, s), max(t, s)
        ref = math.exp(-b * (hi - lo)) * (1 - math.exp(-2 * b * lo)) / (2 * b)
        assert covariance(OUStable(b), g, t, s) == pytest.approx(ref, abs=1e-9)


class TestFieldModel:
    def test_basis_values(self):
        g = TimeGrid(2.0, 64)
        np.testing.assert_allclose(cosine_basis(1, g, [0.3, 1.7]), 1 / math.sqrt(2))
        assert cosine_basis(2, g, 0.0) == pytest.approx(1.0)

    def test_basis_gram(self):
        m = FieldModel(Wiener(), TimeGrid(1.0, 256), 32)
        G = m.basis @ m.basis.T * m.grid.h
        np.testing.assert_allclose(G, np.eye(32), atol=1e-10)

    def test_wiener_Mtilde(self):
        m = FieldModel(Wiener(), TimeGrid(1.0, 512), 64)
        np.testing.assert_allclose(m.Mtilde[0], m.grid.nodes, atol=1e-14)
        assert m.summed_Mtilde_squared()[256] == pytest.approx(0.5, rel=0.02)

    def test_ou_parseval(self):
        m = FieldModel(OUStable(1.0), TimeGrid(1.0, 512), 64)
        R = -math.expm1(-2.0) / 2
        assert m.summed_Mtilde_squared()[-1] == pytest.approx(R, rel=0.02)

    def test_constant_sigma_scales(self):
        g = TimeGrid(1.0, 64)
        a = FieldModel(OUStable(1.0), g, 8)
        b = FieldModel(OUStable(1.0), g, 8, sigma=2.0)
        np.testing.assert_allclose(b.mtilde, 2 * a.mtilde)
        np.testing.assert_allclose(b.variance(), 4 * a.variance())

    def test_callable_sigma_variance(self):
        g = TimeGrid(1.0, 128)
        m = FieldModel(Wiener(), g, 8, sigma=lambda t: 1 + t)
        t = np.array([0.5, 1.0])
        # int_0^t (1 + r)^2 dr
        np.testing.assert_allclose(m.variance(t), ((1 + t) ** 3 - 1) / 3, rtol=1e-6)

    def test_callable_sigma_ou(self):
        g = TimeGrid(1.0, 128)
        m = FieldModel(OUStable(1.0), g, 8, sigma=lambda t: np.full_like(np.asarray(t, float), 2.0))
        np.testing.assert_allclose(m.variance(np.array([0.5, 1.0])), 4 * OUStable(1.0).variance(np.array([0.5, 1.0])),
                                   rtol=1e-6)

    def test_timegrid_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 4)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0)
        g = TimeGrid(1.0, 8)
        assert g.weights.sum() == pytest.approx(1.0)
        assert g.node_index(0.49) == 4
