import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ofdm_mi import specfun as sf
from ofdm_mi.channel import SystemConfig
from ofdm_mi.errors import NonConvergenceError
from ofdm_mi.quadrature import adaptive_gk, exp_sinh

# mpmath at 30 digits: e*E1(1), log-squared Laguerre moments by mp.quad
E_E1_1 = 0.596347362323194074341078499369
E_E1_001 = 4.07851144345642582664274874835
L2_REF = {
    (0, 1.0): 0.531930770064818361249680109579,
    (1, 1.0): 1.19269472464638814868215699874,
    (3, 0.5): 27.6647496759437026356346651712,
    (2, 10.0): 0.161183753189337991521109413257,
}
L1_3_2_05 = 38.7610680603924169079897097724


class TestExpxEn:
    def test_order_one(self):
        assert sf.expx_en(1, 1.0) == pytest.approx(E_E1_1, rel=1e-12)
        assert sf.expx_en(1, 0.01) == pytest.approx(E_E1_001, rel=1e-12)

    def test_order_two_from_recurrence(self):
        assert sf.expx_en(2, 1.0) == pytest.approx(1.0 - E_E1_1, rel=1e-12)

    def test_order_two_by_quadrature(self):
        # t = 1/s maps [1, inf) onto (0, 1]
        val, _ = adaptive_gk(lambda s: np.exp(1.0 - 1.0 / s), 0.0, 1.0)
        assert sf.expx_en(2, 1.0) == pytest.approx(val, rel=1e-10)

    def test_large_argument(self):
        assert abs(700.0 * sf.expx_en(1, 700.0) - 1.0) < 0.01

    @pytest.mark.parametrize("bad", [(0, 1.0), (1, 0.0), (2, -1.0)])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            sf.expx_en(*bad)

    @given(st.integers(1, 30), st.floats(0.01, 100.0))
    def test_scaled_recurrence(self, h, x):
        lhs = h * sf.expx_en(h + 1, x)
        rhs = 1.0 - x * sf.expx_en(h, x)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    @given(st.integers(1, 40), st.floats(0.01, 500.0))
    def test_enclosure_and_positivity(self, h, x):
        v = sf.expx_en(h, x)
        assert 0 < v <= 1.0 / (x + h - 1) * (1 + 1e-12)
        assert v >= 1.0 / (x + h) * (1 - 1e-12)

    @given(st.integers(1, 20), st.floats(0.01, 50.0), st.floats(1.001, 3.0))
    def test_monotone_in_x(self, h, x, k):
        assert sf.expx_en(h, k * x) < sf.expx_en(h, x)

    def test_sequence_matches_scalar(self):
        seq = sf.scaled_en_sequence(3.7, 25)
        for h in (1, 2, 10, 25):
            assert seq[h] == pytest.approx(sf.expx_en(h, 3.7), rel=1e-13)


class TestGSums:
    def test_g1(self):
        cfg = SystemConfig(1, 1, 1, 1.0)
        assert sf.g1(1, cfg) == pytest.approx(E_E1_1, rel=1e-12)
        assert sf.g1(2, cfg) == pytest.approx(1.0, rel=1e-12)

    def test_g2_reduces_to_g1(self):
        cfg = SystemConfig(1, 1, 1, 1.0)
        assert sf.g2(1, cfg, 0.0) == sf.g1(1, cfg)

    def test_g2_argument(self):
        cfg = SystemConfig(2, 2, 1, 10.0)
        x = 0.36
        assert sf.g2(3, cfg, x) == pytest.approx(sf.scaled_en_sum(3, 0.2 / (1 - x)), rel=1e-14)

    def test_domain(self):
        cfg = SystemConfig(1, 1, 1, 1.0)
        with pytest.raises(ValueError):
            sf.g1(0, cfg)
        with pytest.raises(ValueError):
            sf.g2(1, cfg, 1.0)


class TestSmallFunctions:
    def test_harmonic(self):
        assert sf.harmonic(0) == 0
        assert sf.harmonic(1) == 1
        assert sf.harmonic(4) == pytest.approx(25 / 12, rel=1e-15)
        with pytest.raises(ValueError):
            sf.harmonic(-1)

    def test_digamma_trigamma(self):
        assert sf.digamma_int(1) == pytest.approx(-0.5772156649015329, rel=1e-15)
        assert sf.trigamma_int(1) == pytest.approx(math.pi**2 / 6, rel=1e-15)
        assert sf.trigamma_int(2) == pytest.approx(math.pi**2 / 6 - 1, rel=1e-14)
        for k in (0, -2):
            with pytest.raises(ValueError):
                sf.digamma_int(k)
            with pytest.raises(ValueError):
                sf.trigamma_int(k)

    @given(st.integers(1, 200))
    def test_digamma_against_scipy(self, k):
        from scipy.special import digamma, polygamma

        assert sf.digamma_int(k) == pytest.approx(float(digamma(k)), rel=1e-13, abs=1e-15)
        assert sf.trigamma_int(k) == pytest.approx(float(polygamma(1, k)), rel=1e-11)

    def test_pochhammer(self):
        assert sf.pochhammer(3, 0) == 1
        assert sf.pochhammer(2, 3) == 24
        for r in range(8):
            assert sf.pochhammer(1, r) == math.factorial(r)


class TestDilog:
    def test_anchors(self):
        assert sf.dilog(0.0) == 0.0
        assert sf.dilog(1.0) == pytest.approx(math.pi**2 / 6, rel=1e-15)
        assert sf.dilog(0.5) == pytest.approx(math.pi**2 / 12 - math.log(2) ** 2 / 2, rel=1e-14)

    def test_domain(self):
        for x in (-0.1, 1.1):
            with pytest.raises(ValueError):
                sf.dilog(x)

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_reflection(self, x):
        lhs = sf.dilog(x) + sf.dilog(1 - x) + math.log(x) * math.log1p(-x)
        assert lhs == pytest.approx(math.pi**2 / 6, abs=1e-11)

    @given(st.floats(0.0, 0.99))
    def test_against_spence(self, x):
        from scipy.special import spence

        assert sf.dilog(x) == pytest.approx(float(spence(1 - x)), rel=1e-12, abs=1e-15)


class TestBessel:
    def test_anchors(self):
        assert sf.bessel_i_scaled(0, 0.0) == 1.0
        assert sf.bessel_i_scaled(1, 0.0) == 0.0
        assert sf.bessel_i_scaled(0, 2.0) == pytest.approx(0.308508322553671039533, rel=1e-12)

    def test_negative(self):
        with pytest.raises(ValueError):
            sf.bessel_i_scaled(0, -1.0)

    @pytest.mark.parametrize("tau", [0, 1, 3, 7])
    def test_crossover_window(self, tau):
        x = np.linspace(25.0, 35.0, 41)
        a = sf._bessel_i_scaled_series(tau, x)
        b = sf._bessel_i_scaled_asymptotic(tau, x)
        np.testing.assert_allclose(a, b, rtol=1e-8)

    @given(st.integers(0, 8), st.floats(0.0, 500.0))
    def test_against_scipy(self, tau, x):
        from scipy.special import ive

        assert float(sf.bessel_i_scaled(tau, x)) == pytest.approx(float(ive(tau, x)), rel=1e-10, abs=1e-300)


class TestLogMoments:
    @pytest.mark.parametrize("key", list(L2_REF))
    def test_log2_moment_reference(self, key):
        assert sf.log2_moment(*key) == pytest.approx(L2_REF[key], rel=1e-10)

    @pytest.mark.parametrize("b, beta", [(0, 1.0), (1, 1.0), (4, 0.01), (7, 30.0), (0, 1e-3)])
    def test_two_rules_agree(self, b, beta):
        assert sf.log2_moment(b, beta) == pytest.approx(sf.log2_moment_exp_sinh(b, beta), rel=1e-10)

    def test_vanishes(self):
        assert sf.log2_moment(0, 1e8) < 1e-14

    @given(st.integers(0, 6), st.floats(0.05, 20.0))
    def test_monotone(self, b, beta):
        v = sf.log2_moment(b, beta)
        assert sf.log2_moment(b, beta * 1.5) < v
        assert sf.log2_moment(b + 1, beta) > v

    def test_log1_moment(self):
        assert sf.log1_moment(1, 1.0, 1.0) == pytest.approx(E_E1_1, rel=1e-12)
        assert sf.log1_moment(2, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
        assert sf.log1_moment(3, 2.0, 0.5) == pytest.approx(L1_3_2_05, rel=1e-12)

    @given(st.integers(1, 8), st.floats(0.01, 100.0), st.floats(0.01, 100.0))
    def test_log1_moment_vs_quadrature(self, q, alpha, b):
        f = lambda lam: np.log1p(alpha * lam) * lam ** (q - 1) * np.exp(-b * lam)
        ref = exp_sinh(f, rtol=1e-12)
        assert sf.log1_moment(q, alpha, b) == pytest.approx(ref, rel=1e-9)

    def test_quadrature_budget_reported(self):
        with pytest.raises(NonConvergenceError):
            adaptive_gk(lambda t: np.sin(1.0 / np.maximum(t, 1e-300)) / t, 0.0, 1.0, max_panels=8)
