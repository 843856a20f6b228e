import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import i0

from ofdm_mi import exact_moments as em
from ofdm_mi import wishart_eig as we
from ofdm_mi.channel import SystemConfig
from ofdm_mi.quadrature import adaptive_gk

SHAPES = [(1, 1), (1, 2), (2, 2), (2, 3)]
ones = np.ones_like


def kibble(lam, om, x):
    return math.exp(-(lam + om) / (1 - x)) * i0(2 * math.sqrt(x * lam * om) / (1 - x)) / (1 - x)


def test_kibble_form():
    d = we.EigenPairDensity(SystemConfig(1, 1, 1, 1.0), 0.25)
    for lam, om in [(1.0, 1.0), (0.3, 2.5), (4.0, 0.01)]:
        assert float(we.joint_pdf(d, lam, om)) == pytest.approx(kibble(lam, om, 0.25), rel=1e-12)


@pytest.mark.parametrize("nt, nr", SHAPES)
@pytest.mark.parametrize("x", [0.1, 0.5, 0.9])
def test_normalisation(nt, nr, x):
    d = we.EigenPairDensity(SystemConfig(nt, nr, 1, 1.0), x)
    assert we.cross_functional(d, ones, ones) / d.cfg.m**2 == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_marginal_mean(n):
    d = we.EigenPairDensity(SystemConfig(1, n, 1, 1.0), 0.4)
    assert we.cross_functional(d, lambda v: v, ones) == pytest.approx(n, rel=1e-8)


@given(st.sampled_from([(2, 2), (3, 3)]), st.floats(0.05, 0.95), st.floats(0.01, 20.0), st.floats(0.01, 20.0))
def test_symmetry(shape, x, lam, om):
    d = we.EigenPairDensity(SystemConfig(*shape, 1, 1.0), x)
    a, b = float(we.joint_pdf(d, lam, om)), float(we.joint_pdf(d, om, lam))
    assert a == pytest.approx(b, rel=1e-10, abs=1e-300)


@given(st.sampled_from(SHAPES + [(3, 4)]), st.floats(0.01, 0.99), st.floats(1e-3, 60.0), st.floats(1e-3, 60.0))
def test_nonnegative(shape, x, lam, om):
    d = we.EigenPairDensity(SystemConfig(*shape, 1, 1.0), x)
    v = float(we.joint_pdf(d, lam, om))
    assert math.isfinite(v)
    # tiny negative values are rounding in the determinant expansion
    scale = float(we.marginal_pdf(d.cfg, lam) * we.marginal_pdf(d.cfg, om)) + 1e-300
    assert v >= -1e-9 * scale


@pytest.mark.parametrize("shape", SHAPES)
def test_no_overflow(shape):
    d = we.EigenPairDensity(SystemConfig(*shape, 1, 1.0), 0.99)
    lam = np.array([1e3, 1e3, 1.0, 500.0])
    om = np.array([1e3, 1.0, 1e3, 510.0])
    with np.errstate(over="raise", invalid="raise"):
        v = we.joint_pdf(d, lam, om)
    assert np.all(np.isfinite(v))


@pytest.mark.parametrize("nt, nr", [(1, 2), (2, 2), (2, 3)])
def test_marginal_integrates_out(nt, nr):
    d = we.EigenPairDensity(SystemConfig(nt, nr, 1, 1.0), 0.6)
    for lam in (0.3, 1.7, 5.0):
        val, _ = adaptive_gk(lambda w: we.joint_pdf(d, lam, w), 0.0, 80.0, breakpoints=(1, 5, 15), rtol=1e-11)
        assert val == pytest.approx(float(we.marginal_pdf(d.cfg, lam)), rel=1e-8)


@pytest.mark.parametrize("nt, nr", [(2, 2), (2, 3)])
def test_marginal_against_sampled_eigenvalues(nt, nr):
    cfg = SystemConfig(nt, nr, 1, 1.0)
    rng = np.random.default_rng(8)
    n_s = 100_000
    H = (rng.standard_normal((n_s, cfg.m, cfg.n)) + 1j * rng.standard_normal((n_s, cfg.m, cfg.n))) / math.sqrt(2)
    eig = np.linalg.eigvalsh(H @ np.conj(np.swapaxes(H, 1, 2)))
    pick = np.sort(eig[np.arange(n_s), rng.integers(0, cfg.m, n_s)])
    grid = np.linspace(0.0, pick[-1] * 1.01, 40001)
    pdf = we.marginal_pdf(cfg, grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    F = np.interp(pick, grid, cdf)
    i = np.arange(1, n_s + 1)
    ks = max(np.max(i / n_s - F), np.max(F - (i - 1) / n_s))
    assert ks < 0.01


@pytest.mark.parametrize("nt, nr, x, db", [(2, 2, 0.5, 10.0), (1, 1, 0.25, 0.0), (2, 3, 0.8, 5.0)])
def test_reproduces_cross_moment(nt, nr, x, db):
    cfg = SystemConfig.from_db(nt, nr, 1, db)
    d = we.EigenPairDensity(cfg, x)
    a = we.mi_alpha(cfg)
    assert we.cross_functional(d, a, a) == pytest.approx(em.cross_moment(cfg, math.sqrt(x)), rel=1e-6)


def test_domain():
    cfg = SystemConfig(1, 1, 1, 1.0)
    for x in (0.0, 1.0):
        with pytest.raises(ValueError):
            we.EigenPairDensity(cfg, x)
    d = we.EigenPairDensity(cfg, 0.5)
    with pytest.raises(ValueError):
        we.joint_pdf(d, -1.0, 1.0)
