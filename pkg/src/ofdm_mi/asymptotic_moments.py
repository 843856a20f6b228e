"""High- and low-SNR limits of the OFDM mutual-information statistics.

At high SNR the variance tends to an SNR-independent limit built from
log-determinant moments of correlated Wishart pairs. The cross term has
the same determinant structure as the exact cross moment, with digamma
values in place of the exponential-integral sums. Its diagonal entries
are available both as a finite sum (through ``xi`` below) and as an
infinite series; both are implemented and cross-checked.

The dilogarithm appearing in the finite sums is the standard series
``Li_2(x) = sum x^k / k^2`` evaluated at ``x = |rho|^2``.

At low SNR a first-order expansion of the log-det gives mean and
variance in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from . import _numeric as nu
from .channel import CorrelationProfile, SystemConfig, check_cfg
from .exact_moments import LOG2E, LOG2E2, MiMoments, RHO_ONE_CUTOFF, _check_corr, _weighted_variance
from .specfun import EULER_GAMMA, PI2_6, digamma_int, dilog, harmonic, trigamma_int


# ---------------------------------------------------------------------------
# xi machinery


@dataclass(frozen=True)
class XiContext:
    """Arguments of ``xi``: index gap ``delta``, ``x = |rho|^2`` and derivative order ``r``."""

    delta: int
    x: float
    r: int

    def __post_init__(self):
        if self.delta < 0 or self.r < 0:
            raise ValueError("delta and r must be nonnegative")
        if not 0.0 < self.x < 1.0:
            raise ValueError(f"x must lie in (0, 1), got {self.x}")


class _XiTerms:
    """Cached pieces of xi at one x for one backend."""

    def __init__(self, be, x, hmax: int):
        self.be = be
        self.x = x
        self.L = be.log1p(-x)
        self.H = be.harmonic_seq(hmax)
        self.li2 = be.dilog(x)
        self._mu = {}
        self._f = {}

    def mu(self, q: int, r: int):
        key = (q, r)
        if key not in self._mu:
            x = self.x
            self._mu[key] = comb(q + r - 1, r) * (x - 1) ** (r + 1) / x ** (r + q)
        return self._mu[key]

    def f(self, q: int, r: int):
        key = (q, r)
        if key not in self._f:
            acc = self.be.num(0)
            for t in range(r):
                acc += self.mu(q, t) / (r - t)
            self._f[key] = acc - self.mu(q, r) * self.L
        return self._f[key]

    def K(self, delta: int, q: int):
        H = self.H
        return self.be.fsum((H[t + q - 1] - H[t - 1]) / self.be.num(t) for t in range(1, delta - q + 1))

    def xi(self, delta: int, r: int):
        H, L = self.H, self.L
        val = self.li2 + L * L - 2 * H[r] * L
        for b in range(1, r + 1):
            val += (2 * H[b - 1] - self.f(1, b - 1)) / b
        for q in range(1, delta + 1):
            inner = self.be.num(0)
            for b in range(r):
                inner += self.f(q, b) / (r - b)
            val += (L * self.f(q, r) - inner) / 2
        for q in range(1, delta):
            val += H[delta - q] * self.f(q, r) - H[q] * self.f(q + 1, r) + self.mu(q, r) * self.K(delta, q)
        return val


def xi(ctx: XiContext) -> float:
    """The finite-sum function whose scaled form gives the derivatives of S2.

    ``d^r/dx^r S2(x) = r!/(1-x)^{r+1} xi_x(r)``, where
    ``S2(x) = sum_t x^t H(t) H(t + delta)``.
    """
    be = nu.backend_for(ctx.x, 1 + ctx.delta + ctx.r)
    terms = _XiTerms(be, be.num(ctx.x), ctx.r + ctx.delta + 2)
    return be.to_float(terms.xi(ctx.delta, ctx.r))


def s2_series(delta: int, x: float, rtol: float = 1e-16) -> float:
    """sum_{t>=0} x^t H(t) H(t+delta) summed directly."""
    if not 0.0 <= x < 1.0:
        raise ValueError("x must lie in [0, 1)")
    total = 0.0
    t = 1
    xt = x
    while True:
        term = xt * harmonic(t) * harmonic(t + delta)
        total += term
        if term < rtol * total and t > 2:
            return total
        t += 1
        xt *= x


def s2_finite(delta: int, x: float) -> float:
    """Closed form of ``sum_t x^t H(t) H(t+delta)`` for 0 < x < 1.

    The ``x^-q`` terms cancel to about ``delta log10(1/x)`` digits, so the
    sum is formed at elevated precision when that exceeds the float budget.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    lost = delta * math.log10(1.0 / x) + 1.0
    be = nu.FLOAT if lost <= nu.FLOAT_MAX_LOSS else nu.MpBackend(int(20 + math.ceil(lost)))
    xv = be.num(x)
    H = be.harmonic_seq(delta + 1)
    L = be.log1p(-xv)
    val = (be.dilog(xv) + L * L) / (1 - xv)
    val += L * be.fsum([L / xv**q for q in range(1, delta + 1)]) / 2
    for q in range(1, delta):
        val += L * H[delta - q] / xv**q - L * H[q] / xv ** (q + 1)
        val -= be.fsum([(H[r + q - 1] - H[r - 1]) / r for r in range(1, delta - q + 1)]) / xv**q
    return be.to_float(val)


# ---------------------------------------------------------------------------
# high SNR


def _psi_sums(cfg: SystemConfig) -> tuple[float, float]:
    """(sum_t psi(n-t), sum_t psi'(n-t)) for t = 0..m-1."""
    n, m = cfg.n, cfg.m
    return (
        math.fsum(digamma_int(n - t) for t in range(m)),
        math.fsum(trigamma_int(n - t) for t in range(m)),
    )


def mean_high_snr(cfg: SystemConfig) -> float:
    """High-SNR mean in bits: m log2(gamma/N_t) + log2(e) sum_t psi(n-t)."""
    check_cfg(cfg)
    return cfg.m * math.log2(cfg.snr / cfg.nt) + LOG2E * _psi_sums(cfg)[0]


def high_snr_cancellation_digits(x: float, m: int, tau: int) -> float:
    """Digits lost to cancellation in the high-SNR cross term at |rho|^2 = x."""
    if not 0.0 < x < 1.0:
        return 0.0
    # the finite-sum diagonal carries powers up to x^-(tau + 3m)
    return (m * (m - 1) / 2 + tau + 2 * m) * math.log10(1.0 / x) + 0.5 * m


def _high_snr_backend(x: float, m: int, tau: int):
    lost = high_snr_cancellation_digits(x, m, tau)
    if lost <= nu.FLOAT_MAX_LOSS:
        return nu.FLOAT
    return nu.MpBackend(int(20 + math.ceil(lost)))


def _cross_high_snr(cfg: SystemConfig, x: float, diagonal: str = "finite", be=None):
    """Sum of det(C~_rs)/(Gamma_m(n) Gamma_m(m)) minus (sum psi)^2, in nats^2.

    Returns (covariance, truncation tail).
    """
    m, tau = cfg.m, cfg.tau
    if be is None:
        be = _high_snr_backend(x, m, tau)
    xb = be.num(x)
    zmax = tau + 2 * m - 1
    H = be.harmonic_seq(zmax + 2)
    K = be.euler
    psi = [None] + [H[k - 1] - K for k in range(1, zmax + 1)]
    plain = nu.eta_matrix(be, m, tau, xb, lambda k: 1)
    mixed = nu.eta_matrix(be, m, tau, xb, lambda k: psi[k])
    L = be.log1p(-xb)
    h = L - K
    diag = [[None] * m for _ in range(m)]
    tails = [[0.0] * m for _ in range(m)]
    if diagonal == "finite":
        terms = _XiTerms(be, xb, zmax + 2)
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                ip, jp = max(i, j), min(i, j)
                delta = ip - jp
                eta_ji_1 = plain[j - 1][i - 1]
                eta_ij_1 = plain[i - 1][j - 1]
                eta_ij_h = nu.eta_single(be, i, j, tau, xb, lambda k: H[k - 1])
                eta_ji_h = nu.eta_single(be, j, i, tau, xb, lambda k: H[k - 1])
                eta_xi = nu.eta_single(be, jp, ip, tau, xb, lambda k, d=delta: terms.xi(d, k - 1))
                v = h * h * xb ** (i - j) * eta_ji_1 + xb ** (ip - j) * eta_xi
                v += h * (eta_ij_h - L * eta_ij_1 + xb ** (i - j) * (eta_ji_h - L * eta_ji_1))
                diag[i - 1][j - 1] = v
    elif diagonal == "series":
        one_minus = 1 - xb
        pairs = [(i, j) for i in range(1, m + 1) for j in range(i, m + 1)]
        if be.precise:
            rtol = be.num(10) ** (-(be.ctx.dps - 4))
            hh = _MpHarm(be, h)
            series = {p: nu.diag_series_mp(be, xb, tau, p[0], p[1], hh, rtol) for p in pairs}
        else:
            seq = nu._RunningSeq(nu.harmonic_block, offset=float(h))
            series = nu.diag_series_float(x, tau, pairs, seq, nu.COV_SERIES_RTOL)
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                z = tau + i + j - 1
                res = series[min(i, j), max(i, j)]
                pref = one_minus**z / xb ** (j - 1)
                diag[i - 1][j - 1] = pref * res.value
                tails[i - 1][j - 1] = abs(float(pref)) * res.tail
    else:
        raise ValueError(f"diagonal must be 'finite' or 'series', got {diagonal!r}")
    total = nu.sum_rs_determinants(be, m, tau, xb, plain, mixed, diag)
    spsi = be.fsum(psi[cfg.n - t] for t in range(m))
    cov = total - spsi * spsi
    tail = 0.0
    if diagonal == "series":
        from .exact_moments import _cofactors

        cof, rs, cs = _cofactors(be, plain, m, tau)
        tail = math.fsum(abs(float(cof[r][s] * rs[r] * cs[s])) * tails[r][s] for r in range(m) for s in range(m))
    return be.to_float(cov), tail


class _MpHarm:
    """a(u) = h + H(u - 1) in elevated precision, grown on demand."""

    def __init__(self, be, h):
        self.be = be
        self.h = h
        self.vals = [None, h]

    def __call__(self, u: int):
        while len(self.vals) <= u:
            k = len(self.vals)
            self.vals.append(self.vals[-1] + 1 / self.be.num(k - 1))
        return self.vals[u]


def cross_covariance_high_snr(cfg: SystemConfig, rho_mag2: float, diagonal: str = "finite") -> float:
    """Cov(log2 det W_0, log2 det W_d) in bits^2 for |rho_d|^2 = rho_mag2."""
    check_cfg(cfg)
    x = float(rho_mag2)
    if x <= 0.0:
        return 0.0
    if x > RHO_ONE_CUTOFF:
        return LOG2E2 * _psi_sums(cfg)[1]
    return LOG2E2 * _cross_high_snr(cfg, x, diagonal)[0]


def _cov_high(cfg, diagonal):
    flat = _psi_sums(cfg)[1]

    def cov_of(x: float):
        if x <= 0.0:
            return 0.0, 0.0
        if x > RHO_ONE_CUTOFF:
            return flat, 0.0
        return _cross_high_snr(cfg, x, diagonal)

    return cov_of, flat


def variance_high_snr(
    cfg: SystemConfig,
    corr: CorrelationProfile,
    diagonal: str = "finite",
    threads: int | None = None,
) -> MiMoments:
    """SNR-independent high-SNR variance limit.

    The variance does not depend on ``cfg.snr``; the SNR only enters the
    reported high-SNR mean.

    Parameters
    ----------
    diagonal : {"finite", "series"}
        Closed-form or infinite-series evaluation of the diagonal entries.
    """
    check_cfg(cfg)
    mag2 = _check_corr(cfg, corr)
    cov_of, flat = _cov_high(cfg, diagonal)
    var, tail = _weighted_variance(cfg.subcarriers, mag2, cov_of, flat, threads)
    return MiMoments(mean_high_snr(cfg), LOG2E2 * var, "high_snr", LOG2E2 * tail)


def _simo_phi_high(n: int, x: float) -> float:
    """Reduced high-SNR covariance for one antenna on one side."""
    w = (x - 1.0) / x
    L = math.log1p(-x)
    val = dilog(x) - harmonic(n - 1) ** 2 + 2.0 * math.fsum(harmonic(b - 1) / b for b in range(1, n))
    for b in range(1, n):
        inner = math.fsum(w ** (t + 1) / (b - t - 1) for t in range(b - 1))
        val += (w**b * L - inner) / b
    return val


def variance_high_snr_simo(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    """High-SNR variance for min(N_t, N_r) = 1 < max(N_t, N_r)."""
    if cfg.m != 1 or cfg.n < 2:
        raise ValueError("variance_high_snr_simo needs min(N_t, N_r) = 1 and max(N_t, N_r) > 1")
    return _simo_high(cfg, corr)


def _simo_high(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    mag2 = _check_corr(cfg, corr)
    n, N = cfg.n, cfg.subcarriers
    flat = trigamma_int(n)
    phis = {}
    for v in sorted({float(v) for v in mag2[1:]}):
        if v <= 0.0:
            phis[v] = 0.0
        elif v > RHO_ONE_CUTOFF:
            phis[v] = flat
        else:
            phis[v] = _simo_phi_high(n, v)
    total = math.fsum((N - d) * phis[float(mag2[d])] for d in range(1, N))
    var = 2.0 / (N * N) * total + flat / N
    return MiMoments(mean_high_snr(cfg), LOG2E2 * var, "high_snr", 0.0)


def variance_high_snr_siso(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    """High-SNR variance of a single-antenna link: dilogarithms of |rho_d|^2 plus pi^2/(6N)."""
    if cfg.nt != 1 or cfg.nr != 1:
        raise ValueError("variance_high_snr_siso needs N_t = N_r = 1")
    mag2 = _check_corr(cfg, corr)
    N = cfg.subcarriers
    total = math.fsum((N - d) * dilog(min(1.0, float(mag2[d]))) for d in range(1, N))
    var = 2.0 / (N * N) * total + PI2_6 / N
    return MiMoments(mean_high_snr(cfg), LOG2E2 * var, "high_snr", 0.0)


# ---------------------------------------------------------------------------
# low SNR


def mean_low_snr(cfg: SystemConfig) -> float:
    """First-order low-SNR mean, log2(e) gamma N_r, in bits."""
    return LOG2E * cfg.snr * cfg.nr


def low_snr_ratio(corr: CorrelationProfile) -> float:
    """(1/N)(1 + 2 sum_d (N-d)/N |rho_d|^2), the low-SNR variance relative to flat fading.

    Lies in [1/N, 1] and does not depend on antennas or SNR.
    """
    N = corr.N
    mag2 = corr.mag2
    s = math.fsum((N - d) / N * float(mag2[d]) for d in range(1, N))
    return (1.0 + 2.0 * s) / N


def low_snr_ratio_uniform(L: int, N: int) -> float:
    """``low_snr_ratio`` for a uniform L-tap profile, via the sin-ratio form of |rho_d|."""
    if not 1 <= L <= N:
        raise ValueError("need 1 <= L <= N")
    d = np.arange(1, N)
    ratio = np.sin(np.pi * d * L / N) / (L * np.sin(np.pi * d / N))
    return (1.0 + 2.0 * math.fsum((N - d) / N * ratio**2)) / N


def variance_low_snr(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    """First-order low-SNR variance, log2(e)^2 gamma^2 N_r/N_t times ``low_snr_ratio``."""
    check_cfg(cfg)
    _check_corr(cfg, corr)
    flat = LOG2E2 * cfg.snr**2 * cfg.nr / cfg.nt
    return MiMoments(mean_low_snr(cfg), flat * low_snr_ratio(corr), "low_snr", 0.0)


def variance_low_snr_flat(cfg: SystemConfig) -> float:
    """Low-SNR variance of flat fading, log2(e)^2 gamma^2 N_r / N_t."""
    return LOG2E2 * cfg.snr**2 * cfg.nr / cfg.nt


__all__ = [
    "EULER_GAMMA",
    "XiContext",
    "xi",
    "s2_series",
    "s2_finite",
    "mean_high_snr",
    "cross_covariance_high_snr",
    "variance_high_snr",
    "variance_high_snr_simo",
    "variance_high_snr_siso",
    "mean_low_snr",
    "low_snr_ratio",
    "low_snr_ratio_uniform",
    "variance_low_snr",
    "variance_low_snr_flat",
]
