"""Exact mean, second moment, cross moment and variance of the OFDM mutual information.

Everything is assembled in nats (nats squared for second-order
quantities) and converted to bits only at the public boundary. The
determinants carry the row scaling ``1/Gamma(tau+i)`` and column scaling
``1/Gamma(j)``, which divides by ``Gamma_m(n) Gamma_m(m)`` exactly and
keeps all entries O(1)-ish.

Cross moments are handled through the covariance
``E[I_0 I_d] - E[I]^2`` because that is the quantity entering the
variance, and it is the one that suffers cancellation when ``|rho_d|``
is small. The covariance is evaluated at elevated precision when the
estimated cancellation exceeds what double precision can absorb.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb

import numpy as np

from . import _numeric as nu
from .channel import SNAP_ONE, CorrelationProfile, SystemConfig, check_cfg
from .errors import NonConvergenceError
from .specfun import log2_moment, scaled_en_sequence

LOG2E = 1.0 / math.log(2.0)
LOG2E2 = LOG2E * LOG2E

# Above this |rho|^2 the diagonal series would need more than ~10^8 terms;
# the |rho| = 1 branch is used instead (difference O(1 - |rho|^2)).
RHO_ONE_CUTOFF = 1.0 - 1e-6
REGIMES = ("exact", "high_snr", "low_snr", "monte_carlo")


@dataclass(frozen=True)
class MiMoments:
    """Mean and variance of the mutual information.

    Attributes
    ----------
    mean_bits : float
    variance_bits2 : float
    regime : str
        One of ``exact``, ``high_snr``, ``low_snr``, ``monte_carlo``.
    series_truncation_error : float
        Bound on the variance error from truncating infinite series, bits^2.
    """

    mean_bits: float
    variance_bits2: float
    regime: str
    series_truncation_error: float = 0.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.series_truncation_error < 0:
            raise ValueError("truncation error must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "mean_bits": self.mean_bits,
            "variance_bits2": self.variance_bits2,
            "regime": self.regime,
            "series_truncation_error": self.series_truncation_error,
        }


# ---------------------------------------------------------------------------
# flat-fading building blocks


def _g1_values(be, x0, zmax: int):
    """[G1(0), G1(1), ..., G1(zmax)] with G1 the scaled E_h sum at x0."""
    seq = be.en_sequence(x0, zmax)
    out = [be.num(0)]
    for h in range(1, zmax + 1):
        out.append(out[-1] + seq[h])
    return out


def _mean_nats(cfg: SystemConfig, be=nu.FLOAT):
    m, tau = cfg.m, cfg.tau
    g1 = _g1_values(be, cfg.x0, tau + 2 * m - 1)
    terms = []
    for r in range(1, m + 1):
        rows = []
        for i in range(1, m + 1):
            row = []
            for j in range(1, m + 1):
                v = be.num(comb(tau + i + j - 2, j - 1))
                if j == r:
                    v = v * g1[tau + i + j - 1]
                row.append(v)
            rows.append(row)
        terms.append(be.det(rows))
    return be.fsum(terms)


def mean_flat(cfg: SystemConfig) -> float:
    """Ergodic mean of the flat-fading mutual information, in bits.

    Examples
    --------
    >>> round(mean_flat(SystemConfig(1, 1, 1, 1.0)), 6)
    0.86038
    """
    check_cfg(cfg)
    return LOG2E * _mean_nats(cfg)


def _second_moment_nats(cfg: SystemConfig, log2_fn=log2_moment) -> float:
    m, tau = cfg.m, cfg.tau
    g1 = _g1_values(nu.FLOAT, cfg.x0, tau + 2 * m - 1)
    diag = {}
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            b = tau + i + j - 2
            diag[i, j] = log2_fn(b, cfg.x0) / (math.factorial(tau + i - 1) * math.factorial(j - 1))
    terms = []
    for r in range(1, m + 1):
        for s in range(1, m + 1):
            rows = []
            for i in range(1, m + 1):
                row = []
                for j in range(1, m + 1):
                    if j == r == s:
                        v = diag[i, j]
                    elif j in (r, s):
                        v = comb(tau + i + j - 2, j - 1) * g1[tau + i + j - 1]
                    else:
                        v = float(comb(tau + i + j - 2, j - 1))
                    row.append(v)
                rows.append(row)
            terms.append(nu.FLOAT.det(rows))
    return math.fsum(terms)


def second_moment_flat(cfg: SystemConfig) -> float:
    """E[I_flat^2] in bits^2, with the log-squared diagonal by quadrature."""
    check_cfg(cfg)
    return LOG2E2 * _second_moment_nats(cfg)


def log2_moment_meijer(b: int, beta: float, dps: int = 30) -> float:
    """Integral of ln^2(1 + u/beta) u^b e^{-u} through Meijer-G functions.

    This is the alternating representation
    ``2 beta^{b+1} e^beta sum_t C(b,t) (-1)^{b-t} G^{4,0}_{3,4}(beta | -t,-t,-t ; 0,-t-1,-t-1,-t-1)``,
    kept as a cross-check of the quadrature route. The alternating sum
    cancels badly for large ``b`` or small ``beta``, so it runs in mpmath
    at ``dps`` digits.
    """
    from mpmath import MPContext

    ctx = MPContext()
    ctx.dps = dps
    beta_mp = ctx.mpf(beta)
    total = ctx.mpf(0)
    for t in range(b + 1):
        g = ctx.meijerg([[], [-t, -t, -t]], [[0, -t - 1, -t - 1, -t - 1], []], beta_mp)
        total += comb(b, t) * (-1) ** (b - t) * g
    return float(2 * beta_mp ** (b + 1) * ctx.exp(beta_mp) * total)


def variance_flat(cfg: SystemConfig) -> float:
    """Var(I_flat) in bits^2."""
    check_cfg(cfg)
    mu = _mean_nats(cfg)
    return LOG2E2 * (_second_moment_nats(cfg) - mu * mu)


# ---------------------------------------------------------------------------
# cross moment


@dataclass(frozen=True)
class _CovResult:
    cov: float  # nats^2
    tail: float  # nats^2
    terms: dict  # (i, j) -> terms used by the diagonal series
    precise: bool


class _MpSeq:
    """Growable list of a running scaled E_h sum in elevated precision."""

    def __init__(self, be, x2):
        self.be = be
        self.x2 = x2
        self.vals = []
        self._grow(64)

    def _grow(self, hmax):
        seq = self.be.en_sequence(self.x2, hmax)
        vals = [self.be.num(0)]
        for h in range(1, hmax + 1):
            vals.append(vals[-1] + seq[h])
        self.vals = vals

    def __call__(self, u: int):
        if u >= len(self.vals):
            self._grow(2 * u)
        return self.vals[u]


def _cofactors(be, plain, m: int, tau: int):
    """Signed minors of the scaled eta(1) matrix, one per (r, s)."""
    rs = [1 / be.num(math.factorial(tau + i)) for i in range(m)]
    cs = [1 / be.num(math.factorial(j)) for j in range(m)]
    scaled = [[plain[i][j] * rs[i] * cs[j] for j in range(m)] for i in range(m)]
    out = [[be.num(1)] * m for _ in range(m)]
    if m == 1:
        return out, rs, cs
    for r in range(m):
        for s in range(m):
            minor = [[scaled[i][j] for j in range(m) if j != s] for i in range(m) if i != r]
            out[r][s] = (-1) ** (r + s) * be.det(minor)
    return out, rs, cs


def diagonal_series(cfg: SystemConfig, rho_mag2: float, rtol: float = nu.SERIES_RTOL,
                    max_terms: int = nu.SERIES_MAX_TERMS) -> dict:
    """Run the double-precision diagonal series for every (i, j) and return the results.

    Mainly useful for inspecting term counts: maps ``(i, j)`` (1-based)
    to a result with ``value``, ``terms`` and ``tail``.
    """
    x = float(rho_mag2)
    if not 0.0 < x < 1.0:
        raise ValueError("rho_mag2 must lie in (0, 1)")
    m, tau = cfg.m, cfg.tau
    seq = nu._RunningSeq(nu.scaled_en_block(cfg.x0 / (1.0 - x)))
    pairs = [(i, j) for i in range(1, m + 1) for j in range(i, m + 1)]
    res = nu.diag_series_float(x, tau, pairs, seq, rtol, max_terms)
    for i, j in pairs:
        res[j, i] = res[i, j]
    return res


def _covariance(cfg: SystemConfig, x: float, be=None, max_terms: int = nu.SERIES_MAX_TERMS) -> _CovResult:
    """E[I_0 I_d] - E[I]^2 in nats^2 for |rho_d|^2 = x in (0, 1).

    The arithmetic backend defaults to the one chosen by
    :func:`_numeric.backend_for` from the expected cancellation.
    """
    if be is None:
        be = nu.backend_for(x, cfg.m)
    return _covariance_with(cfg, x, be, max_terms)


def _covariance_with(cfg: SystemConfig, x: float, be, max_terms: int):
    m, tau = cfg.m, cfg.tau
    xb = be.num(x)
    zmax = tau + 2 * m - 1
    g1 = _g1_values(be, cfg.x0, zmax)
    plain = nu.eta_matrix(be, m, tau, xb, lambda k: 1)
    mixed = nu.eta_matrix(be, m, tau, xb, lambda k: g1[k])
    one_minus = 1 - xb
    x2 = be.num(cfg.x0) / one_minus
    pairs = [(i, j) for i in range(1, m + 1) for j in range(i, m + 1)]
    if be.precise:
        rtol = be.num(10) ** (-(be.ctx.dps - 4))
        a = _MpSeq(be, x2)
        series = {p: nu.diag_series_mp(be, xb, tau, p[0], p[1], a, rtol) for p in pairs}
    else:
        seq = nu._RunningSeq(nu.scaled_en_block(float(x2)))
        series = nu.diag_series_float(x, tau, pairs, seq, nu.COV_SERIES_RTOL, max_terms)
    diag = [[None] * m for _ in range(m)]
    tails = [[0.0] * m for _ in range(m)]
    for r in range(1, m + 1):
        for s in range(1, m + 1):
            z = tau + r + s - 1
            res = series[min(r, s), max(r, s)]
            pref = one_minus**z / xb ** (s - 1)
            diag[r - 1][s - 1] = pref * res.value
            tails[r - 1][s - 1] = float(pref) * res.tail
    total = nu.sum_rs_determinants(be, m, tau, xb, plain, mixed, diag)
    mu = _mean_nats(cfg, be)
    cov = total - mu * mu
    cof, rs, cs = _cofactors(be, plain, m, tau)
    tail = math.fsum(
        abs(float(cof[r][s] * rs[r] * cs[s])) * tails[r][s] for r in range(m) for s in range(m)
    )
    terms = {(i, j): series[min(i, j), max(i, j)].terms for i in range(1, m + 1) for j in range(1, m + 1)}
    return _CovResult(be.to_float(cov), tail, terms, be.precise)


def _cov_any(cfg: SystemConfig, x: float, var_flat_nats: float) -> tuple[float, float]:
    """Covariance for any |rho|^2 in [0, 1], with the branch selection applied."""
    if x <= 0.0:
        return 0.0, 0.0
    if x >= 1.0 or x > RHO_ONE_CUTOFF:
        return var_flat_nats, 0.0
    r = _covariance(cfg, x)
    return r.cov, r.tail


def cross_covariance(cfg: SystemConfig, rho_d) -> float:
    """Cov(I_0, I_d) = E[I_0 I_d] - E[I]^2 in bits^2."""
    check_cfg(cfg)
    x = _mag2(rho_d)
    if 0.0 < x <= RHO_ONE_CUTOFF:
        return LOG2E2 * _covariance(cfg, x).cov
    return LOG2E2 * _cov_any(cfg, x, _var_flat_nats(cfg))[0]


def cross_moment(cfg: SystemConfig, rho_d) -> float:
    """E[I_0 I_d] in bits^2 for subcarriers with correlation coefficient ``rho_d``.

    ``|rho_d| = 0`` gives ``mean_flat^2`` and ``|rho_d| = 1`` gives
    ``second_moment_flat``; in between the covariance is added to the
    squared mean.

    Raises
    ------
    NonConvergenceError
        If the diagonal series exceeds its term budget.
    """
    check_cfg(cfg)
    x = _mag2(rho_d)
    mu = mean_flat(cfg)
    if x <= 0.0:
        return mu * mu
    if x >= 1.0:
        return second_moment_flat(cfg)
    return mu * mu + cross_covariance(cfg, rho_d)


def _mag2(rho_d) -> float:
    from .channel import snap_mag2

    if isinstance(rho_d, complex) or isinstance(rho_d, np.complexfloating):
        return snap_mag2(complex(rho_d))
    v = float(rho_d)
    if v < 0:
        raise ValueError("pass rho_d itself (complex or |rho_d|), not a negative value")
    return snap_mag2(v)


def _var_flat_nats(cfg: SystemConfig) -> float:
    mu = _mean_nats(cfg)
    return _second_moment_nats(cfg) - mu * mu


def _check_corr(cfg: SystemConfig, corr: CorrelationProfile) -> np.ndarray:
    if corr.N != cfg.subcarriers:
        raise ValueError(f"profile has N={corr.N} but the configuration has N={cfg.subcarriers}")
    return corr.mag2


def _weighted_variance(N: int, mag2: np.ndarray, cov_of, var0: float, threads) -> tuple[float, float]:
    """(2/N^2) sum_d (N-d) cov(x_d) + var0/N, with a fixed reduction order."""
    if N == 1:
        return var0, 0.0
    # |rho_d| = |rho_{N-d}|, so memoise on the value
    keys = sorted({float(v) for v in mag2[1:]})
    workers = threads or 1
    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(cov_of, keys))
    else:
        vals = [cov_of(k) for k in keys]
    table = dict(zip(keys, vals))
    terms = [(N - d) * table[float(mag2[d])][0] for d in range(1, N)]
    tails = [(N - d) * table[float(mag2[d])][1] for d in range(1, N)]
    scale = 2.0 / (N * N)
    return scale * math.fsum(terms) + var0 / N, scale * math.fsum(tails)


def variance_exact(cfg: SystemConfig, corr: CorrelationProfile, threads: int | None = None) -> MiMoments:
    """Exact mean and variance of the OFDM mutual information.

    Parameters
    ----------
    cfg : SystemConfig
    corr : CorrelationProfile
        Must have ``corr.N == cfg.subcarriers``.
    threads : int, optional
        Worker threads for the per-|rho_d| covariances. The reduction
        order is fixed, so the result does not depend on this value.

    Returns
    -------
    MiMoments
        In bits and bits^2, regime ``exact``.
    """
    check_cfg(cfg)
    mag2 = _check_corr(cfg, corr)
    var0 = _var_flat_nats(cfg)
    var, tail = _weighted_variance(cfg.subcarriers, mag2, lambda x: _cov_any(cfg, x, var0), var0, threads)
    return MiMoments(mean_flat(cfg), LOG2E2 * var, "exact", LOG2E2 * tail)


# ---------------------------------------------------------------------------
# single-antenna-side reductions


def _simo_phi(n: int, x0: float, x: float) -> float:
    """(1-x)^n sum_t x^t Gamma(n+t)/t! G2(n+t)^2 / Gamma(n), summed directly."""
    x2 = x0 / (1.0 - x)
    logx = math.log(x)
    total = 0.0
    comp = 0.0
    g2 = math.fsum(scaled_en_sequence(x2, n)[1:])
    h = n
    block = 4096
    t0 = 0
    while True:
        seq = scaled_en_sequence(x2, h + block)
        incs = seq[h + 1:h + block + 1]
        g2s = g2 + np.concatenate([[0.0], np.cumsum(incs[:-1])])
        t = np.arange(t0, t0 + block, dtype=float)
        logw = (
            np.vectorize(math.lgamma, otypes=[float])(n + t)
            - np.vectorize(math.lgamma, otypes=[float])(t + 1)
            - math.lgamma(n)
            + t * logx
            + n * math.log1p(-x)
        )
        terms = np.exp(logw) * g2s * g2s
        for k, term in enumerate(terms):
            y = term - comp
            s = total + y
            comp = (s - total) - y
            total = s
            if t0 + k > 0 and term < 1e-17 * total:
                return total
        g2 = g2s[-1] + incs[-1]
        h += block
        t0 += block
        if t0 > nu.SERIES_MAX_TERMS:
            raise NonConvergenceError("SIMO correlation series", float("nan"), f"|rho|^2={x}")


def variance_exact_simo(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    """Variance for one antenna on one side (m = 1, n > 1), from the reduced single-sum form."""
    if cfg.m != 1 or cfg.n < 2:
        raise ValueError("variance_exact_simo needs min(N_t, N_r) = 1 and max(N_t, N_r) > 1")
    return _single_side_variance(cfg, corr)


def variance_exact_siso(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    """Variance for a single-antenna link (N_t = N_r = 1)."""
    if cfg.nt != 1 or cfg.nr != 1:
        raise ValueError("variance_exact_siso needs N_t = N_r = 1")
    return _single_side_variance(cfg, corr)


def _single_side_variance(cfg: SystemConfig, corr: CorrelationProfile) -> MiMoments:
    mag2 = _check_corr(cfg, corr)
    n, x0 = cfg.n, cfg.x0
    g1n = math.fsum(scaled_en_sequence(x0, n)[1:])
    mean_sq = g1n * g1n
    phi_one = log2_moment(n - 1, x0) / math.gamma(n)
    N = cfg.subcarriers
    phis = {}
    for v in sorted({float(v) for v in mag2[1:]}):
        if v <= 0.0:
            phis[v] = mean_sq
        elif v > RHO_ONE_CUTOFF:
            phis[v] = phi_one
        else:
            phis[v] = _simo_phi(n, x0, v)
    total = math.fsum((N - d) * phis[float(mag2[d])] for d in range(1, N))
    var = 2.0 / (N * N) * total - mean_sq + phi_one / N
    return MiMoments(LOG2E * g1n, LOG2E2 * var, "exact", 0.0)
