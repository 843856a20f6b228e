"""Gaussian and Gamma approximations of the mutual-information distribution.

Both families are fitted by matching the first two moments. The Gamma
density is ``theta^r x^(r-1) exp(-theta x) / Gamma(r)``, so ``theta`` is a
rate: ``r = mean^2 / var`` and ``theta = mean / var``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, gammainc, gammaln

from .exact_moments import MiMoments

FAMILIES = ("gaussian", "gamma")
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DistApprox:
    """A fitted two-parameter approximation.

    ``shape`` and ``rate`` are set only for the gamma family.
    """

    family: str
    mean_bits: float
    variance_bits2: float
    shape: float | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not self.variance_bits2 > 0:
            raise ValueError(f"variance must be positive, got {self.variance_bits2}")
        if self.family == "gamma" and not (self.shape and self.shape > 0 and self.rate and self.rate > 0):
            raise ValueError("gamma family needs positive shape and rate")

    def to_dict(self) -> dict:
        out = {"family": self.family, "mean_bits": self.mean_bits, "variance_bits2": self.variance_bits2}
        if self.family == "gamma":
            out.update(shape=self.shape, rate=self.rate)
        return out


def _moments(moments) -> tuple[float, float]:
    if isinstance(moments, MiMoments):
        return moments.mean_bits, moments.variance_bits2
    mean, var = moments
    return float(mean), float(var)


def gaussian_approx(moments) -> DistApprox:
    """Normal law with the given mean and variance.

    ``moments`` is a :class:`MiMoments` or a ``(mean, variance)`` pair.
    """
    mean, var = _moments(moments)
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    return DistApprox("gaussian", mean, var)


def gamma_approx(moments) -> DistApprox:
    """Moment-matched Gamma law, shape ``mean^2/var`` and rate ``mean/var``."""
    mean, var = _moments(moments)
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    if not mean > 0:
        raise ValueError(f"gamma fit needs a positive mean, got {mean}")
    return DistApprox("gamma", mean, var, shape=mean * mean / var, rate=mean / var)


def pdf(d: DistApprox, x):
    x = np.asarray(x, dtype=float)
    if d.family == "gaussian":
        z = (x - d.mean_bits) / math.sqrt(d.variance_bits2)
        return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi * d.variance_bits2)
    if np.any(x < 0):
        raise ValueError("gamma pdf needs x >= 0")
    r, th = d.shape, d.rate
    with np.errstate(divide="ignore"):
        logp = r * math.log(th) + (r - 1) * np.log(x) - th * x - gammaln(r)
    return np.exp(logp)


def cdf(d: DistApprox, x):
    x = np.asarray(x, dtype=float)
    if d.family == "gaussian":
        return 0.5 * erfc(-(x - d.mean_bits) / (_SQRT2 * math.sqrt(d.variance_bits2)))
    if np.any(x < 0):
        raise ValueError("gamma cdf needs x >= 0")
    return gammainc(d.shape, d.rate * x)


def q_function(z):
    """Gaussian tail probability Q(z) = erfc(z / sqrt 2) / 2."""
    return 0.5 * erfc(np.asarray(z, dtype=float) / _SQRT2)


# Acklam's rational approximation of the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        return num / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    if p > 1 - _P_LOW:
        return -_acklam(1 - p)
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    return num / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)


def q_inverse(q: float) -> float:
    """Q^{-1}(q): rational start refined by one Newton step on Q."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if q > 0.5:
        # 1 - q is exact here, and the Newton step is accurate in the small tail
        return -q_inverse(1.0 - q)
    z = -_acklam(q)
    # Q'(z) = -phi(z); one Newton step takes the 1e-9 start to ~1e-16
    err = float(q_function(z)) - q
    return z + err * math.sqrt(2 * math.pi) * math.exp(0.5 * z * z)


def outage_capacity(d: DistApprox, q: float) -> float:
    """Rate exceeded with probability 1 - q: ``mean - sqrt(var) Q^{-1}(q)``."""
    if d.family != "gaussian":
        raise ValueError("outage_capacity is defined for the gaussian approximation")
    return d.mean_bits - math.sqrt(d.variance_bits2) * q_inverse(q)


def ks_distance(d: DistApprox, samples) -> float:
    """Kolmogorov-Smirnov distance between the fitted CDF and the sample ECDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    if d.family == "gamma":
        x_eval = np.maximum(x, 0.0)
    else:
        x_eval = x
    F = cdf(d, x_eval)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def dkw_epsilon(n: int, alpha: float) -> float:
    """Half-width of the 1 - alpha Dvoretzky-Kiefer-Wolfowitz band for n samples."""
    if n < 1 or not 0 < alpha < 1:
        raise ValueError("need n >= 1 and 0 < alpha < 1")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def outage_in_dkw_band(d: DistApprox, samples, qs, alpha: float = 0.01) -> tuple[bool, float]:
    """Check that each (outage_capacity(q), q) point lies in the ECDF's DKW band.

    Returns ``(inside, worst)``, where ``worst`` is the largest
    ``|ECDF(c_q) - q|`` relative to the band half-width.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    eps = dkw_epsilon(x.size, alpha)
    worst = 0.0
    for q in qs:
        c = outage_capacity(d, float(q))
        emp = np.searchsorted(x, c, side="right") / x.size
        worst = max(worst, abs(emp - q) / eps)
    return worst <= 1.0, worst
