"""Special-function kernels used by the analytic moment formulas.

Exponential integrals are only ever formed in the scaled form
``e^x E_h(x)``. The moment formulas multiply very large exponentials by
very small ``E_h`` values; keeping the pair fused avoids overflow at low
SNR and near-unit correlation.

All logarithmic quantities are in nats.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import NonConvergenceError
from .quadrature import adaptive_gk, exp_sinh

EULER_GAMMA = 0.57721566490153286061
PI2_6 = math.pi**2 / 6.0

_EPS = 1e-16
_FPMIN = 1e-300
# Beyond this value of h + x the asymptotic expansion in 1/(x + h) is
# accurate to machine precision and is used instead of the recurrence.
_ASYMPTOTIC_SCALE = 2.0e4


def _expx_en_direct(h: int, x: float) -> float:
    """e^x E_h(x) from the power series (x <= 1) or continued fraction (x > 1)."""
    nm1 = h - 1
    if x > 1.0:
        # modified Lentz evaluation of the continued fraction
        b = x + h
        c = 1.0 / _FPMIN
        d = 1.0 / b
        acc = d
        for i in range(1, 10000):
            an = -i * (nm1 + i)
            b += 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            acc *= delta
            if abs(delta - 1.0) < _EPS:
                return acc
        raise NonConvergenceError("exponential integral continued fraction")
    ans = 1.0 / nm1 if nm1 != 0 else -math.log(x) - EULER_GAMMA
    fact = 1.0
    for i in range(1, 10000):
        fact *= -x / i
        if i != nm1:
            delta = -fact / (i - nm1)
        else:
            psi = -EULER_GAMMA + math.fsum(1.0 / k for k in range(1, nm1 + 1))
            delta = fact * (-math.log(x) + psi)
        ans += delta
        if abs(delta) < abs(ans) * _EPS:
            return ans * math.exp(x)
    raise NonConvergenceError("exponential integral series")


def _expx_en_asymptotic(h: np.ndarray, x: float) -> np.ndarray:
    """Large (x + h) expansion of e^x E_h(x), relative error O((x+h)^-4)."""
    s = x + h
    s2 = s * s
    corr = 1.0 + h / s2 + h * (h - 2.0 * x) / (s2 * s2)
    corr += h * (6.0 * x * x - 8.0 * h * x + h * h) / (s2 * s2 * s2)
    return corr / s


def scaled_en_sequence(x: float, hmax: int) -> np.ndarray:
    """Return ``F`` with ``F[h] = e^x E_h(x)`` for ``h = 1..hmax`` (``F[0]`` unused).

    The recurrence ``h F[h+1] = 1 - x F[h]`` is stable upwards for h > x
    and downwards for h < x, so it is run in both directions from a
    directly evaluated pivot near ``h = x``. Orders with ``x + h`` beyond
    ``_ASYMPTOTIC_SCALE`` use the asymptotic expansion instead.
    """
    if not x > 0.0:
        raise ValueError(f"x must be positive, got {x}")
    if hmax < 1:
        raise ValueError(f"hmax must be >= 1, got {hmax}")
    out = np.empty(hmax + 1)
    out[0] = np.nan
    h_loop = int(min(hmax, max(0.0, _ASYMPTOTIC_SCALE - x)))
    if h_loop >= 1:
        pivot = min(max(1, int(x)), h_loop)
        out[pivot] = _expx_en_direct(pivot, x)
        for h in range(pivot - 1, 0, -1):
            out[h] = (1.0 - h * out[h + 1]) / x
        for h in range(pivot, h_loop):
            out[h + 1] = (1.0 - x * out[h]) / h
    if h_loop < hmax:
        hs = np.arange(h_loop + 1, hmax + 1, dtype=float)
        out[h_loop + 1:] = _expx_en_asymptotic(hs, x)
    return out


def expx_en(h: int, x: float) -> float:
    """Scaled exponential integral e^x E_h(x).

    Parameters
    ----------
    h : int
        Order, ``h >= 1``.
    x : float
        Argument, ``x > 0``.

    Returns
    -------
    float
        ``e^x E_h(x)`` to about 1e-14 relative accuracy.
    """
    if h < 1 or not x > 0.0:
        raise ValueError(f"expx_en needs h >= 1 and x > 0, got h={h}, x={x}")
    return float(scaled_en_sequence(x, h)[h])


def scaled_en_sum(z: int, x: float) -> float:
    """e^x * sum_{h=1}^{z} E_h(x)."""
    if z < 1:
        raise ValueError(f"z must be >= 1, got {z}")
    return math.fsum(scaled_en_sequence(x, z)[1:])


def g1(z: int, cfg) -> float:
    """Scaled sum of E_h over h=1..z at x = N_t / gamma."""
    return scaled_en_sum(z, cfg.x0)


def g2(z: int, cfg, rho_mag2: float) -> float:
    """Scaled sum of E_h over h=1..z at x = N_t / (gamma (1 - |rho|^2))."""
    if not 0.0 <= rho_mag2 < 1.0:
        raise ValueError(f"rho_mag2 must lie in [0, 1), got {rho_mag2}")
    return scaled_en_sum(z, cfg.x0 / (1.0 - rho_mag2))


@lru_cache(maxsize=4096)
def harmonic(z: int) -> float:
    """Harmonic number H(z), with H(0) = 0."""
    if z < 0:
        raise ValueError(f"harmonic number needs z >= 0, got {z}")
    return math.fsum(1.0 / k for k in range(1, z + 1))


def digamma_int(k: int) -> float:
    """psi(k) = H(k-1) - Euler's constant."""
    if k < 1:
        raise ValueError(f"digamma_int needs k >= 1, got {k}")
    return harmonic(k - 1) - EULER_GAMMA


def trigamma_int(k: int) -> float:
    """psi'(k) = pi^2/6 - sum_{j<k} 1/j^2."""
    if k < 1:
        raise ValueError(f"trigamma_int needs k >= 1, got {k}")
    if k >= 20:
        # asymptotic series; avoids cancellation against pi^2/6
        inv = 1.0 / k
        inv2 = inv * inv
        return inv + inv2 / 2 + inv * inv2 * (1 / 6 - inv2 * (1 / 30 - inv2 * (1 / 42 - inv2 / 30)))
    return PI2_6 - math.fsum(1.0 / j**2 for j in range(1, k))


def dilog(x: float) -> float:
    """Dilogarithm Li_2(x) = sum_k x^k / k^2 on [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"dilog is defined here on [0, 1], got {x}")
    if x == 1.0:
        return PI2_6
    if x > 0.5:
        return PI2_6 - math.log(x) * math.log1p(-x) - dilog(1.0 - x)
    total = 0.0
    term_pow = x
    k = 1
    while term_pow > 0.0:
        term = term_pow / (k * k)
        total += term
        if term < _EPS * total:
            break
        k += 1
        term_pow *= x
    return total


def pochhammer(a: float, r: int) -> float:
    """Rising factorial (a)_r = a (a+1) ... (a+r-1), with (a)_0 = 1."""
    if r < 0:
        raise ValueError(f"pochhammer needs r >= 0, got {r}")
    out = 1.0
    for k in range(r):
        out *= a + k
    return out


def _bessel_i_scaled_series(tau: int, x: np.ndarray, terms: int = 90) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k = np.arange(terms, dtype=float).reshape((-1,) + (1,) * x.ndim)
    safe = np.where(x > 0, x, 1.0)
    logs = (tau + 2 * k) * np.log(safe / 2) - _lgamma(k + 1) - _lgamma(k + tau + 1) - safe
    val = np.exp(logs).sum(axis=0)
    zero = 1.0 if tau == 0 else 0.0
    return np.where(x > 0, val, zero)


def _bessel_i_scaled_asymptotic(tau: int, x: np.ndarray, terms: int = 60) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mu = 4.0 * tau * tau
    total = np.ones_like(x)
    term = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, terms):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        # stop at the smallest term of the divergent tail
        active &= np.abs(nxt) < np.abs(term)
        total = np.where(active, total + nxt, total)
        term = np.where(active, nxt, term)
        if not active.any():
            break
    return total / np.sqrt(2.0 * np.pi * x)


_lgamma = np.vectorize(math.lgamma, otypes=[float])


def bessel_i_scaled(tau: int, x):
    """Exponentially scaled modified Bessel function e^{-x} I_tau(x).

    Uses the power series for ``x <= 30`` and the large-argument expansion
    above. Accepts scalars or arrays.
    """
    if tau < 0:
        raise ValueError(f"order must be nonnegative, got {tau}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("bessel_i_scaled needs x >= 0")
    # the large-argument expansion needs x well above tau^2
    use_asym = arr > max(30.0, 2.0 * tau * tau)
    out = np.empty_like(arr)
    if np.any(~use_asym):
        small = arr[~use_asym]
        n_terms = int(90 + (small.max() if small.size else 0))
        out[~use_asym] = _bessel_i_scaled_series(tau, small, n_terms)
    if np.any(use_asym):
        out[use_asym] = _bessel_i_scaled_asymptotic(tau, arr[use_asym])
    return float(out) if out.ndim == 0 else out


def _log2_integrand(b: int, beta: float):
    def f(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", under="ignore"):
            weight = np.exp(b * np.log(u) - u) if b else np.exp(-u)
        return np.log1p(u / beta) ** 2 * weight
    return f


def log2_moment(b: int, beta: float) -> float:
    """Integral of ln^2(1 + u/beta) u^b e^{-u} over [0, inf).

    Evaluated by adaptive Gauss-Kronrod on a truncated interval seeded with
    breakpoints around ``u = beta``.

    Raises
    ------
    NonConvergenceError
        If the panel budget is exhausted.
    """
    if b < 0 or not beta > 0.0:
        raise ValueError(f"log2_moment needs b >= 0 and beta > 0, got b={b}, beta={beta}")
    upper = b + 60.0 + 15.0 * math.sqrt(b + 1.0)
    bps = [beta * 10.0**k for k in range(-3, 4)] + [1.0, b + 1.0]
    value, _ = adaptive_gk(_log2_integrand(b, beta), 0.0, upper, breakpoints=bps)
    return value


def log2_moment_exp_sinh(b: int, beta: float) -> float:
    """Same integral as :func:`log2_moment`, by the double-exponential rule."""
    return exp_sinh(_log2_integrand(b, beta))


def log1_moment(q: int, alpha: float, b: float) -> float:
    """Closed form of the integral of ln(1 + alpha*l) l^(q-1) e^(-b*l) over [0, inf).

    Equal to Gamma(q) b^-q e^{b/alpha} sum_{h=1}^{q} E_h(b/alpha).
    """
    if q < 1 or not alpha > 0.0 or not b > 0.0:
        raise ValueError("log1_moment needs q >= 1, alpha > 0, b > 0")
    return math.exp(math.lgamma(q) - q * math.log(b)) * scaled_en_sum(q, b / alpha)
