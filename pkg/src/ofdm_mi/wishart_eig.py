"""Joint density of one eigenvalue from each of two frequency-correlated Wishart matrices.

``H_k H_k^H`` and ``H_l H_l^H`` are complex Wishart matrices whose
generating Gaussians have correlation ``rho_d``. An arbitrarily selected
nonzero eigenvalue ``lambda`` of the first and ``omega`` of the second
have a joint density given by a sum of m x m determinants involving a
modified Bessel function. This module evaluates it directly and
integrates it on a tensor grid, giving a check of the cross-moment
formulas that shares no code with them.

It is an oracle: clarity wins over speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .channel import SystemConfig, check_cfg
from .specfun import bessel_i_scaled

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
PANEL_WIDTH = 0.1  # in sqrt(lambda) units
CHUNK = 48


@dataclass(frozen=True)
class EigenPairDensity:
    """Precomputed pieces of the joint eigenvalue density at one |rho|^2.

    Attributes
    ----------
    cfg : SystemConfig
        Only the antenna counts are used.
    rho_mag2 : float
        |rho_d|^2, strictly between 0 and 1.
    """

    cfg: SystemConfig
    rho_mag2: float
    log_pref: float = field(init=False, repr=False)
    plain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        check_cfg(self.cfg)
        x = float(self.rho_mag2)
        if not 0.0 < x < 1.0:
            raise ValueError(f"rho_mag2 must lie in (0, 1), got {x}")
        m, n, tau = self.cfg.m, self.cfg.n, self.cfg.tau
        log_gm = sum(math.lgamma(n - i) + math.lgamma(m - i) for i in range(m))
        log_pref = -0.5 * m * (n - 1) * math.log(x) - log_gm - 2 * math.log(m) - m * math.log1p(-x)
        plain = np.empty((m, m))
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                s = sum(
                    comb(j - 1, t) * (x / (1 - x)) ** t * math.exp(math.lgamma(tau + i + t) - math.lgamma(tau + t + 1))
                    for t in range(j)
                )
                plain[i - 1, j - 1] = self._row_const(j) * s
        object.__setattr__(self, "log_pref", log_pref)
        object.__setattr__(self, "plain", plain)

    def _row_const(self, k: int) -> float:
        """Gamma(tau+k) |rho|^tau (1-|rho|^2)^k."""
        x, tau = self.rho_mag2, self.cfg.tau
        return math.exp(math.lgamma(tau + k) + 0.5 * tau * math.log(x) + k * math.log1p(-x))

    def _edge(self, k: int, other: int, v: np.ndarray) -> np.ndarray:
        """Entries of the row (or column) carrying a single eigenvalue ``v``.

        ``k`` indexes the binomial sum and ``other`` sets the power of ``v``.
        """
        x, tau = self.rho_mag2, self.cfg.tau
        acc = np.zeros_like(v)
        for t in range(k):
            acc += comb(k - 1, t) * (x * v / (1 - x)) ** t / math.factorial(tau + t)
        return self._row_const(k) * np.exp(-v + (tau + other - 1) * np.log(v)) * acc


def joint_pdf(density: EigenPairDensity, lam, omega):
    """Joint density f(lambda, omega) of two arbitrarily selected eigenvalues.

    Broadcasts over ``lam`` and ``omega``.
    """
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(lam <= 0) or np.any(omega <= 0):
        raise ValueError("eigenvalues must be positive")
    lam, omega = np.broadcast_arrays(lam, omega)
    shape = lam.shape
    lam = lam.ravel()
    omega = omega.ravel()
    m, tau = density.cfg.m, density.cfg.tau
    x = density.rho_mag2
    y = 2.0 * np.sqrt(x * lam * omega) / (1.0 - x)
    # exp(-(lam+omega)/(1-x)) I_tau(y) = exp(y - (lam+omega)/(1-x)) * ive(y)
    bess = bessel_i_scaled(tau, y)
    expo = y - (lam + omega) / (1.0 - x)
    log_l = np.log(lam)
    log_w = np.log(omega)
    total = np.zeros_like(lam)
    b_rows = {(i, j): density._edge(j, i, lam) for i in range(1, m + 1) for j in range(1, m + 1)}
    c_cols = {(i, j): density._edge(i, j, omega) for i in range(1, m + 1) for j in range(1, m + 1)}
    mats = np.empty((lam.size, m, m))
    for r in range(1, m + 1):
        for s in range(1, m + 1):
            mats[:] = density.plain
            for j in range(1, m + 1):
                if j != s:
                    mats[:, r - 1, j - 1] = b_rows[r, j]
            for i in range(1, m + 1):
                if i != r:
                    mats[:, i - 1, s - 1] = c_cols[i, s]
            mats[:, r - 1, s - 1] = np.exp(
                (0.5 * tau + r - 1) * log_l + (0.5 * tau + s - 1) * log_w + expo
            ) * bess
            total += np.linalg.det(mats)
    return (math.exp(density.log_pref) * total).reshape(shape)


def marginal_pdf(cfg: SystemConfig, lam):
    """Density of one arbitrarily selected nonzero eigenvalue of an uncorrelated Wishart matrix.

    ``(1/m) sum_k k!/(k+tau)! [L_k^tau(lambda)]^2 lambda^tau e^-lambda``.
    """
    lam = np.asarray(lam, dtype=float)
    m, tau = cfg.m, cfg.tau
    out = np.zeros_like(lam)
    for k in range(m):
        w = np.exp(gammaln(k + 1) - gammaln(k + tau + 1))
        out += w * eval_genlaguerre(k, tau, lam) ** 2
    return out * np.exp(tau * np.log(np.where(lam > 0, lam, 1.0)) - lam) * (lam > 0 if tau else 1) / m


def _nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights in lambda for the sqrt-coordinate panel rule on [0, n + 40 sqrt(n)]."""
    s_max = math.sqrt(n + 40.0 * math.sqrt(n))
    panels = int(math.ceil(s_max / PANEL_WIDTH))
    edges = np.linspace(0.0, s_max, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    s = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    ws = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return s * s, 2.0 * s * ws


def cross_functional(density: EigenPairDensity, f: Callable, g: Callable) -> float:
    """m^2 times the integral of f(lambda) g(omega) f_joint(lambda, omega).

    ``f`` and ``g`` must accept numpy arrays. With ``f = g = alpha`` where
    ``alpha(v) = log2(1 + gamma v / N_t)`` this is E[I_k I_l].

    The domain is truncated at ``n + 40 sqrt(n)`` in each variable.
    Rows of the tensor grid are reduced in a fixed order.
    """
    lam, w = _nodes(density.cfg.n)
    fv = np.asarray(f(lam), dtype=float) * w
    gv = np.asarray(g(lam), dtype=float) * w
    if fv.shape != lam.shape:
        fv = np.broadcast_to(fv, lam.shape)
        gv = np.broadcast_to(gv, lam.shape)
    partial = []
    for a in range(0, lam.size, CHUNK):
        la = lam[a:a + CHUNK, None]
        pdf = joint_pdf(density, la, lam[None, :])
        partial.append(float(fv[a:a + CHUNK] @ (pdf @ gv)))
    return density.cfg.m ** 2 * math.fsum(partial)


def mi_alpha(cfg: SystemConfig) -> Callable[[np.ndarray], np.ndarray]:
    """alpha(v) = log2(1 + gamma v / N_t), the per-eigenvalue contribution in bits."""
    c = cfg.snr / cfg.nt
    return lambda v: np.log1p(c * np.asarray(v, dtype=float)) / math.log(2.0)
