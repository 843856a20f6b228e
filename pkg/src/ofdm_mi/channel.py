"""System configuration, power delay profiles and frequency correlation.

The subcarrier channel matrices of an L-tap Rayleigh FIR channel are
identically distributed, and entries d subcarriers apart have correlation
coefficient ``rho_d``, the DFT of the tap powers. Only ``|rho_d|`` enters
the moment formulas.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PDP_SUM_TOL = 1e-6
SNAP_ONE = 1e-9
SNAP_ZERO = 1e-12
MAX_M = 8


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, subcarrier count and linear SNR.

    Attributes
    ----------
    nt, nr : int
        Transmit and receive antennas.
    subcarriers : int
        Number of OFDM subcarriers N.
    snr : float
        Linear SNR per receive antenna per subcarrier.
    """

    nt: int
    nr: int
    subcarriers: int
    snr: float

    def __post_init__(self):
        for name in ("nt", "nr", "subcarriers"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not (self.snr > 0 and math.isfinite(self.snr)):
            raise ValueError(f"snr must be positive and finite, got {self.snr!r}")

    @classmethod
    def from_db(cls, nt: int, nr: int, subcarriers: int, snr_db: float) -> "SystemConfig":
        return cls(nt, nr, subcarriers, 10.0 ** (snr_db / 10.0))

    @property
    def m(self) -> int:
        return min(self.nt, self.nr)

    @property
    def n(self) -> int:
        return max(self.nt, self.nr)

    @property
    def tau(self) -> int:
        return self.n - self.m

    @property
    def x0(self) -> float:
        """N_t / gamma, the argument of the exponential integrals."""
        return self.nt / self.snr

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tap powers of the FIR channel, normalised to unit sum."""

    taps: tuple[float, ...]

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("a PDP needs at least one tap")
        if np.any(~np.isfinite(taps)) or np.any(taps < 0):
            raise ValueError("tap powers must be finite and nonnegative")
        total = math.fsum(taps)
        if abs(total - 1.0) > PDP_SUM_TOL:
            raise ValueError(f"tap powers sum to {total}, not 1 (tolerance {PDP_SUM_TOL})")
        object.__setattr__(self, "taps", tuple(float(t) for t in taps / total))

    @property
    def length(self) -> int:
        return len(self.taps)

    def to_dict(self) -> dict:
        return {"taps": list(self.taps)}


def uniform_pdp(L: int) -> PowerDelayProfile:
    """L equal taps of power 1/L."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    return PowerDelayProfile((1.0 / L,) * L)


def exponential_pdp(L: int, k_exp: float) -> PowerDelayProfile:
    """Exponentially decaying taps, power proportional to exp(-p / k_exp)."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not k_exp > 0:
        raise ValueError(f"k_exp must be positive, got {k_exp}")
    p = np.arange(L)
    scale = -math.expm1(-1.0 / k_exp) / -math.expm1(-L / k_exp)
    return PowerDelayProfile(tuple(scale * np.exp(-p / k_exp)))


def parse_pdp(text: str) -> PowerDelayProfile:
    """Build a PDP from ``uniform:L=4``, ``exp:L=8,K=4``, a JSON string or a JSON file path.

    The JSON form is ``{"taps": [...]}``.
    """
    text = text.strip()
    m = re.fullmatch(r"uniform:L=(\d+)", text)
    if m:
        return uniform_pdp(int(m.group(1)))
    m = re.fullmatch(r"exp:L=(\d+),K=([0-9.eE+-]+)", text)
    if m:
        return exponential_pdp(int(m.group(1)), float(m.group(2)))
    if text.startswith("{"):
        doc = json.loads(text)
    elif Path(text).is_file():
        doc = json.loads(Path(text).read_text())
    else:
        raise ValueError(f"unrecognised PDP description {text!r}")
    if not isinstance(doc, dict) or "taps" not in doc:
        raise ValueError('PDP JSON must be an object with a "taps" list')
    return PowerDelayProfile(tuple(doc["taps"]))


@dataclass(frozen=True)
class CorrelationProfile:
    """Frequency correlation coefficients rho_d, d = 0..N-1.

    ``mag2`` holds |rho_d|^2 after snapping values near 0 or 1, which is
    what the moment formulas consume.
    """

    rho: np.ndarray = field(repr=False)
    N: int

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (self.N,):
            raise ValueError("rho must have length N")
        object.__setattr__(self, "rho", rho)

    @property
    def mag2(self) -> np.ndarray:
        return np.array([snap_mag2(r) for r in self.rho])


def snap_mag2(rho: complex) -> float:
    """|rho|^2 with magnitudes near 1 or 0 snapped exactly."""
    mag = abs(rho)
    if mag > 1.0 + SNAP_ONE:
        raise ValueError(f"|rho| = {mag} exceeds 1")
    if mag >= 1.0 - SNAP_ONE:
        return 1.0
    if mag <= SNAP_ZERO:
        return 0.0
    return mag * mag


def correlation_profile(pdp: PowerDelayProfile, N: int) -> CorrelationProfile:
    """rho_d = sum_p sigma_p^2 exp(-j 2 pi d p / N), evaluated directly."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if pdp.length > N:
        raise ValueError(f"{pdp.length} taps exceed {N} subcarriers")
    d = np.arange(N)[:, None]
    p = np.arange(pdp.length)[None, :]
    rho = np.exp(-2j * np.pi * ((d * p) % N) / N) @ np.asarray(pdp.taps)
    rho[0] = 1.0
    return CorrelationProfile(rho, N)


def uniform_rho_closed_form(L: int, N: int, d: int) -> complex:
    """Sin-ratio closed form of rho_d for a uniform L-tap profile.

    The phase follows the DFT of a length-L window, exp(-j pi d (L-1) / N);
    only the magnitude is used downstream.
    """
    if not 1 <= L <= N:
        raise ValueError("need 1 <= L <= N")
    if d % N == 0:
        return 1.0 + 0.0j
    mag = math.sin(math.pi * d * L / N) / (L * math.sin(math.pi * d / N))
    return mag * complex(math.cos(math.pi * d * (L - 1) / N), -math.sin(math.pi * d * (L - 1) / N))


def check_cfg(cfg: SystemConfig) -> None:
    if cfg.m > MAX_M:
        raise ValueError(f"min(N_t, N_r) = {cfg.m} exceeds the supported maximum {MAX_M}")
