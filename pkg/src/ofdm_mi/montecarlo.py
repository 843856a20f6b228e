"""Seeded Monte-Carlo simulation of the OFDM MIMO mutual information.

Trials are grouped into fixed-size blocks. Block ``b`` draws from a
Philox stream keyed by the seed with ``b`` placed in the top word of the
counter, so every block owns a disjoint substream and a trial's value
does not depend on how blocks are spread over threads. Samples are
concatenated in trial order before any reduction, which makes results
bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple

import numpy as np

from .channel import PowerDelayProfile, SystemConfig

ECDF_MAX = 10**6
SKETCH_POINTS = 10001
_BLOCK_ELEMS = 2**20  # complex entries per block, bounds memory
_LOG2E = 1.0 / math.log(2.0)


def block_size(cfg: SystemConfig) -> int:
    """Trials per block. Depends only on the configuration, never on threads."""
    per_trial = cfg.subcarriers * cfg.nr * cfg.nt
    return int(max(1, min(4096, _BLOCK_ELEMS // per_trial)))


def _generator(seed: int, block: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed, counter=block << 192))


def tap_block(cfg: SystemConfig, pdp: PowerDelayProfile, seed: int, block: int, count: int) -> np.ndarray:
    """CN(0,1) tap matrices, shape ``(count, L, N_r, N_t)``.

    Box-Muller: ``sqrt(-ln(1-u1)) exp(j 2 pi u2)`` has unit mean power.
    Draws are laid out trial-major, so the first ``k`` trials of a block
    do not depend on ``count``.
    """
    u = _generator(seed, block).random((count, pdp.length, cfg.nr, cfg.nt, 2))
    r = np.sqrt(-np.log1p(-u[..., 0]))
    return r * np.exp(2j * np.pi * u[..., 1])


def subcarrier_matrices(cfg: SystemConfig, pdp: PowerDelayProfile, taps: np.ndarray, ks=None) -> np.ndarray:
    """H_k = sum_p sigma_p H[p] exp(-j 2 pi k p / N), computed as a direct sum.

    Returns shape ``(count, len(ks), N_r, N_t)``.
    """
    N = cfg.subcarriers
    if pdp.length > N:
        raise ValueError(f"{pdp.length} taps exceed {N} subcarriers")
    ks = np.arange(N) if ks is None else np.asarray(ks)
    p = np.arange(pdp.length)
    phase = np.exp(-2j * np.pi * ((ks[:, None] * p[None, :]) % N) / N)
    weights = phase * np.sqrt(np.asarray(pdp.taps))[None, :]
    return np.einsum("kp,tpij->tkij", weights, taps)


def subcarrier_mi(cfg: SystemConfig, H: np.ndarray) -> np.ndarray:
    """log2 det(I + gamma/N_t H H^H) over the trailing two axes, via Cholesky of the m x m Gram."""
    c = cfg.snr / cfg.nt
    if cfg.nr <= cfg.nt:
        gram = H @ np.conj(np.swapaxes(H, -1, -2))
    else:
        gram = np.conj(np.swapaxes(H, -1, -2)) @ H
    gram = c * gram + np.eye(cfg.m)
    L = np.linalg.cholesky(gram)
    diag = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * _LOG2E * np.sum(np.log(diag), axis=-1)


def _block_mi(cfg, pdp, seed, block, count):
    H = subcarrier_matrices(cfg, pdp, tap_block(cfg, pdp, seed, block, count))
    return subcarrier_mi(cfg, H).mean(axis=1)


def _block_cross(cfg, pdp, d, seed, block, count):
    H = subcarrier_matrices(cfg, pdp, tap_block(cfg, pdp, seed, block, count), ks=[0, d])
    mi = subcarrier_mi(cfg, H)
    return mi[:, 0] * mi[:, 1]


def _run_blocks(fn, cfg, trials: int, threads: int | None) -> np.ndarray:
    B = block_size(cfg)
    jobs = [(b, min(B, trials - b * B)) for b in range(-(-trials // B))]
    workers = max(1, int(threads or 1))
    if workers == 1 or len(jobs) == 1:
        parts = [fn(b, c) for b, c in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts)


def simulate_samples(
    cfg: SystemConfig, pdp: PowerDelayProfile, trials: int, seed: int, threads: int | None = None
) -> np.ndarray:
    """Realizations of I_ofdm in bits, in trial order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return _run_blocks(lambda b, c: _block_mi(cfg, pdp, seed, b, c), cfg, trials, threads)


def sample_mi(cfg: SystemConfig, pdp: PowerDelayProfile, seed: int, trial: int = 0) -> float:
    """One realization of I_ofdm = (1/N) sum_k I_k in bits.

    ``trial`` selects the realization; it equals element ``trial`` of
    :func:`simulate_samples` with the same seed.
    """
    B = block_size(cfg)
    b, off = divmod(trial, B)
    return float(_block_mi(cfg, pdp, seed, b, off + 1)[off])


def _sketch(sorted_samples: np.ndarray) -> np.ndarray:
    q = np.linspace(0.0, 1.0, SKETCH_POINTS)
    return np.quantile(sorted_samples, q)


def _stderr_variance(x: np.ndarray, s2: float) -> float:
    n = x.size
    if n < 4:
        return math.nan
    mu4 = float(np.mean((x - x.mean()) ** 4))
    return math.sqrt(max(mu4 - s2 * s2 * (n - 3) / (n - 1), 0.0) / n)


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo summary of I_ofdm.

    ``ecdf`` holds the sorted samples when ``trials <= ECDF_MAX`` and an
    equally spaced quantile sketch otherwise (``ecdf_is_sketch``).
    """

    mean: float
    variance: float
    stderr_mean: float
    stderr_variance: float
    trials: int
    seed: int
    ecdf: np.ndarray = field(repr=False)
    ecdf_is_sketch: bool = False

    def cdf(self, x):
        """Empirical CDF (linear interpolation of the sketch if sketched)."""
        x = np.asarray(x, dtype=float)
        if self.ecdf_is_sketch:
            return np.interp(x, self.ecdf, np.linspace(0.0, 1.0, self.ecdf.size), left=0.0, right=1.0)
        return np.searchsorted(self.ecdf, x, side="right") / self.ecdf.size

    def to_dict(self) -> dict:
        return {
            "mean_bits": self.mean,
            "variance_bits2": self.variance,
            "stderr_mean": self.stderr_mean,
            "stderr_variance": self.stderr_variance,
            "trials": self.trials,
            "seed": self.seed,
        }


def summarize(samples: np.ndarray, seed: int) -> McEstimate:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 trials")
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1))
    srt = np.sort(x)
    sketch = n > ECDF_MAX
    return McEstimate(
        mean=mean,
        variance=var,
        stderr_mean=math.sqrt(var / n),
        stderr_variance=_stderr_variance(x, var),
        trials=n,
        seed=seed,
        ecdf=_sketch(srt) if sketch else srt,
        ecdf_is_sketch=sketch,
    )


def estimate(
    cfg: SystemConfig, pdp: PowerDelayProfile, trials: int, seed: int, threads: int | None = None
) -> McEstimate:
    """Sample mean and variance of I_ofdm with standard errors.

    The variance standard error uses the fourth central moment,
    ``sqrt((mu4 - s^4 (n-3)/(n-1)) / n)``.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    return summarize(simulate_samples(cfg, pdp, trials, seed, threads), seed)


class CrossEstimate(NamedTuple):
    value: float
    stderr: float
    trials: int
    seed: int


def estimate_cross_moment(
    cfg: SystemConfig, pdp: PowerDelayProfile, d: int, trials: int, seed: int, threads: int | None = None
) -> CrossEstimate:
    """Sample average of I_0 I_d (bits^2) with its standard error."""
    if not 0 <= d < cfg.subcarriers:
        raise ValueError(f"d must lie in [0, {cfg.subcarriers}), got {d}")
    if trials < 2:
        raise ValueError("trials must be >= 2")
    prod = _run_blocks(lambda b, c: _block_cross(cfg, pdp, d, seed, b, c), cfg, trials, threads)
    return CrossEstimate(float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(trials)), trials, seed)


def write_samples(samples: np.ndarray, stream: BinaryIO) -> int:
    """Write samples as little-endian float64. Returns bytes written."""
    data = np.asarray(samples, dtype="<f8").tobytes()
    stream.write(data)
    return len(data)


def read_samples(stream: BinaryIO) -> np.ndarray:
    return np.frombuffer(stream.read(), dtype="<f8").copy()
