"""Monte Carlo bit-error-rate experiments.

Trials are processed in fixed-size blocks.  Block ``b`` draws its words,
channels and unit-variance noise from its own substream
``SeedSequence(seed, spawn_key=(b,))`` and the same draws are reused at every
SNR point that is still running (common random numbers), so the curve is
smooth across SNR and the result depends only on the seed and block size, not
on the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .channel import ChannelModel, Rays, channel_from_rays, draw_channels, draw_rays
from .modem import Constellation, WordTable, ml_detect_batch
from .patterns import Codebook

__all__ = [
    "SmConfig",
    "BerCurve",
    "wilson_interval",
    "simulate_ber",
    "estimate_slope",
    "estimate_diversity",
    "ber_csv",
    "BER_COLUMNS",
]

BER_COLUMNS = ("snr_db", "trials", "bit_errors", "ber", "ci_lo", "ci_hi")
FADING_MODES = ("per_symbol", "fixed")
# spawn key of the stream that draws the frozen ray angles in ``fixed`` mode
_FIXED_KEY = 2**31 - 1


@dataclass(frozen=True, eq=False)
class SmConfig:
    codebook: Codebook
    model: ChannelModel
    n_r: int
    constellation: Constellation
    snr_grid_db: tuple[float, ...]
    max_trials: int = 1_000_000
    target_errors: int = 200
    seed: int = 0
    fading: str = "per_symbol"
    block_size: int = 10_000
    threads: int = 1

    def __post_init__(self):
        grid = tuple(float(s) for s in np.atleast_1d(self.snr_grid_db))
        if not grid:
            raise ValueError("snr_grid_db must not be empty")
        object.__setattr__(self, "snr_grid_db", grid)
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.target_errors < 1:
            raise ValueError("target_errors must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.fading not in FADING_MODES:
            raise ValueError(f"fading must be one of {FADING_MODES}, got {self.fading!r}")
        if self.codebook.P * self.constellation.M < 2:
            raise ValueError("need at least two hypotheses (P * M >= 2)")
        # raises for non power-of-two P
        WordTable(self.codebook.P, self.constellation)

    @property
    def bits_per_word(self) -> int:
        return WordTable(self.codebook.P, self.constellation).n_bits


def wilson_interval(errors, n, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    errors = np.asarray(errors, dtype=float)
    n = np.asarray(n, dtype=float)
    z = norm.ppf(0.5 + confidence / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, errors / n, 0.0)
        denom = 1.0 + z * z / n
        centre = (p + z * z / (2 * n)) / denom
        half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = np.where(n > 0, np.clip(centre - half, 0.0, 1.0), 0.0)
    hi = np.where(n > 0, np.clip(centre + half, 0.0, 1.0), 1.0)
    return lo, hi


@dataclass(frozen=True)
class BerCurve:
    """Per-SNR trial and bit-error counts with 95% Wilson intervals."""

    snr_db: np.ndarray
    trials: np.ndarray
    bit_errors: np.ndarray
    bits_per_word: int
    ci_lo: np.ndarray = field(init=False)
    ci_hi: np.ndarray = field(init=False)

    def __post_init__(self):
        snr = np.asarray(self.snr_db, dtype=float)
        trials = np.asarray(self.trials, dtype=np.int64)
        errors = np.asarray(self.bit_errors, dtype=np.int64)
        if not (snr.shape == trials.shape == errors.shape):
            raise ValueError("snr_db, trials and bit_errors must have the same length")
        if np.any(errors < 0) or np.any(errors > trials * self.bits_per_word):
            raise ValueError("bit errors must lie in [0, trials * bits_per_word]")
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "bit_errors", errors)
        lo, hi = wilson_interval(errors, trials * self.bits_per_word)
        object.__setattr__(self, "ci_lo", lo)
        object.__setattr__(self, "ci_hi", hi)

    @property
    def bits(self) -> np.ndarray:
        return self.trials * self.bits_per_word

    @property
    def ber(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.bits > 0, self.bit_errors / np.maximum(self.bits, 1), np.nan)

    def __len__(self):
        return self.snr_db.size


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


class _Experiment:
    """Per-run state shared by the block workers (read-only after init)."""

    def __init__(self, cfg: SmConfig):
        self.cfg = cfg
        self.table = WordTable(cfg.codebook.P, cfg.constellation)
        self.n_words = cfg.codebook.P * cfg.constellation.M
        self.rho = 10.0 ** (np.asarray(cfg.snr_grid_db) / 10.0)
        self.frozen = None
        if cfg.fading == "fixed":
            rays = draw_rays(cfg.model, _block_rng(cfg.seed, _FIXED_KEY))
            self.frozen = (rays, cfg.codebook.evaluate(rays.theta_t, rays.phi_t))

    def channels(self, rng, n):
        cfg = self.cfg
        if self.frozen is None:
            return draw_channels(cfg.model, cfg.codebook, cfg.n_r, rng, n)
        rays, tx = self.frozen
        K = cfg.model.K
        beta = (rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))) * math.sqrt(0.5)
        shape = (n, K)
        fixed = Rays(
            beta,
            *(np.broadcast_to(a, shape) for a in (rays.theta_t, rays.phi_t, rays.theta_r, rays.phi_r)),
        )
        return channel_from_rays(cfg.model, cfg.codebook, cfg.n_r, fixed, tx=tx)

    def run_block(self, block: int, active: np.ndarray) -> np.ndarray:
        """Cumulative bit errors per trial, shape ``(len(active), block_size)``."""
        cfg = self.cfg
        n = cfg.block_size
        rng = _block_rng(cfg.seed, block)
        words = rng.integers(0, self.n_words, n)
        H = self.channels(rng, n)
        noise = (rng.standard_normal((n, cfg.n_r)) + 1j * rng.standard_normal((n, cfg.n_r))) * math.sqrt(0.5)
        M = cfg.constellation.M
        # noiseless unit-SNR received vectors of the transmitted words
        clean = H[np.arange(n), :, words // M] * cfg.constellation.points[words % M][:, None]
        out = np.empty((len(active), n), dtype=np.int64)
        for row, i in enumerate(active):
            rho = self.rho[i]
            y = math.sqrt(rho) * clean + noise
            detected = ml_detect_batch(y, H, rho, cfg.constellation)
            out[row] = np.cumsum(self.table.hamming[words, detected])
        return out


def simulate_ber(cfg: SmConfig, progress=None) -> BerCurve:
    """Run every SNR point until ``target_errors`` bit errors or ``max_trials`` trials.

    ``progress``, if given, is called as ``progress(block, trials, errors)``
    after each block is folded in.
    """
    exp = _Experiment(cfg)
    n_snr = len(cfg.snr_grid_db)
    trials = np.zeros(n_snr, dtype=np.int64)
    errors = np.zeros(n_snr, dtype=np.int64)
    running = np.ones(n_snr, dtype=bool)
    block = 0
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        while running.any():
            active = np.flatnonzero(running)
            wave = range(block, block + cfg.threads)
            if pool is None:
                results = [exp.run_block(b, active) for b in wave]
            else:
                results = list(pool.map(lambda b: exp.run_block(b, active), wave))
            for b, cum in zip(wave, results):
                for row, i in enumerate(active):
                    if not running[i]:
                        continue
                    take = min(cfg.block_size, cfg.max_trials - trials[i])
                    trials[i] += take
                    errors[i] += cum[row, take - 1]
                    if errors[i] >= cfg.target_errors or trials[i] >= cfg.max_trials:
                        running[i] = False
                if progress is not None:
                    progress(b, trials.copy(), errors.copy())
            block += cfg.threads
    finally:
        if pool is not None:
            pool.shutdown()
    return BerCurve(np.asarray(cfg.snr_grid_db), trials, errors, exp.table.n_bits)


def estimate_slope(snr_db, values, window_db=None) -> float:
    """Negated least-squares slope of ``log10(values)`` against ``log10(rho)``."""
    snr_db = np.asarray(snr_db, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > 0)
    if window_db is not None:
        lo, hi = window_db
        keep &= (snr_db >= lo - 1e-9) & (snr_db <= hi + 1e-9)
    if keep.sum() < 2:
        raise ValueError("need at least two positive points inside the window to fit a slope")
    slope = np.polyfit(snr_db[keep] / 10.0, np.log10(values[keep]), 1)[0]
    return float(-slope)


def estimate_diversity(curve: BerCurve, window_db=None) -> float:
    """Diversity order: high-SNR decay rate of the BER in decades per decade."""
    return estimate_slope(curve.snr_db, curve.ber, window_db)


def ber_csv(curve: BerCurve) -> str:
    """CSV text with columns ``snr_db,trials,bit_errors,ber,ci_lo,ci_hi``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BER_COLUMNS)
    for s, t, e, b, lo, hi in zip(curve.snr_db, curve.trials, curve.bit_errors, curve.ber, curve.ci_lo, curve.ci_hi):
        w.writerow([f"{s:g}", int(t), int(e), f"{b:.10e}", f"{lo:.10e}", f"{hi:.10e}"])
    return buf.getvalue()
