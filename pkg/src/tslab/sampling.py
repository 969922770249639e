"""Out-of-distribution noise sampling: TS screening and training strategies.

ts_sample keeps the lowest-density draw among a screened sample and K fresh
candidates, pushing training noise toward the outer typical-set shell.  The
strategies cycle deterministically so training runs are bit-reproducible:

    normal   G G G G ...
    ts-pres  G G TS G G TS ...     (one TS per two plain draws)
    ts-def   G TS G TS ...         (one per one)
    mixed    s s2 s s2 ...         (two plain noise levels)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import NoiseField, gaussian_noise
from .rng import SeededRng
from .typical import differential_entropy_bits, log_pdf

__all__ = [
    "TsConfig",
    "NoiseStrategy",
    "DensityHistogram",
    "ts_sample",
    "next_noise",
    "density_histogram",
]

_KINDS = ("normal", "ts-pres", "ts-def", "mixed")


@dataclass(frozen=True)
class TsConfig:
    """Screening parameters: K candidate draws at noise level sigma."""

    iterations: int
    sigma: float

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class NoiseStrategy:
    """Training-time noise source with a deterministic mixing cycle.

    position is the 0-based call counter; next_noise advances it.  One
    strategy instance belongs to one training loop (the counter is the only
    mutable state).
    """

    kind: str
    sigma: float
    ts: TsConfig | None = None
    sigma2: float | None = None
    position: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown strategy kind: {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind in ("ts-pres", "ts-def"):
            if self.ts is None:
                self.ts = TsConfig(iterations=10, sigma=self.sigma)
            if self.ts.sigma != self.sigma:
                raise ValueError("ts.sigma must match the strategy sigma")
        if self.kind == "mixed":
            if self.sigma2 is None or not self.sigma2 > self.sigma:
                raise ValueError("mixed strategy needs sigma2 > sigma")


@dataclass(frozen=True)
class DensityHistogram:
    """Binned -(1/n) log2 f statistics with the entropy reference line."""

    bin_centers: np.ndarray
    counts: np.ndarray
    entropy_bits: float


def ts_sample(s: NoiseField, cfg: TsConfig, rng: SeededRng) -> NoiseField:
    """Lowest-log-density element among {s, a_1, ..., a_K}, a_k ~ N(0, sigma^2 I).

    Candidate k draws from rng.child(k); K=0 returns s unchanged.
    """
    if s.sigma != cfg.sigma:
        raise ValueError("sample sigma must match the screening config")
    best = s
    best_logpdf = log_pdf(s)
    for k in range(cfg.iterations):
        candidate = gaussian_noise(s.dim, cfg.sigma, rng.child(k))
        candidate_logpdf = log_pdf(candidate)
        if candidate_logpdf < best_logpdf:
            best = candidate
            best_logpdf = candidate_logpdf
    # Lower Gaussian log-density is exactly larger squared norm.
    assert best is s or float(best.values @ best.values) >= float(s.values @ s.values)
    return best


def _slot(strategy: NoiseStrategy, position: int) -> str:
    if strategy.kind == "normal":
        return "plain"
    if strategy.kind == "ts-pres":
        return "ts" if position % 3 == 2 else "plain"
    if strategy.kind == "ts-def":
        return "ts" if position % 2 == 1 else "plain"
    return "sigma2" if position % 2 == 1 else "plain"  # mixed


def next_noise(strategy: NoiseStrategy, dim: int, rng: SeededRng) -> NoiseField:
    """Next noise field in the strategy's cycle; advances the position.

    The draw is keyed by rng.child(position), so passing the same root rng on
    every call yields the reproducible per-position sequence.
    """
    position = strategy.position
    strategy.position = position + 1
    base = rng.child(position)
    slot = _slot(strategy, position)
    if slot == "plain":
        return gaussian_noise(dim, strategy.sigma, base.child(0))
    if slot == "sigma2":
        return gaussian_noise(dim, strategy.sigma2, base.child(0))
    screened = gaussian_noise(dim, strategy.sigma, base.child(0))
    return ts_sample(screened, strategy.ts, base.child(1))


def density_histogram(
    strategy: NoiseStrategy, dim: int, draws: int, rng: SeededRng
) -> DensityHistogram:
    """Histogram of -(1/n) log2 f(draw) under the strategy's base density.

    Runs a position-0 clone of the strategy so the caller's cycle state and
    the emitted histogram are both reproducible.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    clone = dataclasses.replace(strategy, position=0)
    base_sigma = strategy.sigma
    stats = np.empty(draws)
    for i in range(draws):
        sample = next_noise(clone, dim, rng)
        reference = NoiseField(dim, base_sigma, sample.values)
        stats[i] = -log_pdf(reference) / dim * np.log2(np.e)
    n_bins = max(1, min(64, int(np.ceil(np.sqrt(draws)))))
    counts, edges = np.histogram(stats, bins=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return DensityHistogram(centers, counts, differential_entropy_bits(base_sigma))
