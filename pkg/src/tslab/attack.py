"""Projected-gradient attacks on denoisers.

Both attacks ascend MSE(forward(model, x), clean) from the noisy image:
the Linf variant steps by alpha*sign(grad) and clips to the per-pixel
[noisy-eps, noisy+eps] box; the L2 variant steps by alpha along the unit
gradient and projects onto the ball of radius eps*sqrt(n).  Ball projection
comes first, then the optional [0,1] intersection.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .core import PixelGrid, signum
from .denoiser import DenoiserModel, forward, grad_wrt_input
from .metrics import MetricReport, metric_report
from .rng import SeededRng

__all__ = [
    "AttackConfig",
    "AttackRow",
    "denoising_pgd",
    "l2_denoising_pgd",
    "run_attack",
    "attack_suite",
]


@dataclass(frozen=True)
class AttackConfig:
    budget_norm: str = "linf"  # "linf" | "l2"
    epsilon: float = 3.0 / 255.0
    alpha: float = 2.0 / 255.0
    steps: int = 5
    random_init: bool = False
    clamp_valid_range: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.budget_norm.lower() not in ("linf", "l2"):
            raise ValueError(f"unknown budget norm: {self.budget_norm!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass(frozen=True)
class AttackRow:
    index: int
    adversarial: PixelGrid
    before: MetricReport  # forward(noisy) vs clean
    after: MetricReport  # forward(adv) vs clean


def _check_shapes(clean: PixelGrid, noisy: PixelGrid) -> None:
    if (clean.height, clean.width) != (noisy.height, noisy.width):
        raise ValueError("clean and noisy images must share a shape")


def _project_linf(x: np.ndarray, center: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(x, center - eps, center + eps)


def _project_l2(x: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    offset = x - center
    distance = float(np.linalg.norm(offset))
    if distance > radius:
        offset *= radius / distance
    return center + offset


def _finish(x: np.ndarray, clean: PixelGrid) -> PixelGrid:
    # Final [0,1] clip keeps the PixelGrid contract; with clamping disabled
    # it can only shrink the distance to the (in-range) noisy image.
    return PixelGrid(clean.height, clean.width, np.clip(x, 0.0, 1.0))


def denoising_pgd(
    model: DenoiserModel, clean: PixelGrid, noisy: PixelGrid, cfg: AttackConfig
) -> PixelGrid:
    """Linf PGD: T steps of alpha*sign(grad) inside the eps box around noisy."""
    if cfg.budget_norm.lower() != "linf":
        raise ValueError("denoising_pgd requires an Linf budget")
    _check_shapes(clean, noisy)
    center = noisy.grid().copy()
    target = clean.grid()
    x = center.copy()
    if cfg.random_init:
        x = x + SeededRng(cfg.seed).uniform(x.size, -cfg.epsilon, cfg.epsilon).reshape(
            x.shape
        )
        x = _project_linf(x, center, cfg.epsilon)
        if cfg.clamp_valid_range:
            x = np.clip(x, 0.0, 1.0)
    for _ in range(cfg.steps):
        grad = grad_wrt_input(model, x, target)
        x = x + cfg.alpha * signum(grad)
        x = _project_linf(x, center, cfg.epsilon)
        if cfg.clamp_valid_range:
            x = np.clip(x, 0.0, 1.0)
    return _finish(x, clean)


def l2_denoising_pgd(
    model: DenoiserModel, clean: PixelGrid, noisy: PixelGrid, cfg: AttackConfig
) -> PixelGrid:
    """L2 PGD: alpha-length unit-gradient steps inside the eps*sqrt(n) ball."""
    if cfg.budget_norm.lower() != "l2":
        raise ValueError("l2_denoising_pgd requires an L2 budget")
    _check_shapes(clean, noisy)
    center = noisy.grid().copy()
    target = clean.grid()
    radius = cfg.epsilon * math.sqrt(center.size)
    x = center.copy()
    if cfg.random_init:
        x = x + SeededRng(cfg.seed).uniform(x.size, -cfg.epsilon, cfg.epsilon).reshape(
            x.shape
        )
        x = _project_l2(x, center, radius)
        if cfg.clamp_valid_range:
            x = np.clip(x, 0.0, 1.0)
    for _ in range(cfg.steps):
        grad = grad_wrt_input(model, x, target)
        magnitude = float(np.linalg.norm(grad))
        if magnitude == 0.0:
            break
        x = x + cfg.alpha * grad / magnitude
        x = _project_l2(x, center, radius)
        if cfg.clamp_valid_range:
            x = np.clip(x, 0.0, 1.0)
    return _finish(x, clean)


def run_attack(
    model: DenoiserModel, clean: PixelGrid, noisy: PixelGrid, cfg: AttackConfig
) -> PixelGrid:
    """Dispatch on the configured budget norm."""
    if cfg.budget_norm.lower() == "linf":
        return denoising_pgd(model, clean, noisy, cfg)
    return l2_denoising_pgd(model, clean, noisy, cfg)


def attack_suite(model: DenoiserModel, dataset, cfg: AttackConfig) -> list[AttackRow]:
    """Attack every (clean, noisy) pair; per-image derived seeds keep rows
    independent of iteration order."""
    pairs = list(dataset)
    if not pairs:
        raise ValueError("dataset must be nonempty")
    rows = []
    for index, (clean, noisy) in enumerate(pairs):
        try:
            per_image = dataclasses.replace(
                cfg, seed=SeededRng(cfg.seed).child(index).stream
            )
            adv = run_attack(model, clean, noisy, per_image)
            before = metric_report(forward(model, noisy), clean)
            after = metric_report(forward(model, adv), clean)
        except Exception as exc:
            raise RuntimeError(f"attack failed on image {index}: {exc}") from exc
        rows.append(AttackRow(index, adv, before, after))
    return rows
