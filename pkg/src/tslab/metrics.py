"""Image quality metrics and the attack-transferability criterion.

PSNR uses the standard 10*log10(MAX^2 / MSE) with a +inf sentinel at zero
error; SSIM follows the reference implementation (11x11 Gaussian window,
sigma 1.5, k1=0.01, k2=0.03, valid positions only); MAE is reported on the
0-255 scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import PixelGrid

__all__ = [
    "MetricReport",
    "psnr",
    "ssim",
    "mae",
    "metric_report",
    "transferability_check",
]


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mae: float


def _as_grid(x) -> np.ndarray:
    if isinstance(x, PixelGrid):
        return x.grid()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a PixelGrid or 2-D array")
    return arr


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    gx, gy = _as_grid(x), _as_grid(y)
    if gx.shape != gy.shape:
        raise ValueError(f"shape mismatch: {gx.shape} vs {gy.shape}")
    return gx, gy


def mse(x, y) -> float:
    gx, gy = _pair(x, y)
    diff = gx - gy
    return float(np.mean(diff * diff))


def psnr(x, y, max_i: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical."""
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_i * max_i / err)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


_SSIM_WINDOW = _gaussian_window()


def _windowed_mean(img: np.ndarray) -> np.ndarray:
    cut = sliding_window_view(img, _SSIM_WINDOW.shape)
    return np.tensordot(cut, _SSIM_WINDOW, axes=([2, 3], [0, 1]))


def ssim(x, y, k1: float = 0.01, k2: float = 0.03, max_i: float = 1.0) -> float:
    """Mean local SSIM over valid 11x11 window positions."""
    gx, gy = _pair(x, y)
    size = _SSIM_WINDOW.shape[0]
    if min(gx.shape) < size:
        raise ValueError(f"image must be at least {size}x{size} for SSIM")
    c1 = (k1 * max_i) ** 2
    c2 = (k2 * max_i) ** 2
    mu_x = _windowed_mean(gx)
    mu_y = _windowed_mean(gy)
    var_x = _windowed_mean(gx * gx) - mu_x * mu_x
    var_y = _windowed_mean(gy * gy) - mu_y * mu_y
    cov = _windowed_mean(gx * gy) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


def mae(x, y) -> float:
    """Mean absolute error on the 0-255 scale."""
    gx, gy = _pair(x, y)
    return float(np.mean(np.abs(gx - gy))) * 255.0


def metric_report(x, y) -> MetricReport:
    return MetricReport(psnr=psnr(x, y), ssim=ssim(x, y), mae=mae(x, y))


def transferability_check(
    model_a, model_b, clean, noisy, adv, threshold: float = 0.0
) -> str:
    """Classify an adversarial sample crafted on model A against model B.

    With L = MSE against the clean image, the four conditions are: both
    models improve on the benign noisy input, and both suffer a loss
    increase > threshold on the adversarial input.  Returns "attack-failed"
    when model A does not even denoise the benign input (the sample never
    tested a working source model), "transferable" when all four conditions
    hold, "not-transferable" otherwise.
    """
    from .denoiser import forward  # local import: denoiser also uses metrics

    loss_noisy = mse(noisy, clean)
    loss_a_noisy = mse(forward(model_a, noisy), clean)
    if not loss_a_noisy < loss_noisy:
        return "attack-failed"
    loss_a_adv = mse(forward(model_a, adv), clean)
    a_attacked = loss_a_adv - loss_a_noisy > threshold
    loss_b_noisy = mse(forward(model_b, noisy), clean)
    loss_b_adv = mse(forward(model_b, adv), clean)
    b_denoises = loss_b_noisy < loss_noisy
    b_attacked = loss_b_adv - loss_b_noisy > threshold
    if a_attacked and b_denoises and b_attacked:
        return "transferable"
    return "not-transferable"
