"""Seeded synthetic grayscale corpus: gradients, flat shapes, soft texture.

Stands in for natural-image datasets in tests and examples; point the CLI
at a directory of PGM files to use real data instead.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import PixelGrid
from .rng import SeededRng

__all__ = ["synthetic_corpus"]


def _one_image(size: int, rng: SeededRng) -> PixelGrid:
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)

    angle, low, high = rng.child(0).uniform01(3)
    theta = 2.0 * np.pi * angle
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    lo, hi = 0.15 + 0.3 * low, 0.55 + 0.3 * high
    base = lo + (hi - lo) * ramp

    n_shapes = 3 + int(rng.child(1).uniform01(1)[0] * 6)  # 3..8
    for k in range(n_shapes):
        pick = rng.child(2 + k)
        cy, cx, extent, level, kind = pick.uniform01(5)
        cy, cx = cy * size, cx * size
        half = (0.06 + 0.18 * extent) * size
        value = 0.05 + 0.9 * level
        if kind < 0.5:  # disc
            mask = (yy * (size - 1) - cy) ** 2 + (xx * (size - 1) - cx) ** 2 <= half**2
        else:  # axis-aligned rectangle
            ratio = 0.4 + 1.2 * pick.child(0).uniform01(1)[0]
            mask = (np.abs(yy * (size - 1) - cy) <= half) & (
                np.abs(xx * (size - 1) - cx) <= half * ratio
            )
        base[mask] = value

    texture = rng.child(30).normal(size * size).reshape(size, size)
    texture = gaussian_filter(texture, sigma=2.5, mode="reflect")
    peak = np.abs(texture).max()
    if peak > 0:
        base += 0.03 * texture / peak

    return PixelGrid.from_array(np.clip(base, 0.0, 1.0))


def synthetic_corpus(count: int, size: int = 96, seed: int = 0) -> list[PixelGrid]:
    """`count` deterministic size x size images in [0, 1]."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if size < 8:
        raise ValueError("size must be >= 8")
    root = SeededRng(seed)
    return [_one_image(size, root.child(i)) for i in range(count)]
