"""Neighborhood-geometry probes around a noisy image.

Radar probes sweep a 2-D subspace spanned by the noise direction and a
perturbation; sphere probes sweep a 3-D subspace; blends trace
variance-preserving noise mixtures and convex adversarial paths; patch
attacks confine perturbations to a rectangle.  Scores are PSNR differences
against the unperturbed noisy input (negative = degraded), evaluated after
clipping the probe sample into [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attack import AttackConfig, run_attack
from .core import NoiseField, PixelGrid, SubspaceBasis, gram_schmidt
from .denoiser import DenoiserModel
from .denoiser.model import _forward_array
from .metrics import psnr

__all__ = [
    "ProbeGrid",
    "radar_probe",
    "sphere_probe",
    "blend_noises",
    "blend_adversarials",
    "blend_path_scores",
    "patch_attack",
]


@dataclass(frozen=True)
class ProbeGrid:
    kind: str  # "radar-2d" | "sphere-3d"
    n_angular: int
    n_radial: int
    scores: np.ndarray  # (n_angular, n_radial)
    basis: SubspaceBasis
    origin: str

    def __post_init__(self) -> None:
        if self.scores.shape != (self.n_angular, self.n_radial):
            raise ValueError("scores shape must be (n_angular, n_radial)")


def _flat(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64).ravel()


def _model_psnr(model: DenoiserModel, sample_flat: np.ndarray, clean: PixelGrid) -> float:
    grid = np.clip(sample_flat, 0.0, 1.0).reshape(clean.height, clean.width)
    return psnr(_forward_array(model, grid), clean.grid())


def radar_probe(
    model: DenoiserModel,
    u: PixelGrid,
    n: NoiseField,
    v,
    n_angular: int = 72,
    n_radial: int = 10,
) -> ProbeGrid:
    """Score s = (e1 cos(t) + e2 sin(t)) * g * ||v|| + n + u over a polar grid.

    e1 is the noise direction, e2 the Gram-Schmidt complement of v; angles
    t_i = 2*pi*i/Ni, radii g_j = j/(Nj-1) from the origin (g=0) to ||v||.
    """
    if n_angular < 1 or n_radial < 2:
        raise ValueError("need n_angular >= 1 and n_radial >= 2")
    v_flat = _flat(v)
    basis = gram_schmidt([n.values, v_flat])
    e1, e2 = basis.vectors
    origin = _flat(u) + n.values
    reference = _model_psnr(model, origin, u)
    v_norm = float(np.linalg.norm(v_flat))

    scores = np.empty((n_angular, n_radial))
    for i in range(n_angular):
        theta = 2.0 * math.pi * i / n_angular
        direction = e1 * math.cos(theta) + e2 * math.sin(theta)
        for j in range(n_radial):
            gamma = j / (n_radial - 1)
            if gamma == 0.0:
                scores[i, j] = 0.0
                continue
            sample = origin + direction * (gamma * v_norm)
            scores[i, j] = _model_psnr(model, sample, u) - reference
    return ProbeGrid("radar-2d", n_angular, n_radial, scores, basis, "u + n")


def sphere_probe(
    model: DenoiserModel,
    u: PixelGrid,
    n_k: NoiseField,
    basis_inputs,
    n_angular: int = 72,
    n_elevation: int = 10,
    radius: float = 1.0,
) -> ProbeGrid:
    """Scores on the radius-sphere around u + n_k in a 3-D probe subspace.

    basis_inputs is the triple (n1, n2, v1) fed to Gram-Schmidt; angles
    t_i = 2*pi*i/Ni, elevations phi_j from -pi/2 to pi/2 inclusive.
    """
    if n_angular < 1 or n_elevation < 2:
        raise ValueError("need n_angular >= 1 and n_elevation >= 2")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    vectors = [_flat(b) for b in basis_inputs]
    if len(vectors) != 3:
        raise ValueError("sphere probe needs exactly three basis inputs")
    basis = gram_schmidt(vectors)
    e1, e2, e3 = basis.vectors
    origin = _flat(u) + n_k.values
    reference = _model_psnr(model, origin, u)

    scores = np.empty((n_angular, n_elevation))
    for i in range(n_angular):
        theta = 2.0 * math.pi * i / n_angular
        for j in range(n_elevation):
            phi = -0.5 * math.pi + math.pi * j / (n_elevation - 1)
            if radius == 0.0:
                scores[i, j] = 0.0
                continue
            direction = (
                e1 * (math.cos(phi) * math.cos(theta))
                + e2 * (math.cos(phi) * math.sin(theta))
                + e3 * math.sin(phi)
            )
            sample = origin + direction * radius
            scores[i, j] = _model_psnr(model, sample, u) - reference
    return ProbeGrid("sphere-3d", n_angular, n_elevation, scores, basis, "u + n_k")


def blend_noises(n1: NoiseField, n2: NoiseField, lam: float) -> NoiseField:
    """Variance-preserving mixture sqrt(lam)*n1 + sqrt(1-lam)*n2."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if n1.dim != n2.dim or n1.sigma != n2.sigma:
        raise ValueError("noise fields must share dim and sigma")
    if lam == 1.0:
        return NoiseField(n1.dim, n1.sigma, n1.values)
    if lam == 0.0:
        return NoiseField(n2.dim, n2.sigma, n2.values)
    mixed = math.sqrt(lam) * n1.values + math.sqrt(1.0 - lam) * n2.values
    return NoiseField(n1.dim, n1.sigma, mixed)


def blend_adversarials(a1: PixelGrid, a2: PixelGrid, lam: float, u: PixelGrid) -> PixelGrid:
    """Convex-path point u + sqrt(lam)(a1-u) + sqrt(1-lam)(a2-u).

    The clean image u is explicit because the blend acts on the noise
    coordinates a_i - u.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    shapes = {(g.height, g.width) for g in (a1, a2, u)}
    if len(shapes) != 1:
        raise ValueError("all images must share a shape")
    if lam == 1.0:
        return PixelGrid(a1.height, a1.width, a1.values)
    if lam == 0.0:
        return PixelGrid(a2.height, a2.width, a2.values)
    mixed = (
        u.values
        + math.sqrt(lam) * (a1.values - u.values)
        + math.sqrt(1.0 - lam) * (a2.values - u.values)
    )
    return PixelGrid(u.height, u.width, np.clip(mixed, 0.0, 1.0))


def blend_path_scores(
    model: DenoiserModel,
    u: PixelGrid,
    n1: NoiseField,
    n2: NoiseField,
    a1: PixelGrid,
    a2: PixelGrid,
    lambdas,
) -> list[tuple[float, float]]:
    """PSNR drop (positive = adversarial) of each blended adversarial sample
    against the matching variance-preserving Gaussian blend."""
    rows = []
    for lam in lambdas:
        gauss = blend_noises(n1, n2, lam)
        reference = _model_psnr(model, u.values + gauss.values, u)
        blended = blend_adversarials(a1, a2, lam, u)
        score = reference - _model_psnr(model, blended.values, u)
        rows.append((float(lam), float(score)))
    return rows


def patch_attack(
    model: DenoiserModel,
    u: PixelGrid,
    n: NoiseField,
    region: tuple[int, int, int, int],
    method: str,
    cfg: AttackConfig,
) -> PixelGrid:
    """Attack confined to region = (top, left, height, width).

    local-craft attacks the sub-image and splices the result in; crop-global
    attacks the full image and keeps only the in-region perturbation.
    Outside the region the output equals the noisy image bit for bit.
    """
    top, left, height, width = region
    if height <= 0 or width <= 0:
        raise ValueError("region must have positive area")
    if top < 0 or left < 0 or top + height > u.height or left + width > u.width:
        raise ValueError("region exceeds the image bounds")
    if method not in ("local-craft", "crop-global"):
        raise ValueError(f"unknown method: {method!r}")

    noisy_grid = np.clip(u.grid() + n.values.reshape(u.height, u.width), 0.0, 1.0)
    noisy = PixelGrid.from_array(noisy_grid)
    rows = slice(top, top + height)
    cols = slice(left, left + width)

    if method == "local-craft":
        sub_clean = PixelGrid.from_array(u.grid()[rows, cols])
        sub_noisy = PixelGrid.from_array(noisy_grid[rows, cols])
        adv_sub = run_attack(model, sub_clean, sub_noisy, cfg)
        result = noisy_grid.copy()
        result[rows, cols] = adv_sub.grid()
    else:
        adv_full = run_attack(model, u, noisy, cfg)
        result = noisy_grid.copy()
        result[rows, cols] = adv_full.grid()[rows, cols]
    return PixelGrid.from_array(result)
