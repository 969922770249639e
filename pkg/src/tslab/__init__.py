"""tslab: typical-set analysis, attacks, and defenses for Gaussian denoisers.

Library layout:
    core      grids, noise fields, norms, Gram-Schmidt, seeded RNG contract
    typical   closed-form typical-set bounds and Monte Carlo verifiers
    sampling  out-of-distribution noise screening and training strategies
    denoiser  small residual conv denoiser with hand-written backprop
    corpus    seeded synthetic image generator
    attack    Linf / L2 projected-gradient attacks
    probe     radar / sphere / blend / patch neighborhood probes
    metrics   PSNR, SSIM, MAE, transferability criterion
    pgm       binary PGM image I/O
    cli       `tslab` command line entry point
"""

from .core import (
    DegenerateBasisError,
    NoiseField,
    PixelGrid,
    SubspaceBasis,
    gaussian_noise,
    gram_schmidt,
    norm,
    signum,
)
from .rng import SeededRng

__version__ = "0.1.0"

__all__ = [
    "DegenerateBasisError",
    "NoiseField",
    "PixelGrid",
    "SeededRng",
    "SubspaceBasis",
    "gaussian_noise",
    "gram_schmidt",
    "norm",
    "signum",
    "__version__",
]
