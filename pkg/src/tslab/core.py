"""Shared numeric substrate: image grids, noise fields, norms, Gram-Schmidt.

All arithmetic is 64-bit; containers freeze their arrays after construction
so values can be shared across threads without copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SeededRng

__all__ = [
    "PixelGrid",
    "NoiseField",
    "SubspaceBasis",
    "DegenerateBasisError",
    "gaussian_noise",
    "norm",
    "gram_schmidt",
    "signum",
]


class DegenerateBasisError(ValueError):
    """Raised when Gram-Schmidt input is (numerically) rank deficient."""


def _frozen_f64(values, length: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).ravel()
    if length is not None and arr.size != length:
        raise ValueError(f"expected {length} values, got {arr.size}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PixelGrid:
    """H x W grayscale image with values in [0, 1], stored flat."""

    height: int
    width: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be positive")
        arr = _frozen_f64(self.values, self.height * self.width)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_array(cls, array2d) -> "PixelGrid":
        arr = np.asarray(array2d, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(arr.shape[0], arr.shape[1], arr.ravel())

    def grid(self) -> np.ndarray:
        """Read-only (H, W) view of the pixel values."""
        return self.values.reshape(self.height, self.width)


@dataclass(frozen=True)
class NoiseField:
    """Flat realization of n i.i.d. N(0, sigma^2) draws."""

    dim: int
    sigma: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "values", _frozen_f64(self.values, self.dim))


@dataclass(frozen=True)
class SubspaceBasis:
    """Up to three orthonormal vectors spanning a probe subspace."""

    dim: int
    vectors: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        vecs = tuple(_frozen_f64(v, self.dim) for v in self.vectors)
        if not 1 <= len(vecs) <= 3:
            raise ValueError("basis must hold between 1 and 3 vectors")
        object.__setattr__(self, "vectors", vecs)


def gaussian_noise(dim: int, sigma: float, rng: SeededRng) -> NoiseField:
    """n i.i.d. N(0, sigma^2) draws; identical on repeated calls with one rng."""
    if dim < 1:
        raise ValueError("dim must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return NoiseField(dim, sigma, rng.normal(dim, sigma))


_NORM_ORDERS = {"l1": 1, "l2": 2, "linf": np.inf}


def norm(x, kind: str = "l2") -> float:
    """L1 / L2 / Linf norm of a flat array (or anything with .values)."""
    values = np.asarray(getattr(x, "values", x), dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("norm of an empty array is undefined")
    try:
        order = _NORM_ORDERS[kind.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown norm kind: {kind!r}") from None
    return float(np.linalg.norm(values, ord=order))


def signum(x) -> np.ndarray:
    """Sign with the tie-break sign(0) = +1, applied elementwise."""
    arr = np.asarray(x, dtype=np.float64)
    return np.where(arr >= 0.0, 1.0, -1.0)


def gram_schmidt(raw) -> SubspaceBasis:
    """Modified Gram-Schmidt with re-orthogonalization.

    The first output vector is raw[0] normalized; rank deficiency (projection
    residual below 1e-12 relative to the input vector) raises
    DegenerateBasisError.
    """
    vectors = [np.asarray(getattr(v, "values", v), dtype=np.float64).ravel() for v in raw]
    if not 1 <= len(vectors) <= 3:
        raise ValueError("gram_schmidt expects between 1 and 3 vectors")
    dim = vectors[0].size
    if dim == 0 or any(v.size != dim for v in vectors):
        raise ValueError("vectors must share a positive common dimension")

    basis: list[np.ndarray] = []
    for v in vectors:
        w = v.copy()
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for e in basis:
                w -= (w @ e) * e
        residual = float(np.sqrt(w @ w))
        if residual < 1e-12 * max(1.0, float(np.linalg.norm(v))):
            raise DegenerateBasisError(
                f"vector {len(basis)} is linearly dependent on its predecessors"
            )
        basis.append(w / residual)
    return SubspaceBasis(dim, tuple(basis))
