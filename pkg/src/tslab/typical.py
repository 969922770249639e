"""Typical-set quantities for i.i.d. Gaussian noise, with Monte Carlo verifiers.

Unit convention: log-densities are natural-log; typicality radii, entropies,
and the enlarged radii B2/Binf are in bits.  The single conversion factor
log2(e) is applied where a density term enters a bits-valued quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import NoiseField, gaussian_noise, norm, signum
from .rng import SeededRng

__all__ = [
    "TypicalSetSpec",
    "DeviationBound",
    "VerifierReport",
    "log_pdf",
    "differential_entropy_bits",
    "typicality_radius",
    "l2_concentration_bounds",
    "l1_concentration_bounds",
    "b2_bound",
    "binf_bound",
    "log2_volume_bounds",
    "worst_case_linf_shift",
    "logpdf_shift_bounds",
    "monte_carlo_verify",
]

_LOG2E = math.log2(math.e)
_FOLDED_MEAN = math.sqrt(2.0 / math.pi)  # E|X| / sigma for X ~ N(0, sigma^2)


@dataclass(frozen=True)
class TypicalSetSpec:
    """(n, sigma, epsilon) with delta the target Monte Carlo failure rate."""

    dim: int
    sigma: float
    epsilon: float
    delta: float = 1e-3

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def entropy_bits(self) -> float:
        return differential_entropy_bits(self.sigma)


@dataclass(frozen=True)
class DeviationBound:
    """A typicality radius in bits: the base epsilon or an enlarged B2/Binf."""

    kind: str  # "epsilon-base" | "B2" | "Binf"
    value: float
    budget: float | None = None
    budget_norm: str | None = None  # "l2" | "linf"

    def __post_init__(self) -> None:
        if self.kind not in ("epsilon-base", "B2", "Binf"):
            raise ValueError(f"unknown bound kind: {self.kind!r}")
        if not self.value > 0:
            raise ValueError("bound value must be positive")


@dataclass(frozen=True)
class VerifierReport:
    trials: int
    violations: int
    bound_tested: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.violations <= self.trials:
            raise ValueError("violations must lie in [0, trials]")

    @property
    def empirical_rate(self) -> float:
        return self.violations / self.trials


def log_pdf(x: NoiseField) -> float:
    """Natural-log density of x under N(0, sigma^2 I_n)."""
    n, sigma = x.dim, x.sigma
    return -0.5 * n * math.log(2.0 * math.pi * sigma * sigma) - float(
        x.values @ x.values
    ) / (2.0 * sigma * sigma)


def differential_entropy_bits(sigma: float) -> float:
    """log2(sqrt(2*pi*e) * sigma) bits per coordinate."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return 0.5 * math.log2(2.0 * math.pi * math.e) + math.log2(sigma)


def _entropy_nats(sigma: float) -> float:
    return 0.5 * math.log(2.0 * math.pi * math.e) + math.log(sigma)


def typicality_radius(x: NoiseField) -> float:
    """|-(1/n) log2 f(x) - h(X)| in bits; membership radius of the typical set."""
    deviation_nats = -log_pdf(x) / x.dim - _entropy_nats(x.sigma)
    return abs(deviation_nats) * _LOG2E


def l2_concentration_bounds(spec: TypicalSetSpec) -> tuple[float, float]:
    """Squared-L2 interval (n*sigma^2*(1-2e), n*sigma^2*(1+2e))."""
    center = spec.dim * spec.sigma * spec.sigma
    return (center * (1.0 - 2.0 * spec.epsilon), center * (1.0 + 2.0 * spec.epsilon))


def _radius_l2_interval(spec: TypicalSetSpec) -> tuple[float, float]:
    # Exact squared-norm interval equivalent to typicality_radius <= epsilon
    # when epsilon is read in bits (the published interval corresponds to the
    # nats reading; the two differ by a factor ln 2 on the half-width).
    center = spec.dim * spec.sigma * spec.sigma
    half = 2.0 * spec.epsilon * math.log(2.0)
    return (center * (1.0 - half), center * (1.0 + half))


def l1_concentration_bounds(spec: TypicalSetSpec, tol: float) -> tuple[float, float]:
    """L1-norm interval n*sigma*sqrt(2/pi) +- tol (tol in L1 units)."""
    if not tol >= 0:
        raise ValueError("tol must be nonnegative")
    center = spec.dim * spec.sigma * _FOLDED_MEAN
    return (center - tol, center + tol)


def b2_bound(spec: TypicalSetSpec, eta: float) -> DeviationBound:
    """Enlarged typicality radius under an L2 perturbation budget eta (bits)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    n, sigma, eps = spec.dim, spec.sigma, spec.epsilon
    shell = math.sqrt(n * sigma * sigma * (1.0 + 2.0 * eps))
    shift_nats = (eta * eta + 2.0 * eta * shell) / (2.0 * n * sigma * sigma)
    return DeviationBound("B2", shift_nats * _LOG2E + eps, budget=eta, budget_norm="l2")


def binf_bound(spec: TypicalSetSpec, eta: float) -> DeviationBound:
    """Enlarged typicality radius under an Linf budget eta (bits)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    n, sigma, eps = spec.dim, spec.sigma, spec.epsilon
    shift_nats = eta * eta / (2.0 * sigma * sigma) + _FOLDED_MEAN * eta / sigma
    merged_eps = (1.0 + 1.0 / (2.0 * n * sigma * sigma)) * eps
    return DeviationBound(
        "Binf", shift_nats * _LOG2E + merged_eps, budget=eta, budget_norm="linf"
    )


def log2_volume_bounds(radius, spec: TypicalSetSpec) -> tuple[float, float]:
    """log2 of the typical-set volume bounds for the given radius.

    radius may be a DeviationBound or a plain number of bits.  Returns
    (lo, hi) with hi = n*(h+r) and lo = log2(1-r) + n*(h-r); lo is -inf
    when r >= 1 (the prefactor 1-r vanishes).
    """
    r = radius.value if isinstance(radius, DeviationBound) else float(radius)
    if not r > 0:
        raise ValueError("radius must be positive")
    h = differential_entropy_bits(spec.sigma)
    hi = spec.dim * (h + r)
    if r >= 1.0:
        return (-math.inf, hi)
    return (math.log2(1.0 - r) + spec.dim * (h - r), hi)


def worst_case_linf_shift(x, eta: float) -> np.ndarray:
    """The maximizer sign(x)*eta of ||x + xi||_2^2 over ||xi||_inf <= eta."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    values = np.asarray(getattr(x, "values", x), dtype=np.float64).ravel()
    return signum(values) * eta


def logpdf_shift_bounds(
    spec: TypicalSetSpec,
    eta: float,
    budget_norm: str,
    l1_tol: float | None = None,
) -> tuple[float, float]:
    """Bounds (nats) on log f(x+xi) - log f(x) for x typical, xi within budget.

    L2 case: +-(eta^2 +- 2*eta*sqrt(n*sigma^2*(1+2e))) / (2*sigma^2) with the
    minus sign on the lower bound.  Linf case replaces eta^2 by n*eta^2 and
    the cross term by 2*eta*(n*sigma*sqrt(2/pi) + l1_tol); l1_tol defaults to
    0.05*n*sigma, the L1 concentration band used by the verifier.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    n, sigma = spec.dim, spec.sigma
    two_var = 2.0 * sigma * sigma
    if budget_norm.lower() == "l2":
        shell = math.sqrt(n * sigma * sigma * (1.0 + 2.0 * spec.epsilon))
        lo = -(eta * eta + 2.0 * eta * shell) / two_var
        hi = -(eta * eta - 2.0 * eta * shell) / two_var
    elif budget_norm.lower() == "linf":
        if l1_tol is None:
            l1_tol = 0.05 * n * sigma
        reach = n * sigma * _FOLDED_MEAN + l1_tol
        lo = -(n * eta * eta + 2.0 * eta * reach) / two_var
        hi = -(n * eta * eta - 2.0 * eta * reach) / two_var
    else:
        raise ValueError(f"unknown budget norm: {budget_norm!r}")
    return (lo, hi)


def _shifted(x: NoiseField, xi: np.ndarray) -> NoiseField:
    return NoiseField(x.dim, x.sigma, x.values + xi)


def monte_carlo_verify(
    spec: TypicalSetSpec,
    eta: float,
    budget_norm: str,
    trials: int,
    rng: SeededRng,
    l1_tol: float | None = None,
) -> list[VerifierReport]:
    """Empirically test the concentration and perturbation bounds.

    Per trial: draw x ~ N(0, sigma^2 I_n), then a worst-case and a random
    perturbation of the configured budget, and count violations of
      - the squared-L2 concentration interval on clean x,
      - the L1 concentration interval on clean x,
      - the log-density shift bounds (worst-case and random xi),
      - membership of the perturbed sample in the enlarged typical set
        (radius B2 or Binf, worst-case and random xi).
    Trial i uses the derived stream rng.child(i), so fanned-out execution
    reproduces the sequential result exactly.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kind = budget_norm.lower()
    if kind not in ("l2", "linf"):
        raise ValueError(f"unknown budget norm: {budget_norm!r}")
    if l1_tol is None:
        l1_tol = 0.05 * spec.dim * spec.sigma

    n, sigma = spec.dim, spec.sigma
    l2_lo, l2_hi = l2_concentration_bounds(spec)
    l1_lo, l1_hi = l1_concentration_bounds(spec, l1_tol)
    shift_lo, shift_hi = logpdf_shift_bounds(spec, eta, kind, l1_tol=l1_tol)
    bound = b2_bound(spec, eta) if kind == "l2" else binf_bound(spec, eta)

    counts = dict.fromkeys(
        (
            "l2-interval",
            "l1-interval",
            "logpdf-shift-worst",
            "logpdf-shift-random",
            "membership-worst",
            "membership-random",
        ),
        0,
    )

    for i in range(trials):
        base = rng.child(i)
        x = gaussian_noise(n, sigma, base.child(0))
        sq = float(x.values @ x.values)
        if not l2_lo < sq < l2_hi:
            counts["l2-interval"] += 1
        if not l1_lo < norm(x, "l1") < l1_hi:
            counts["l1-interval"] += 1

        if kind == "l2":
            xi_worst = eta * x.values / norm(x, "l2")
            direction = base.child(1).normal(n)
            xi_rand = eta * direction / float(np.linalg.norm(direction))
        else:
            xi_worst = worst_case_linf_shift(x, eta)
            xi_rand = eta * signum(base.child(1).uniform(n, -1.0, 1.0))

        base_logpdf = log_pdf(x)
        for label, xi in (("worst", xi_worst), ("random", xi_rand)):
            shifted = _shifted(x, xi)
            shift = log_pdf(shifted) - base_logpdf
            if not shift_lo <= shift <= shift_hi:
                counts[f"logpdf-shift-{label}"] += 1
            if typicality_radius(shifted) > bound.value:
                counts[f"membership-{label}"] += 1

    params = {
        "dim": n,
        "sigma": sigma,
        "epsilon": spec.epsilon,
        "delta": spec.delta,
        "eta": eta,
        "budget_norm": kind,
        "l1_tol": l1_tol,
    }
    return [
        VerifierReport(trials, counts[name], name, dict(params))
        for name in counts
    ]
