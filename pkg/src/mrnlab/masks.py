"""Random k-space sampling sets drawn from calibrated density patterns.

The undersampling ratio is the fraction of frequencies REMOVED: ratio 0.75
keeps one frequency in four. Variable-density patterns (gaussian, triangular,
exponential) are radial profiles whose amplitude is calibrated by bisection so
the expected sample count matches the target; their shape parameters are fixed
stand-ins since only the pattern family is prescribed.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._seeds import STREAM_MASK, generator

PATTERNS = ("bernoulli", "gaussian", "triangular", "exponential", "halton")


class CalibrationError(ValueError):
    """Density amplitude calibration could not reach the target ratio."""


@dataclass
class SamplingMask:
    """Boolean frequency-inclusion grid, DC-centered."""

    omega: np.ndarray
    pattern: str = "custom"
    target_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=bool)

    @property
    def shape(self):
        return self.omega.shape

    @property
    def m(self):
        return int(self.omega.sum())

    @property
    def kept_fraction(self):
        return self.m / self.omega.size


@dataclass
class DensityFunction:
    """Per-frequency inclusion probability mu(xi) in [0, 1], DC-centered."""

    mu: np.ndarray
    pattern: str = "custom"
    target_ratio: float = 0.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.min() < 0 or self.mu.max() > 1:
            raise ValueError("density values must lie in [0, 1]")

    @property
    def shape(self):
        return self.mu.shape

    @property
    def expected_count(self):
        return float(self.mu.sum())


def _radial_xi(shape):
    nx, ny = shape
    ii = np.arange(nx)[:, None] - nx // 2
    jj = np.arange(ny)[None, :] - ny // 2
    return np.hypot(ii, jj)


def _base_profile(pattern, shape):
    r = _radial_xi(shape)
    half = min(shape) / 2.0
    if pattern == "gaussian":
        s = 0.15 * half
        return np.exp(-(r ** 2) / (2 * s ** 2))
    if pattern == "triangular":
        return np.maximum(0.0, 1.0 - r / half)
    if pattern == "exponential":
        s = 0.15 * half
        return np.exp(-r / s)
    raise ValueError(f"unknown variable-density pattern {pattern!r}")


def make_density(pattern, shape, target_ratio) -> DensityFunction:
    """Density with sum mu = n * (1 - target_ratio), calibrated by bisection."""
    if not 0 < target_ratio < 1:
        raise ValueError(f"target_ratio must lie in (0, 1), got {target_ratio}")
    n = int(np.prod(shape))
    target = n * (1.0 - target_ratio)
    if pattern == "bernoulli":
        return DensityFunction(np.full(shape, 1.0 - target_ratio), pattern, target_ratio)
    base = _base_profile(pattern, shape)
    reachable = float((base > 0).sum())
    if reachable < target:
        raise CalibrationError(
            f"{pattern} density support holds {reachable:.0f} frequencies; "
            f"cannot reach expected count {target:.1f}"
        )

    def total(amp):
        return float(np.minimum(1.0, amp * base).sum())

    lo, hi = 0.0, 1.0
    while total(hi) < target:
        hi *= 2.0
        if hi > 1e18:
            raise CalibrationError(f"bisection bracket failed for {pattern} at ratio {target_ratio}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < target:
            lo = mid
        else:
            hi = mid
        if total(hi) - target <= 1e-7 * target and target - total(lo) <= 1e-7 * target:
            break
    amp = 0.5 * (lo + hi)
    mu = np.minimum(1.0, amp * base)
    if abs(mu.sum() - target) > 1e-6 * target:
        raise CalibrationError(
            f"calibration residual {abs(mu.sum() - target):.3e} exceeds tolerance for "
            f"{pattern} at ratio {target_ratio}"
        )
    return DensityFunction(mu, pattern, target_ratio)


def draw_mask(density: DensityFunction, seed) -> SamplingMask:
    """Independent Bernoulli draw per frequency with probability mu(xi)."""
    rng = generator(seed, STREAM_MASK)
    u = rng.random(density.shape)
    return SamplingMask(u < density.mu, density.pattern, density.target_ratio, seed)


def _radical_inverse(i, base):
    f, inv = 0.0, 1.0
    while i > 0:
        inv /= base
        f += inv * (i % base)
        i //= base
    return f


def draw_halton_mask(shape, target_ratio, seed) -> SamplingMask:
    """First m distinct grid points of the (2,3)-Halton sequence, seed-offset."""
    if not 0 < target_ratio < 1:
        raise ValueError(f"target_ratio must lie in (0, 1), got {target_ratio}")
    nx, ny = shape
    n = nx * ny
    m = int(round(n * (1.0 - target_ratio)))
    omega = np.zeros(shape, dtype=bool)
    start = (int(seed) % (1 << 20)) + 1
    count, i = 0, start
    limit = start + 100 * n * max(nx, ny)
    while count < m and i < limit:
        px = int(_radical_inverse(i, 2) * nx)
        py = int(_radical_inverse(i, 3) * ny)
        if not omega[px, py]:
            omega[px, py] = True
            count += 1
        i += 1
    if count < m:
        raise CalibrationError(f"halton sequence exhausted after {i - start} draws")
    return SamplingMask(omega, "halton", target_ratio, seed)


def deterministic_lowpass_mask(shape, cutoff_fraction) -> SamplingMask:
    """Centered square of low frequencies holding ~cutoff_fraction of the grid.

    Sides are odd so the square is symmetric under frequency negation; the
    side whose square count best matches the requested kept fraction wins.
    """
    if not 0 < cutoff_fraction <= 1:
        raise ValueError(f"cutoff_fraction must lie in (0, 1], got {cutoff_fraction}")
    nx, ny = shape
    n = nx * ny
    kept = cutoff_fraction * n
    if kept >= n:
        return SamplingMask(np.ones(shape, dtype=bool), "lowpass", 0.0)
    max_side = min(nx, ny) - 1
    sides = np.arange(1, max_side + 1, 2)
    side = int(sides[np.argmin(np.abs(sides.astype(float) ** 2 - kept))])
    half = (side - 1) // 2
    cx, cy = nx // 2, ny // 2
    omega = np.zeros(shape, dtype=bool)
    omega[cx - half:cx + half + 1, cy - half:cy + half + 1] = True
    return SamplingMask(omega, "lowpass", 1.0 - side * side / n)


@lru_cache(maxsize=64)
def _density_cached(pattern, shape, target_ratio):
    return make_density(pattern, shape, target_ratio)


def make_mask(pattern, shape, target_ratio, seed) -> SamplingMask:
    """Draw a mask of the given pattern at the target undersampling ratio.

    Densities are cached per (pattern, shape, ratio); callers must not
    mutate the returned density grids.
    """
    if pattern == "halton":
        return draw_halton_mask(shape, target_ratio, seed)
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    return draw_mask(_density_cached(pattern, tuple(shape), target_ratio), seed)


def full_mask(shape) -> SamplingMask:
    return SamplingMask(np.ones(shape, dtype=bool), "full", 0.0)
