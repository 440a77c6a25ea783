"""Unitary Fourier transforms, undersampled measurements, and k-space noise.

Frequency grids are DC-centered by convention (the zero frequency sits at
index (nx//2, ny//2)); transforms shift internally. Noise is generated on the
full frequency grid from a counter-based generator keyed by the seed, so the
same seed produces identical noise no matter which sampling set is applied
afterwards — the sampling set and the noise are independent by construction.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._seeds import STREAM_NOISE, generator

LAYOUT_CENTERED = "dc-centered"
LAYOUT_CORNER = "dc-corner"


def _check_pow2_dims(shape):
    for n in shape:
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"grid dims must be powers of two, got {tuple(shape)}")


@dataclass
class KSpaceData:
    """Complex frequency-domain grid plus its DC layout flag."""

    values: np.ndarray
    layout: str = LAYOUT_CENTERED

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.layout not in (LAYOUT_CENTERED, LAYOUT_CORNER):
            raise ValueError(f"unknown layout {self.layout!r}")

    @property
    def shape(self):
        return self.values.shape

    def centered(self):
        if self.layout == LAYOUT_CENTERED:
            return self
        return KSpaceData(np.fft.fftshift(self.values), LAYOUT_CENTERED)

    def corner(self):
        if self.layout == LAYOUT_CORNER:
            return self
        return KSpaceData(np.fft.ifftshift(self.values), LAYOUT_CORNER)


@dataclass
class Measurements:
    """Sampled k-space coefficients in row-major order over the centered grid."""

    values: np.ndarray
    mask: "object" = None  # SamplingMask; kept as a reference, not copied

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)

    @property
    def m(self):
        return self.values.size


@dataclass
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


def fft_unitary(image) -> KSpaceData:
    """Unitary 2D FFT of an image grid, returned DC-centered."""
    image = np.asarray(image, dtype=complex)
    if image.size == 0:
        raise ValueError("empty grid")
    _check_pow2_dims(image.shape)
    return KSpaceData(np.fft.fftshift(np.fft.fft2(image, norm="ortho")), LAYOUT_CENTERED)


def ifft_unitary(k: KSpaceData):
    """Inverse of fft_unitary."""
    _check_pow2_dims(k.shape)
    return np.fft.ifft2(k.corner().values, norm="ortho")


def sample(k: KSpaceData, mask) -> Measurements:
    """Extract the coefficients at the mask's sampled frequencies."""
    kc = k.centered()
    if mask.omega.shape != kc.shape:
        raise ValueError(f"mask shape {mask.omega.shape} != k-space shape {kc.shape}")
    return Measurements(kc.values[mask.omega], mask=mask)


def inject(meas: Measurements, mask=None) -> KSpaceData:
    """Zero-fill the unsampled frequencies; adjoint of sample."""
    mask = mask if mask is not None else meas.mask
    if mask is None:
        raise ValueError("no sampling mask attached to measurements")
    if meas.m != int(mask.omega.sum()):
        raise ValueError(f"measurement count {meas.m} != mask count {int(mask.omega.sum())}")
    grid = np.zeros(mask.omega.shape, dtype=complex)
    grid[mask.omega] = meas.values
    return KSpaceData(grid, LAYOUT_CENTERED)


def noise_grid(shape, seed) -> np.ndarray:
    """Full-grid complex noise, unit variance per real component, keyed by seed.

    The grid is produced in a fixed row-major order over the DC-centered
    layout, so the value at a frequency depends only on (seed, frequency).
    """
    rng = generator(seed, STREAM_NOISE)
    g = rng.standard_normal((2,) + tuple(shape))
    return g[0] + 1j * g[1]


def add_noise(k: KSpaceData, spec: NoiseSpec) -> KSpaceData:
    """Add sigma * (g_re + i g_im) per frequency; returns same layout as input."""
    if spec.sigma == 0:
        return KSpaceData(k.values.copy(), k.layout)
    z = noise_grid(k.shape, spec.seed)
    if k.layout == LAYOUT_CORNER:
        z = np.fft.ifftshift(z)
    return KSpaceData(k.values + spec.sigma * z, k.layout)


def sigma_from_snr(x, snr_x) -> float:
    """Noise std from the image-power SNR: sigma = ||x||_2 / sqrt(2 n SNR_x)."""
    x = np.asarray(x)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise ValueError("x is identically zero")
    if snr_x <= 0:
        raise ValueError(f"snr_x must be positive, got {snr_x}")
    return float(nrm / (np.sqrt(snr_x) * np.sqrt(2 * x.size)))


def snr_measured(x, mask, sigma) -> float:
    """SNR relative to the measured signal power: ||F_Omega x||^2 / (2 m sigma^2)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    meas = sample(fft_unitary(x), mask)
    if meas.m == 0:
        raise ValueError("empty sampling mask")
    return float(np.linalg.norm(meas.values) ** 2 / (2 * meas.m * sigma ** 2))


def mean_kspace_amplitude(x) -> float:
    """Mean magnitude of the unitary Fourier coefficients of x."""
    return float(np.mean(np.abs(fft_unitary(x).values)))


def sigma_from_percent(x, percent) -> float:
    """Noise std as a percentage of the mean k-space amplitude of x.

    x may be one grid or a stack of grids (e.g. the four flow-encoded images);
    the mean is taken over all supplied coefficients, yielding one sigma.
    """
    x = np.asarray(x, dtype=complex)
    grids = x if x.ndim == 3 else x[None]
    amp = np.mean([mean_kspace_amplitude(g) for g in grids])
    if amp == 0:
        raise ValueError("x is identically zero")
    return float(percent / 100.0 * amp)


def residual_threshold(m, delta, sigma) -> float:
    """Quantile bound on ||sigma z||_2 for chi-squared noise with 2m dof:

        t(m, delta) = sigma * (sqrt(2m - 1/2) + ndtri(1 - delta) / sqrt(2)).
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    return float(sigma * (np.sqrt(2 * m - 0.5) + ndtri(1 - delta) / np.sqrt(2)))
