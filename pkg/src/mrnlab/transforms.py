"""Orthonormal multilevel 2D wavelet transforms and the measurement operator.

Transforms use periodic (circular) boundary extension, which keeps the
one-level analysis matrix exactly orthogonal on even-length signals, so
forward/inverse round-trips and Parseval hold to machine precision at every
supported depth. Complex grids are handled by linearity of the real filters.

Coefficient layout is the standard multilevel arrangement: the approximation
block sits top-left, each scale's three detail blocks fill out the enclosing
quadrant. Detail levels are numbered from the COARSEST scale: level 1 is the
coarsest detail scale, level ``levels`` the finest; level 0 denotes the
approximation block.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kspace import fft_unitary, ifft_unitary, inject, sample

def _polish_daubechies(h0, moments):
    """Newton-refine a scaling filter to float64 accuracy.

    The Daubechies filter of length 2p is the unique solution (up to
    reversal, fixed by the starting point) of: unit even-shift
    autocorrelation, and p vanishing moments of the quadrature mirror
    filter. Tabulated starting values are accurate to ~1e-11, which is not
    enough for 1e-12 round-trip bounds; two Newton steps reach ~1e-16.
    """
    h = np.asarray(h0, dtype=float)
    length = h.size
    n_idx = np.arange(length)
    sign = (-1.0) ** (length - 1 - n_idx)
    for _ in range(6):
        res = []
        jac = []
        for lag in range(0, length, 2):
            res.append(h[: length - lag] @ h[lag:] - (1.0 if lag == 0 else 0.0))
            row = np.zeros(length)
            row[: length - lag] += h[lag:]
            row[lag:] += h[: length - lag]
            jac.append(row)
        for p in range(moments):
            scale = 1.0 / max(1.0, float(length - 1) ** p)
            res.append(scale * np.sum(sign * h * (length - 1 - n_idx) ** p))
            jac.append(scale * sign * (length - 1 - n_idx) ** p)
        res = np.asarray(res)
        if np.abs(res).max() < 1e-15:
            break
        h = h - np.linalg.solve(np.asarray(jac), res)
    return h


# Orthonormal Daubechies scaling filters (haar = db1); db4/db8 carry 4/8
# vanishing moments. Tabulated values are polished to machine precision.
FILTERS = {
    "haar": np.array([0.7071067811865476, 0.7071067811865476]),
    "db4": _polish_daubechies([
        0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
        -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
        0.032883011666982945, -0.010597401784997278,
    ], moments=4),
    "db8": _polish_daubechies([
        0.05441584224308161, 0.3128715909144659, 0.6756307362980128,
        0.5853546836548691, -0.015829105256023893, -0.2840155429624281,
        0.00047248457399797254, 0.12874742662018601, -0.01736930100202211,
        -0.04408825393106472, 0.013981027917015516, 0.008746094047015655,
        -0.00487035299301066, -0.0003917403729959771, 0.0006754494059985568,
        -0.00011747678400228192,
    ], moments=8),
}

DEFAULT_LEVELS = 4


@dataclass(frozen=True)
class WaveletBasis:
    family: str = "haar"
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        if self.family not in FILTERS:
            raise ValueError(f"unknown wavelet family {self.family!r}; expected {tuple(FILTERS)}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")

    def validate_shape(self, shape):
        min_dim = min(shape)
        if self.levels > int(np.log2(min_dim)):
            raise ValueError(
                f"{self.levels} levels exceed log2(min dim) = {int(np.log2(min_dim))} "
                f"for grid {tuple(shape)}"
            )
        for n in shape:
            if n < 2 or (n & (n - 1)) != 0:
                raise ValueError(f"grid dims must be powers of two, got {tuple(shape)}")


@dataclass
class WaveletCoeffs:
    """Multilevel coefficient grid (same dims as the image) plus its basis."""

    values: np.ndarray
    basis: WaveletBasis

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)

    @property
    def shape(self):
        return self.values.shape


@lru_cache(maxsize=None)
def _step_matrix(family, n):
    """One-level periodized analysis matrix [H; G] of size n x n (orthogonal)."""
    h = FILTERS[family]
    length = h.size
    g = ((-1) ** np.arange(length)) * h[::-1]
    mat = np.zeros((n, n))
    for k in range(n // 2):
        for tap in range(length):
            col = (2 * k + tap) % n
            mat[k, col] += h[tap]
            mat[n // 2 + k, col] += g[tap]
    return mat


def wavelet_forward(image, basis: WaveletBasis) -> WaveletCoeffs:
    """Separable multilevel analysis transform of a complex grid."""
    image = np.asarray(image, dtype=complex)
    basis.validate_shape(image.shape)
    out = image.copy()
    nx, ny = image.shape
    for lev in range(basis.levels):
        mx, my = nx >> lev, ny >> lev
        tx = _step_matrix(basis.family, mx)
        ty = _step_matrix(basis.family, my)
        out[:mx, :my] = tx @ out[:mx, :my] @ ty.T
    return WaveletCoeffs(out, basis)


def wavelet_inverse(coeffs: WaveletCoeffs) -> np.ndarray:
    """Inverse of wavelet_forward; exact by orthogonality."""
    basis = coeffs.basis
    basis.validate_shape(coeffs.shape)
    out = coeffs.values.copy()
    nx, ny = coeffs.shape
    for lev in reversed(range(basis.levels)):
        mx, my = nx >> lev, ny >> lev
        tx = _step_matrix(basis.family, mx)
        ty = _step_matrix(basis.family, my)
        out[:mx, :my] = tx.T @ out[:mx, :my] @ ty
    return out


def level_slices(shape, basis: WaveletBasis, level):
    """Index slices of the blocks making up a detail level (1 = coarsest).

    Returns a list of (row_slice, col_slice); level 0 is the approximation
    block, levels 1..levels are the (horizontal, vertical, diagonal) detail
    blocks at successively finer scales.
    """
    if not 0 <= level <= basis.levels:
        raise ValueError(f"level must lie in 0..{basis.levels}, got {level}")
    nx, ny = shape
    if level == 0:
        return [(slice(0, nx >> basis.levels), slice(0, ny >> basis.levels))]
    depth = basis.levels - level  # number of times this scale was split further
    sx, sy = nx >> (depth + 1), ny >> (depth + 1)
    return [
        (slice(0, sx), slice(sy, 2 * sy)),
        (slice(sx, 2 * sx), slice(0, sy)),
        (slice(sx, 2 * sx), slice(sy, 2 * sy)),
    ]


@dataclass
class MeasurementOperator:
    """Composed operator: inverse wavelet, then undersampled unitary Fourier."""

    mask: "object"  # SamplingMask
    basis: WaveletBasis

    def __post_init__(self):
        self.basis.validate_shape(self.mask.omega.shape)

    @property
    def shape(self):
        return self.mask.omega.shape

    @property
    def m(self):
        return self.mask.m

    def apply(self, coeffs_values) -> np.ndarray:
        """Coefficient grid -> measurement vector."""
        c = np.asarray(coeffs_values, dtype=complex)
        if c.shape != self.shape:
            raise ValueError(f"coefficient shape {c.shape} != grid {self.shape}")
        image = wavelet_inverse(WaveletCoeffs(c, self.basis))
        return sample(fft_unitary(image), self.mask).values

    def adjoint(self, meas_values) -> np.ndarray:
        """Measurement vector -> coefficient grid."""
        v = np.asarray(meas_values, dtype=complex).reshape(-1)
        if v.size != self.m:
            raise ValueError(f"measurement length {v.size} != mask count {self.m}")
        from .kspace import Measurements

        image = ifft_unitary(inject(Measurements(v, self.mask)))
        return wavelet_forward(image, self.basis).values

    def image_from_coeffs(self, coeffs_values) -> np.ndarray:
        return wavelet_inverse(WaveletCoeffs(np.asarray(coeffs_values, dtype=complex), self.basis))


def atom_norms(op: MeasurementOperator, level) -> np.ndarray:
    """Norms ||Phi e_j||_2 over the coefficient indices of a level, sorted
    in decreasing order. Level 1 is the coarsest detail scale; level 0 the
    approximation block."""
    norms = []
    unit = np.zeros(op.shape, dtype=complex)
    for rs, cs in level_slices(op.shape, op.basis, level):
        for i in range(rs.start, rs.stop):
            for j in range(cs.start, cs.stop):
                unit[i, j] = 1.0
                norms.append(np.linalg.norm(op.apply(unit)))
                unit[i, j] = 0.0
    return np.sort(np.asarray(norms))[::-1]
