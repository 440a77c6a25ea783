"""Error metrics, spatial-correlation curves, and covariance kernels for
reconstruction ensembles, plus numerical checks of the small-noise limits.

Covariance conventions: for complex random variables a, b the covariance is
cov(a, b) = E[(a - Ea) conj(b - Eb)] and the conjugate pairing is
cov(conj(a), b) = E[conj(a - Ea) conj(b - Eb)]; both are needed to propagate
complex-image covariance into density/velocity covariance.

Displacement-domain kernels are returned corner-indexed (zero displacement at
index [0, 0]), matching numpy FFT conventions; fftshift for display.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._seeds import STREAM_PAIRS, generator
from .flow_model import principal_arg
from .kspace import fft_unitary

TWO_PI = 2 * np.pi


def artifact_map(recon, reference):
    """Relative deviation map 2 (b - b_s) / (|b| + |b_s|); zero where both
    magnitudes vanish. Real inputs stay within [-2, 2]."""
    b = np.asarray(recon)
    bs = np.asarray(reference)
    if b.shape != bs.shape:
        raise ValueError(f"shape mismatch {b.shape} vs {bs.shape}")
    denom = np.abs(b) + np.abs(bs)
    out = np.zeros_like(b, dtype=b.dtype if np.iscomplexobj(b) else float)
    nz = denom > 0
    out[nz] = 2.0 * (b[nz] - bs[nz]) / denom[nz]
    return out


def mse_metrics(recon, reference, fluid_mask):
    """Relative mean squared errors restricted to the fluid region:
    magnitude, squared argument difference, and complex/velocity value."""
    b = np.asarray(recon)
    bs = np.asarray(reference)
    mask = np.asarray(fluid_mask, dtype=bool)
    if b.shape != bs.shape or b.shape != mask.shape:
        raise ValueError("recon, reference and fluid_mask must share a shape")
    bm, bsm = b[mask], bs[mask]
    denom = np.sum(np.abs(bsm) ** 2)
    if denom == 0:
        raise ValueError("reference is zero inside the fluid mask; metrics undefined")
    mse_mag = np.sum((np.abs(bm) - np.abs(bsm)) ** 2) / denom
    darg = principal_arg(bm) - principal_arg(bsm)
    mse_ang = np.mean(darg**2)
    mse_cplx = np.sum(np.abs(bm - bsm) ** 2) / denom
    return {"mse_mag": float(mse_mag), "mse_ang": float(mse_ang), "mse_cplx": float(mse_cplx)}


def percent_error(recon, reference, fluid_mask):
    """Median over fluid pixels of 100 |b - b_s| / |b_s|, excluding pixels
    with zero reference (the median is robust to edge pixels; zero-reference
    pixels would make the ratio meaningless)."""
    b = np.asarray(recon)
    bs = np.asarray(reference)
    mask = np.asarray(fluid_mask, dtype=bool) & (np.abs(reference) > 0)
    if not mask.any():
        raise ValueError("no usable pixels: fluid mask empty or reference zero")
    return float(np.median(100.0 * np.abs(b[mask] - bs[mask]) / np.abs(bs[mask])))


@dataclass
class CorrelationCurve:
    distances: np.ndarray
    samples: list  # per-distance arrays of pairwise Pearson coefficients
    pair_count: int
    omitted: list = field(default_factory=list)

    def mean(self):
        return np.array([s.mean() if s.size else np.nan for s in self.samples])

    def std(self):
        return np.array([s.std(ddof=1) if s.size > 1 else np.nan for s in self.samples])


def _pairs_at_distance(points, d, rng, pair_count):
    tree = cKDTree(points)
    outer = tree.query_pairs(d + 0.5, output_type="ndarray")
    if outer.size == 0:
        return np.zeros((0, 2), dtype=int)
    dist = np.linalg.norm(points[outer[:, 0]] - points[outer[:, 1]], axis=1)
    admissible = outer[dist > d - 0.5]
    if admissible.shape[0] == 0:
        return admissible
    take = min(pair_count, admissible.shape[0])
    sel = rng.choice(admissible.shape[0], size=take, replace=False)
    return admissible[sel]


def correlation_vs_distance(stack, fluid_mask, distances, pair_count=50, seed=0):
    """Sample Pearson correlation across realizations for random pixel pairs
    at each distance (Euclidean, within half a pixel), restricted to the
    fluid region. Distances with no admissible pair are flagged and skipped.
    """
    stack = np.asarray(stack)
    if stack.ndim != 3 or stack.shape[0] < 2:
        raise ValueError("need a stack of >= 2 realizations")
    mask = np.asarray(fluid_mask, dtype=bool)
    points = np.argwhere(mask).astype(float)
    flat = stack.reshape(stack.shape[0], -1)
    lin = np.flatnonzero(mask.ravel())
    coords_to_lin = {tuple(p): lin[i] for i, p in enumerate(np.argwhere(mask))}
    samples, omitted = [], []
    for d in distances:
        rng = generator(seed, STREAM_PAIRS, int(round(d * 1000)))
        pairs = _pairs_at_distance(points, float(d), rng, pair_count)
        if pairs.shape[0] == 0:
            omitted.append(d)
            samples.append(np.zeros(0))
            continue
        rs = []
        for i, j in pairs:
            a = flat[:, coords_to_lin[tuple(points[i])]]
            b = flat[:, coords_to_lin[tuple(points[j])]]
            da = a - a.mean()
            db = b - b.mean()
            denom = np.sqrt((np.abs(da) ** 2).sum() * (np.abs(db) ** 2).sum())
            if denom == 0:
                # degenerate series: identical realizations correlate perfectly,
                # a single constant series has no defined correlation
                both_const = not (da.any() or db.any())
                rs.append(1.0 if both_const else 0.0)
            else:
                rs.append(float((da * db.conj()).real.sum() / denom))
        samples.append(np.asarray(rs))
    return CorrelationCurve(np.asarray(distances), samples, pair_count, omitted)


def kernel_k_omega(mask):
    """Displacement kernel of a fixed sampling set: K(r) = (1/m) sum over
    sampled frequencies of exp(2 pi i xi.r / N); K(0) = 1. The fixed-mask
    noise covariance of least-l2 recovery is 2 sigma^2 (m/n) K(r1 - r2)."""
    omega = np.asarray(mask.omega, dtype=bool)
    m = omega.sum()
    if m == 0:
        raise ValueError("empty sampling mask")
    indicator = np.fft.ifftshift(omega.astype(float))
    return omega.size * np.fft.ifft2(indicator) / m


def kernel_k_mu(density):
    """Displacement kernel of the expected sampling set: inverse transform of
    mu. The expected least-l2 reconstruction is x circularly convolved with
    this kernel."""
    return np.fft.ifft2(np.fft.ifftshift(np.asarray(density.mu, dtype=float)))


def kernel_k_mu_x(density, x):
    """Sampling-randomness covariance kernel at sigma = 0 and its companion.

    Returns (k_mu_x, k_mu) where k_mu_x is the inverse transform of
    w(xi) = mu (1 - mu) |F x(xi)|^2 (unitary F). The variance of least-l2
    recovery over random masks and noise is 2 sigma^2 C_{k_mu} + C_{k_mu_x};
    the zero-displacement entry is the uniform per-pixel variance.
    """
    mu = np.asarray(density.mu, dtype=float)
    spec = fft_unitary(np.asarray(x, dtype=complex)).values
    w = mu * (1.0 - mu) * np.abs(spec) ** 2
    return np.fft.ifft2(np.fft.ifftshift(w)), kernel_k_mu(density)


def expected_l2_reconstruction(density, x):
    """E over masks (and noise) of the least-l2 reconstruction: convolution
    of x with the mu kernel, computed in the frequency domain."""
    spec = np.fft.fft2(np.asarray(x, dtype=complex))
    return np.fft.ifft2(spec * np.fft.ifftshift(density.mu))


def empirical_cov_displacement(stack, subtract_mean=True):
    """Empirical covariance of a reconstruction stack as a function of pixel
    displacement: average of delta(r) conj(delta(r - d)) over realizations
    and positions. Valid when the covariance is displacement-stationary
    (fixed-mask linear recovery); corner-indexed."""
    stack = np.asarray(stack, dtype=complex)
    n_real = stack.shape[0]
    delta = stack - stack.mean(axis=0, keepdims=True) if subtract_mean else stack
    acc = np.zeros(stack.shape[1:], dtype=complex)
    for i in range(n_real):
        spec = np.fft.fft2(delta[i])
        acc += np.fft.ifft2(np.abs(spec) ** 2)
    n_pix = stack.shape[1] * stack.shape[2]
    denom = (n_real - 1) if subtract_mean else n_real
    return acc / (denom * n_pix)


def pixel_variance(stack, subtract_mean=True):
    """Per-pixel complex variance E|delta|^2 across realizations."""
    stack = np.asarray(stack)
    delta = stack - stack.mean(axis=0, keepdims=True) if subtract_mean else stack
    denom = (stack.shape[0] - 1) if subtract_mean else stack.shape[0]
    return (np.abs(delta) ** 2).sum(axis=0) / denom


def empirical_pair_covariances(stack, pixels):
    """Covariance and conjugate-pairing matrices over a pixel list.

    stack: (N, nx, ny) complex realizations; pixels: flat indices (P,).
    Returns (C, P) with C[p, q] = cov(x(p), x(q)) and
    P[p, q] = cov(conj(x(p)), x(q)), sample statistics across realizations.
    """
    stack = np.asarray(stack, dtype=complex)
    vals = stack.reshape(stack.shape[0], -1)[:, pixels]
    delta = vals - vals.mean(axis=0, keepdims=True)
    n = delta.shape[0]
    cov = delta.T @ delta.conj() / (n - 1)
    pair = delta.conj().T @ delta.conj() / (n - 1)
    return cov, pair


def jacobian_covariance_limit(solver, meas_values, probe_scale=None):
    """Small-noise covariance factor 2 D D* of a reconstruction map by
    central finite differences.

    ``solver`` maps a measurement vector to an image grid. Probes perturb
    each measurement coordinate along the real and imaginary axes (the real
    parameterization of the complex derivative); for a complex-linear map
    the assembled matrix equals 2 D D* exactly. The solver must be
    deterministic: identical solves are compared and a mismatch raises.
    """
    y = np.asarray(meas_values, dtype=complex).reshape(-1)
    base1 = solver(y)
    base2 = solver(y.copy())
    if not np.array_equal(base1, base2):
        raise ValueError("solver is nondeterministic; finite differences are meaningless")
    h = probe_scale if probe_scale is not None else 1e-6 * max(np.linalg.norm(y), 1.0)
    n = base1.size
    cov = np.zeros((n, n), dtype=complex)
    for j in range(y.size):
        for probe in (1.0, 1.0j):
            yp = y.copy()
            ym = y.copy()
            yp[j] += probe * h
            ym[j] -= probe * h
            col = (solver(yp) - solver(ym)).reshape(-1) / (2 * h)
            cov += np.outer(col, col.conj())
    return cov


@dataclass
class VelocityCovariance:
    """Noiseless-limit covariances of density and velocity at pixel pairs.

    Matrices are (P, P) over the supplied pixel list: rho_rho, rho_v[k]
    (density at p vs component k at q), v_same[k] (component k at both), and
    v_cross (two distinct components; identical for every ordered pair of
    distinct components). ``excluded`` lists pixels dropped for having zero
    magnitude in some image, where the limit formulas do not apply.
    """

    pixels: np.ndarray
    rho_rho: np.ndarray
    rho_v: list
    v_same: list
    v_cross: np.ndarray
    excluded: list = field(default_factory=list)


def velocity_cov_limit(cov_limits, pair_limits, images0, venc, pixels):
    """Propagate complex-image covariance limits through the magnitude /
    phase-difference map.

    cov_limits[k] and pair_limits[k] are (P, P) matrices of
    lim sigma^-2 cov(x_k(p), x_k(q)) and lim sigma^-2 cov(conj(x_k(p)), x_k(q))
    over the pixel list, for k = 0..3. images0 are the noiseless-limit
    reconstructions (4, nx, ny). Pixels where any |x_k| is zero are excluded.

    Derivative bookkeeping (Wirtinger): with theta_k = arg(x_k), s = venc/(2 pi),
        d rho / d x_0 = exp(-i theta_0) / 2,
        d v_k / d x_0 = i s / x_0,   d v_k / d x_k = -i s / x_k,
    which yields, writing C = cov limit and P the conjugate pairing,
        cov(rho, rho)  = Re{e(-p)e*(q) C_0} / 2 + Re{e(p)e(q) P_0} / 2
        cov(rho, v_k)  = s/rho(q) * (Im{e(-p)e*(q) C_0} + Im{e(p)e(q) P_0})
        cov(v_k, v_l)  = 2 s^2/(rho(p) rho(q)) * (Re{e(-p)e*(q) C_0}
                                                  - Re{e(p)e(q) P_0})
        cov(v_k, v_k)  = same + the x_k-image term with theta_k phases,
    where e(p) = exp(i theta(p)); all velocity scalings carry venc linearly
    for rho-v terms and quadratically for v-v terms.
    """
    images0 = np.asarray(images0, dtype=complex)
    pixels = np.asarray(pixels, dtype=int)
    flat = images0.reshape(4, -1)[:, pixels]
    good = np.all(np.abs(flat) > 0, axis=0)
    excluded = [int(p) for p in pixels[~good]]
    keep = np.flatnonzero(good)
    pixels = pixels[keep]
    flat = flat[:, keep]
    covs = [np.asarray(c)[np.ix_(keep, keep)] for c in cov_limits]
    pairs = [np.asarray(p)[np.ix_(keep, keep)] for p in pair_limits]

    theta = principal_arg(flat)
    rho0 = np.abs(flat[0])
    s = venc / TWO_PI

    def phase_terms(k):
        # direct(p, q) = e^{-i theta(p) + i theta(q)}, paired = e^{i(theta(p)+theta(q))}
        direct = np.exp(-1j * theta[k])[:, None] * np.exp(1j * theta[k])[None, :]
        paired = np.exp(1j * theta[k])[:, None] * np.exp(1j * theta[k])[None, :]
        return direct * covs[k], paired * pairs[k]

    c0, p0 = phase_terms(0)
    rho_rho = 0.5 * c0.real + 0.5 * p0.real
    inv_rho_q = 1.0 / rho0[None, :]
    inv_rho_pq = 1.0 / np.outer(rho0, rho0)
    rho_v = []
    v_same = []
    v_cross = 2 * s**2 * inv_rho_pq * (c0.real - p0.real)
    for k in range(3):
        rho_v.append(s * inv_rho_q * (c0.imag + p0.imag))
        ck, pk = phase_terms(k + 1)
        mag_k = np.abs(flat[k + 1])
        inv_k = 1.0 / np.outer(mag_k, mag_k)
        v_same.append(v_cross + 2 * s**2 * inv_k * (ck.real - pk.real))
    return VelocityCovariance(pixels, rho_rho, rho_v, v_same, v_cross, excluded)
