"""Phase-contrast flow encoding: forward map, right-inverse, and synthetic fields.

A flow field (density rho, nuisance phase theta0, velocity components v_1..v_3,
velocity encoding venc) maps to four complex images

    x_0 = rho * exp(i*theta0)
    x_k = x_0 * exp(i*pi*v_k/venc)        k = 1, 2, 3

and is recovered from them by magnitude/argument extraction. The argument is
the principal value on [-pi, pi) with arg(0) = 0; no phase unwrapping is
performed, so velocities must satisfy |v_k| < venc inside the fluid region.
"""

from dataclasses import dataclass, field

import numpy as np


def principal_arg(x):
    """Complex argument on [-pi, pi) with arg(0) = 0."""
    a = np.angle(x)
    # np.angle returns +pi for the negative real axis; fold it to -pi.
    if np.isscalar(a):
        return -np.pi if a >= np.pi else a
    a = np.asarray(a).copy()
    a[a >= np.pi] = -np.pi
    return a


@dataclass
class FlowField:
    """Density, nuisance phase, velocity components and encoding parameter.

    rho:        nonnegative magnitude grid (nx, ny)
    theta0:     nuisance phase grid, radians in [-pi, pi)
    v:          velocity components, shape (3, nx, ny), same units as venc
    venc:       positive velocity encoding
    fluid_mask: boolean grid, True where flow statistics are evaluated
    """

    rho: np.ndarray
    theta0: np.ndarray
    v: np.ndarray
    venc: float
    fluid_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.theta0 = np.asarray(self.theta0, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.fluid_mask is None:
            self.fluid_mask = self.rho > 0
        self.fluid_mask = np.asarray(self.fluid_mask, dtype=bool)

    @property
    def shape(self):
        return self.rho.shape

    def validate(self):
        if self.venc <= 0:
            raise ValueError(f"venc must be positive, got {self.venc}")
        if self.v.shape != (3,) + self.rho.shape:
            raise ValueError(f"v has shape {self.v.shape}, expected {(3,) + self.rho.shape}")
        for name, grid in (("theta0", self.theta0), ("fluid_mask", self.fluid_mask)):
            if grid.shape != self.rho.shape:
                raise ValueError(f"{name} has shape {grid.shape}, expected {self.rho.shape}")
        if np.any(self.rho < 0):
            raise ValueError("rho must be nonnegative everywhere")
        if self.fluid_mask.any():
            vmax = np.abs(self.v[:, self.fluid_mask]).max()
            if vmax >= self.venc:
                raise ValueError(
                    f"max |v|/venc = {vmax / self.venc:.4f} inside the fluid mask; "
                    "must be < 1 to avoid phase wrapping"
                )
        return self


@dataclass
class ComplexImageSet:
    """Four complex images x_0..x_3, stacked as shape (4, nx, ny)."""

    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        if self.x.ndim != 3 or self.x.shape[0] != 4:
            raise ValueError(f"expected shape (4, nx, ny), got {self.x.shape}")

    @property
    def shape(self):
        return self.x.shape[1:]

    def __getitem__(self, k):
        return self.x[k]


def forward_4dflow(field: FlowField) -> ComplexImageSet:
    """Encode a flow field into the four phase-contrast complex images."""
    field.validate()
    x0 = field.rho * np.exp(1j * field.theta0)
    images = np.empty((4,) + field.shape, dtype=complex)
    images[0] = x0
    for k in range(3):
        images[k + 1] = x0 * np.exp(1j * np.pi * field.v[k] / field.venc)
    return ComplexImageSet(images)


def inverse_4dflow(images: ComplexImageSet, venc: float) -> FlowField:
    """Recover density, nuisance phase and velocities from the complex images.

    Zero pixels follow the arg(0) = 0 convention: they yield rho = 0 and
    v_k = -(venc/pi) * arg(x_0) there rather than an error. No unwrapping is
    applied to the phase differences.
    """
    if venc <= 0:
        raise ValueError(f"venc must be positive, got {venc}")
    x = images.x
    rho = np.abs(x[0])
    theta0 = principal_arg(x[0])
    v = np.empty((3,) + rho.shape)
    for k in range(3):
        delta = principal_arg(x[k + 1]) - theta0
        # Fold the pointwise difference to [-pi, pi): the encoded phase
        # pi*v_k/venc lives there whenever |v_k| < venc, even when theta0
        # pushes arg(x_k) itself across the branch cut.
        v[k] = (venc / np.pi) * (np.mod(delta + np.pi, 2 * np.pi) - np.pi)
    return FlowField(rho=rho, theta0=theta0, v=v, venc=venc, fluid_mask=rho > 0)


def _centered_distance(shape):
    nx, ny = shape
    ii = np.arange(nx)[:, None] - nx // 2
    jj = np.arange(ny)[None, :] - ny // 2
    return np.hypot(ii, jj), ii, jj


def make_poiseuille(shape, orientation, radius, vmax, venc) -> FlowField:
    """Hagen-Poiseuille slice through an ideal cylindrical vessel.

    orientation "orthogonal": unit-density disc of the given radius centered
    on the grid, out-of-plane velocity v_3 = vmax * (1 - (d/radius)^2).
    orientation "longitudinal": unit-density band of half-width ``radius``
    along axis 1 (the in-plane vessel axis); the axial velocity is stored in
    v_2 with the parabolic profile across the band.
    """
    nx, ny = shape
    if not (0 < vmax < venc):
        raise ValueError(f"need 0 < vmax < venc, got vmax={vmax}, venc={venc}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    cx, cy = nx // 2, ny // 2
    rho = np.zeros(shape)
    v = np.zeros((3,) + tuple(shape))
    if orientation == "orthogonal":
        if radius > min(cx, nx - 1 - cx, cy, ny - 1 - cy):
            raise ValueError(f"radius {radius} does not fit inside grid {shape}")
        d, _, _ = _centered_distance(shape)
        inside = d <= radius
        rho[inside] = 1.0
        v[2][inside] = vmax * (1.0 - (d[inside] / radius) ** 2)
    elif orientation == "longitudinal":
        if radius > min(cx, nx - 1 - cx):
            raise ValueError(f"radius {radius} does not fit inside grid {shape}")
        d = np.abs(np.arange(nx) - cx)[:, None] * np.ones((1, ny))
        inside = d <= radius
        rho[inside] = 1.0
        v[1][inside] = vmax * (1.0 - (d[inside] / radius) ** 2)
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    return FlowField(rho=rho, theta0=np.zeros(shape), v=v, venc=venc, fluid_mask=rho > 0)


def make_aorta_like(shape, vmax, venc, voxel=0) -> FlowField:
    """Synthetic aorta-like vessel: an arch half-annulus joined to a
    descending straight segment, with parabolic cross-profiles and in-plane
    tangential velocity. Deterministic; stands in for patient-specific data.

    voxel > 0 renders the field as a coarse segmentation: density and
    velocities become constant on voxel x voxel cells (majority vote for the
    vessel mask, cell means for the velocity), the way voxelized anatomy
    masks look. Grid dims must then be divisible by the voxel size.
    """
    nx, ny = shape
    if not (0 < vmax < venc):
        raise ValueError(f"need 0 < vmax < venc, got vmax={vmax}, venc={venc}")
    cx, cy = nx * 0.42, ny * 0.5
    r_mid = 0.26 * min(nx, ny)
    half_w = 0.35 * r_mid
    ii = np.arange(nx)[:, None] * np.ones((1, ny))
    jj = np.ones((nx, 1)) * np.arange(ny)[None, :]
    rho = np.zeros(shape)
    v = np.zeros((3,) + tuple(shape))

    # Arch: upper half-annulus around (cx, cy); tangential in-plane flow.
    rr = np.hypot(ii - cx, jj - cy)
    upper = ii <= cx
    band = np.abs(rr - r_mid) <= half_w
    arch = band & upper & (rr > 0)
    prof = 1.0 - ((rr - r_mid) / half_w) ** 2
    tx = -(jj - cy) / np.where(rr > 0, rr, 1.0)
    ty = (ii - cx) / np.where(rr > 0, rr, 1.0)
    rho[arch] = 1.0
    v[0][arch] = vmax * prof[arch] * tx[arch]
    v[1][arch] = vmax * prof[arch] * ty[arch]

    # Descending segment below the arch outlet at j = cy + r_mid.
    dsc = (np.abs(jj - (cy + r_mid)) <= half_w) & (ii > cx)
    prof_d = 1.0 - ((jj - (cy + r_mid)) / half_w) ** 2
    rho[dsc] = 1.0
    v[0][dsc] = vmax * prof_d[dsc]
    v[1][dsc] = 0.0

    if voxel:
        if nx % voxel or ny % voxel:
            raise ValueError(f"voxel size {voxel} must divide grid dims {shape}")

        def cell_mean(a):
            return a.reshape(nx // voxel, voxel, ny // voxel, voxel).mean(axis=(1, 3))

        def expand(a):
            return np.repeat(np.repeat(a, voxel, axis=0), voxel, axis=1)

        rho = expand((cell_mean(rho) > 0.5).astype(float))
        v = np.stack([expand(cell_mean(v[k])) * (rho > 0) for k in range(3)])

    # Clamp the overlap seam so the no-wrap invariant holds strictly.
    speed = np.sqrt((v ** 2).sum(axis=0))
    over = speed >= venc * 0.999
    if over.any():
        scale = venc * 0.999 / speed[over]
        for k in range(3):
            v[k][over] *= scale
    return FlowField(rho=rho, theta0=np.zeros(shape), v=v, venc=venc, fluid_mask=rho > 0)
