"""Monte Carlo ensemble runner: repeated noisy undersampled acquisitions of a
flow field, reconstructed per configuration, with reproducible seeding and a
stable on-disk layout.

Seeding: every random quantity in realization i for image k derives from
(master_seed, purpose, i, k) through SeedSequence, so any single realization
can be reproduced bit-exactly in isolation and no stream ever overlaps
another. A fixed mask is shared by all realizations and all four images; the
resampled mode draws one mask per realization (optionally per image).

Run directory layout: config.json, field/*.grid (true field echo),
mask_<i>.grid, recon_<i>_<k>.grid, and metrics.csv written by the CLI.
Reconstruction files are written atomically (tmp + rename), so an
interrupted run leaves only complete realizations behind.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gridio
from ._seeds import derive_seed
from .flow_model import (
    ComplexImageSet,
    FlowField,
    forward_4dflow,
    inverse_4dflow,
    make_aorta_like,
    make_poiseuille,
)
from .kspace import (
    KSpaceData,
    NoiseSpec,
    add_noise,
    fft_unitary,
    residual_threshold,
    sample,
    sigma_from_percent,
)
from .masks import SamplingMask, full_mask, make_mask
from .solvers import RecoveryConfig, reconstruct
from .transforms import MeasurementOperator, WaveletBasis

_NS_MASK = 11
_NS_NOISE = 22

CASES = ("poiseuille-ortho", "poiseuille-long", "aorta-like")


@dataclass
class ExperimentConfig:
    case: str = "poiseuille-ortho"
    size: int = 64
    venc: float = 1.0
    vmax: float = 0.6
    radius: int = 0  # 0 -> size // 2 - 8
    data_dir: str = ""  # when set, load the field from disk instead of generating
    mask_pattern: str = "gaussian"
    undersampling: float = 0.75
    mask_fixed: bool = True
    mask_per_image: bool = False
    noise_percent: float = 10.0
    sigma: float = -1.0  # >= 0 overrides noise_percent
    method: str = "cs"
    wavelet: str = "haar"
    levels: int = 4
    eta: float = -1.0  # >= 0 overrides the automatic quantile bound
    delta: float = 0.05
    realizations: int = 100
    master_seed: int = 0
    workers: int = 1
    solver_tol: float = 1e-5
    solver_maxiter: int = 4000

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError(f"realizations must be >= 1, got {self.realizations}")

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_field(config: ExperimentConfig) -> FlowField:
    if config.data_dir:
        return load_field_dir(config.data_dir)
    shape = (config.size, config.size)
    radius = config.radius or config.size // 2 - 8
    if config.case == "poiseuille-ortho":
        return make_poiseuille(shape, "orthogonal", radius, config.vmax, config.venc)
    if config.case == "poiseuille-long":
        return make_poiseuille(shape, "longitudinal", radius, config.vmax, config.venc)
    if config.case == "aorta-like":
        return make_aorta_like(shape, config.vmax, config.venc)
    raise ValueError(f"unknown case {config.case!r}; expected one of {CASES}")


def save_field_dir(path, fld: FlowField):
    os.makedirs(path, exist_ok=True)
    gridio.write_grid(os.path.join(path, "rho.grid"), fld.rho)
    gridio.write_grid(os.path.join(path, "theta0.grid"), fld.theta0)
    for k in range(3):
        gridio.write_grid(os.path.join(path, f"v{k + 1}.grid"), fld.v[k])
    gridio.write_grid(os.path.join(path, "fluid_mask.grid"), fld.fluid_mask)
    with open(os.path.join(path, "field.json"), "w") as fh:
        json.dump({"venc": fld.venc}, fh)


def load_field_dir(path) -> FlowField:
    with open(os.path.join(path, "field.json")) as fh:
        meta = json.load(fh)
    v = np.stack([gridio.read_grid(os.path.join(path, f"v{k + 1}.grid")) for k in range(3)])
    return FlowField(
        rho=gridio.read_grid(os.path.join(path, "rho.grid")),
        theta0=gridio.read_grid(os.path.join(path, "theta0.grid")),
        v=v,
        venc=float(meta["venc"]),
        fluid_mask=gridio.read_grid(os.path.join(path, "fluid_mask.grid")),
    )


def mask_for(config: ExperimentConfig, realization, image_k) -> SamplingMask:
    """The sampling mask a given (realization, image) uses; deterministic."""
    if config.undersampling <= 0:
        return full_mask((config.size, config.size))
    if config.mask_fixed:
        seed = derive_seed(config.master_seed, _NS_MASK)
    elif config.mask_per_image:
        seed = derive_seed(config.master_seed, _NS_MASK, realization, image_k)
    else:
        seed = derive_seed(config.master_seed, _NS_MASK, realization)
    shape = (config.size, config.size)
    return make_mask(config.mask_pattern, shape, config.undersampling, seed)


def noise_seed(config: ExperimentConfig, realization, image_k) -> int:
    return derive_seed(config.master_seed, _NS_NOISE, realization, image_k)


def _recovery_config(config: ExperimentConfig, m, sigma) -> RecoveryConfig:
    eta = config.eta if config.eta >= 0 else residual_threshold(max(m, 1), config.delta, sigma)
    if sigma == 0 and config.eta < 0:
        eta = 0.0
    return RecoveryConfig(
        method=config.method, eta=eta,
        solver_tol=config.solver_tol, solver_maxiter=config.solver_maxiter,
    )


def _run_one(config: ExperimentConfig, true_kspace, sigma, realization):
    """One realization: four noisy acquisitions and reconstructions."""
    shape = true_kspace[0].shape
    images = np.empty((4,) + shape, dtype=complex)
    converged = np.empty(4, dtype=bool)
    basis = WaveletBasis(config.wavelet, config.levels)
    masks_used = []
    for k in range(4):
        mask = mask_for(config, realization, k)
        masks_used.append(mask)
        noisy = add_noise(KSpaceData(true_kspace[k]), NoiseSpec(sigma, noise_seed(config, realization, k)))
        meas = sample(noisy, mask)
        rcfg = _recovery_config(config, mask.m, sigma)
        if config.method == "l2":
            rec = reconstruct(meas, "l2")
        else:
            op = MeasurementOperator(mask, basis)
            rec = reconstruct(meas, config.method, op, rcfg)
        images[k] = rec.image
        converged[k] = rec.converged
    return images, converged, masks_used[0]


@dataclass
class EnsembleResult:
    config: ExperimentConfig
    field: FlowField
    images: np.ndarray  # (N, 4, nx, ny) complex reconstructions
    converged: np.ndarray  # (N, 4) bool
    masks: list  # one SamplingMask if fixed, else one per realization
    sigma: float
    noise_seeds: np.ndarray = None  # (N, 4) uint64, echo of the derived seeds
    wall_seconds: float = 0.0
    _flows: tuple = field(default=None, repr=False)

    @property
    def realizations(self):
        return self.images.shape[0]

    def flow_stacks(self):
        """(rho_stack (N,nx,ny), v_stack (N,3,nx,ny)) via the inverse map."""
        if self._flows is None:
            n = self.realizations
            rho = np.empty((n,) + self.field.shape)
            v = np.empty((n, 3) + self.field.shape)
            for i in range(n):
                g = inverse_4dflow(ComplexImageSet(self.images[i]), self.config.venc)
                rho[i] = g.rho
                v[i] = g.v
            self._flows = (rho, v)
        return self._flows

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            fh.write(self.config.to_json())
        save_field_dir(os.path.join(out_dir, "field"), self.field)
        for j, mask in enumerate(self.masks):
            gridio.write_grid(os.path.join(out_dir, f"mask_{j:04d}.grid"), mask.omega)
        with open(os.path.join(out_dir, "run.json"), "w") as fh:
            json.dump({"sigma": self.sigma, "wall_seconds": self.wall_seconds,
                       "converged": self.converged.tolist(),
                       "noise_seeds": self.noise_seeds.tolist()
                       if self.noise_seeds is not None else None}, fh)
        for i in range(self.realizations):
            for k in range(4):
                path = os.path.join(out_dir, f"recon_{i:04d}_{k}.grid")
                tmp = path + ".tmp"
                gridio.write_grid(tmp, self.images[i, k])
                os.replace(tmp, path)

    @classmethod
    def load(cls, run_dir):
        with open(os.path.join(run_dir, "config.json")) as fh:
            config = ExperimentConfig.from_json(fh.read())
        fld = load_field_dir(os.path.join(run_dir, "field"))
        with open(os.path.join(run_dir, "run.json")) as fh:
            meta = json.load(fh)
        masks = []
        j = 0
        while os.path.exists(os.path.join(run_dir, f"mask_{j:04d}.grid")):
            omega = gridio.read_grid(os.path.join(run_dir, f"mask_{j:04d}.grid"))
            masks.append(SamplingMask(omega, config.mask_pattern, config.undersampling))
            j += 1
        images = []
        i = 0
        while os.path.exists(os.path.join(run_dir, f"recon_{i:04d}_0.grid")):
            images.append(np.stack([
                gridio.read_grid(os.path.join(run_dir, f"recon_{i:04d}_{k}.grid"))
                for k in range(4)
            ]))
            i += 1
        if not images:
            raise FileNotFoundError(f"no reconstructions found in {run_dir}")
        seeds = meta.get("noise_seeds")
        return cls(config=config, field=fld, images=np.stack(images),
                   converged=np.asarray(meta["converged"], dtype=bool)[: len(images)],
                   masks=masks, sigma=meta["sigma"],
                   noise_seeds=np.asarray(seeds, dtype=np.uint64)[: len(images)]
                   if seeds is not None else None,
                   wall_seconds=meta.get("wall_seconds", 0.0))


def run_ensemble(config: ExperimentConfig, fld: FlowField = None,
                 out_dir=None, progress=None) -> EnsembleResult:
    """Run the configured ensemble; deterministic given the config."""
    t0 = time.time()
    fld = fld if fld is not None else load_field(config)
    config.size = fld.shape[0]
    truth = forward_4dflow(fld)
    true_kspace = np.stack([fft_unitary(truth.x[k]).values for k in range(4)])
    if config.sigma >= 0:
        sigma = config.sigma
    elif config.noise_percent > 0:
        sigma = sigma_from_percent(truth.x, config.noise_percent)
    else:
        sigma = 0.0

    n = config.realizations
    images = np.empty((n, 4) + fld.shape, dtype=complex)
    converged = np.empty((n, 4), dtype=bool)
    masks_seen = []

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_one, config, true_kspace, sigma, i) for i in range(n)]
            for i, fut in enumerate(futures):
                images[i], converged[i], mask0 = fut.result()
                masks_seen.append(mask0)
                if progress:
                    progress(i)
    else:
        for i in range(n):
            images[i], converged[i], mask0 = _run_one(config, true_kspace, sigma, i)
            masks_seen.append(mask0)
            if progress:
                progress(i)

    if not converged.all(axis=1).any():
        raise RuntimeError("every realization carries a solver failure flag")
    masks = [masks_seen[0]] if config.mask_fixed else masks_seen
    seeds = np.array([[noise_seed(config, i, k) for k in range(4)] for i in range(n)],
                     dtype=np.uint64)
    result = EnsembleResult(config=config, field=fld, images=images, converged=converged,
                            masks=masks, sigma=sigma, noise_seeds=seeds,
                            wall_seconds=time.time() - t0)
    if out_dir:
        result.save(out_dir)
    return result


def average_reconstruction(result: EnsembleResult):
    """Elementwise average of the complex images, and the flow field obtained
    by applying the inverse encoding map to that average."""
    mean_images = result.images.mean(axis=0)
    avg_set = ComplexImageSet(mean_images)
    return inverse_4dflow(avg_set, result.config.venc), avg_set
