"""Command-line front end.

Subcommands: make-data, make-mask, reconstruct, ensemble, analyze, plot.
Exit codes: 0 success, 2 usage or input error, 3 solver non-convergence
present in the outputs. Every command is deterministic given its flags.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import gridio
from .analysis import (
    correlation_vs_distance,
    kernel_k_mu_x,
    kernel_k_omega,
    mse_metrics,
    percent_error,
)
from .ensemble import (
    EnsembleResult,
    ExperimentConfig,
    average_reconstruction,
    load_field_dir,
    noise_seed,
    run_ensemble,
    save_field_dir,
    _recovery_config,
)
from .flow_model import forward_4dflow, inverse_4dflow, ComplexImageSet, make_poiseuille
from .kspace import NoiseSpec, add_noise, fft_unitary, sample, sigma_from_percent
from .masks import SamplingMask, make_density, make_mask
from .solvers import METHODS, reconstruct
from .transforms import MeasurementOperator, WaveletBasis

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _fail(msg, code=EXIT_USAGE):
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_make_data(args):
    shape = (args.size, args.size)
    radius = args.radius or args.size // 2 - 8
    if args.case == "poiseuille-ortho":
        fld = make_poiseuille(shape, "orthogonal", radius, args.vmax, args.venc)
    elif args.case == "poiseuille-long":
        fld = make_poiseuille(shape, "longitudinal", radius, args.vmax, args.venc)
    else:
        from .flow_model import make_aorta_like

        fld = make_aorta_like(shape, args.vmax, args.venc)
    save_field_dir(args.out, fld)
    print(f"wrote flow field ({args.case}, {args.size}x{args.size}) to {args.out}")
    return EXIT_OK


def cmd_make_mask(args):
    mask = make_mask(args.pattern, (args.size, args.size), args.ratio, args.seed)
    gridio.write_grid(args.out, mask.omega)
    if args.pattern not in ("halton",):
        density = make_density(args.pattern, (args.size, args.size), args.ratio)
        gridio.write_grid(args.out + ".density", density.mu)
    print(f"wrote {args.pattern} mask: kept {mask.m}/{mask.omega.size} "
          f"({100 * mask.kept_fraction:.1f}% of frequencies)")
    return EXIT_OK


def cmd_reconstruct(args):
    fld = load_field_dir(args.data)
    omega = gridio.read_grid(args.mask)
    mask = SamplingMask(omega)
    truth = forward_4dflow(fld)
    if mask.omega.shape != fld.shape:
        return _fail(f"mask shape {mask.omega.shape} != field shape {fld.shape}")
    sigma = sigma_from_percent(truth.x, args.noise_pct) if args.noise_pct > 0 else 0.0
    config = ExperimentConfig(method=args.method, wavelet=args.wavelet, levels=args.levels,
                              master_seed=args.seed, venc=fld.venc,
                              solver_tol=args.solver_tol, solver_maxiter=args.solver_maxiter)
    rcfg = _recovery_config(config, mask.m, sigma)
    basis = WaveletBasis(args.wavelet, args.levels)
    images = np.empty((4,) + fld.shape, dtype=complex)
    flagged = False
    for k in range(4):
        noisy = add_noise(fft_unitary(truth.x[k]), NoiseSpec(sigma, noise_seed(config, 0, k)))
        meas = sample(noisy, mask)
        op = None if args.method == "l2" else MeasurementOperator(mask, basis)
        rec = reconstruct(meas, args.method, op, rcfg)
        flagged = flagged or not rec.converged
        images[k] = rec.image
    os.makedirs(args.out, exist_ok=True)
    for k in range(4):
        gridio.write_grid(os.path.join(args.out, f"recon_0000_{k}.grid"), images[k])
    recon_field = inverse_4dflow(ComplexImageSet(images), fld.venc)
    pe = percent_error(recon_field.v[2], fld.v[2], fld.fluid_mask) \
        if np.abs(fld.v[2][fld.fluid_mask]).max() > 0 else \
        percent_error(recon_field.rho, fld.rho, fld.fluid_mask)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"method": args.method, "sigma": sigma, "percent_error": pe,
                   "flagged": flagged}, fh, indent=2)
    print(f"reconstruction done: PE = {pe:.3f}%" + (" [solver flagged]" if flagged else ""))
    return EXIT_SOLVER if flagged else EXIT_OK


def _progress(i):
    print(f"realization {i} done", file=sys.stderr)


def cmd_ensemble(args):
    with open(args.config) as fh:
        config = ExperimentConfig.from_json(fh.read())
    if args.out:
        out_dir = args.out
    else:
        out_dir = os.path.splitext(args.config)[0] + ".run"
    result = run_ensemble(config, out_dir=out_dir, progress=_progress)
    write_metrics_csv(result, os.path.join(out_dir, "metrics.csv"))
    n_flag = int((~result.converged).sum())
    print(f"ensemble complete: {result.realizations} realizations -> {out_dir}"
          + (f" [{n_flag} solver flags]" if n_flag else ""))
    return EXIT_SOLVER if n_flag else EXIT_OK


def write_metrics_csv(result: EnsembleResult, path):
    """One row per (realization, image index, metric, reference).

    Image rows (quantity x) use metrics mse_mag/mse_ang/mse_cplx/pe on the
    complex images; flow rows (quantity flow, k=0 density, k=1..3 velocity
    components) use vel_mse/vel_pe restricted to the fluid mask.
    """
    fld = result.field
    truth = forward_4dflow(fld)
    avg_field, avg_images = average_reconstruction(result)
    rho_stack, v_stack = result.flow_stacks()
    run_id = os.path.basename(os.path.normpath(path and os.path.dirname(path) or "run"))
    mask = fld.fluid_mask
    rows = []
    for i in range(result.realizations):
        for k in range(4):
            for ref_name, ref in (("true", truth.x[k]), ("average", avg_images.x[k])):
                mm = mse_metrics(result.images[i, k], ref, mask)
                for metric, value in mm.items():
                    rows.append((run_id, i, k, metric, ref_name, value))
                rows.append((run_id, i, k, "pe", ref_name,
                             percent_error(result.images[i, k], ref, mask)))
        flows_true = [fld.rho] + [fld.v[j] for j in range(3)]
        flows_avg = [avg_field.rho] + [avg_field.v[j] for j in range(3)]
        flows_rec = [rho_stack[i]] + [v_stack[i, j] for j in range(3)]
        for k in range(4):
            for ref_name, ref in (("true", flows_true[k]), ("average", flows_avg[k])):
                usable = mask & (np.abs(ref) > 0)
                if not usable.any():
                    continue
                mse = float(np.sum(np.abs(flows_rec[k] - ref)[usable] ** 2)
                            / np.sum(np.abs(ref[usable]) ** 2))
                rows.append((run_id, i, k, "vel_mse", ref_name, mse))
                rows.append((run_id, i, k, "vel_pe", ref_name,
                             percent_error(flows_rec[k], ref, usable)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "realization", "k", "metric", "reference", "value"])
        writer.writerows(rows)


def write_correlations_csv(result: EnsembleResult, path, distances=(1, 2, 3, 4, 5, 6),
                           pair_count=50, seed=0):
    _, v_stack = result.flow_stacks()
    rows = []
    for k in range(3):
        curve = correlation_vs_distance(v_stack[:, k], result.field.fluid_mask,
                                        distances, pair_count, seed=seed + k)
        for d, samples in zip(curve.distances, curve.samples):
            for j, r in enumerate(samples):
                rows.append((int(d), j, k + 1, r))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance", "pair_index", "k", "r"])
        writer.writerows(rows)


def cmd_analyze(args):
    try:
        result = EnsembleResult.load(args.run)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    write_metrics_csv(result, os.path.join(args.run, "metrics.csv"))
    made = ["metrics.csv"]
    if args.correlations:
        write_correlations_csv(result, os.path.join(args.run, "correlations.csv"),
                               pair_count=args.pairs)
        made.append("correlations.csv")
    if args.kernels:
        mask = result.masks[0]
        gridio.write_grid(os.path.join(args.run, "k_omega.grid"),
                          np.fft.fftshift(kernel_k_omega(mask)))
        if result.config.mask_pattern != "halton":
            density = make_density(result.config.mask_pattern, mask.omega.shape,
                                   result.config.undersampling)
            truth = forward_4dflow(result.field)
            kmux, kmu = kernel_k_mu_x(density, truth.x[0])
            gridio.write_grid(os.path.join(args.run, "k_mu.grid"), np.fft.fftshift(kmu))
            gridio.write_grid(os.path.join(args.run, "k_mu_x.grid"), np.fft.fftshift(kmux))
            made += ["k_omega.grid", "k_mu.grid", "k_mu_x.grid"]
        else:
            made.append("k_omega.grid")
    print(f"analyze: wrote {', '.join(made)} in {args.run}")
    return EXIT_OK


def cmd_plot(args):
    if not os.path.isdir(args.run):
        return _fail(f"run directory not found: {args.run}")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    result = EnsembleResult.load(args.run)
    truth = forward_4dflow(result.field)
    if args.what == "recon":
        avg_field, avg_images = average_reconstruction(result)
        fig, axes = plt.subplots(2, 3, figsize=(9, 6))
        panels = [
            ("true |x0|", np.abs(truth.x[0])), ("recon |x0|", np.abs(result.images[0, 0])),
            ("average |x0|", np.abs(avg_images.x[0])),
            ("true v3", result.field.v[2]), ("recon v3",
             inverse_4dflow(ComplexImageSet(result.images[0]), result.config.venc).v[2]),
            ("average v3", avg_field.v[2]),
        ]
        for ax, (title, img) in zip(axes.ravel(), panels):
            ax.imshow(np.real(img), cmap="viridis")
            ax.set_title(title, fontsize=8)
            ax.axis("off")
    elif args.what == "error":
        from .analysis import artifact_map

        avg_field, _ = average_reconstruction(result)
        rho_stack, v_stack = result.flow_stacks()
        fig, axes = plt.subplots(1, 2, figsize=(8, 4))
        axes[0].imshow(artifact_map(v_stack[0, 2], result.field.v[2]),
                       cmap="coolwarm", vmin=-2, vmax=2)
        axes[0].set_title("v3 artifact vs true", fontsize=8)
        axes[1].imshow(artifact_map(v_stack[0, 2], avg_field.v[2]),
                       cmap="coolwarm", vmin=-2, vmax=2)
        axes[1].set_title("v3 artifact vs average", fontsize=8)
        for ax in axes:
            ax.axis("off")
    elif args.what == "corr":
        csv_path = os.path.join(args.run, "correlations.csv")
        if not os.path.exists(csv_path):
            write_correlations_csv(result, csv_path)
        data = np.genfromtxt(csv_path, delimiter=",", names=True)
        fig, ax = plt.subplots(figsize=(5, 4))
        for k in (1, 2, 3):
            sel = data["k"] == k
            ax.scatter(data["distance"][sel], data["r"][sel], s=4, alpha=0.3, label=f"v{k}")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_xlabel("distance [pixels]")
        ax.set_ylabel("Pearson r")
        ax.legend()
    elif args.what == "kernels":
        mask = result.masks[0]
        fig, axes = plt.subplots(1, 2, figsize=(8, 4))
        axes[0].imshow(mask.omega, cmap="gray")
        axes[0].set_title("sampling set (white = kept)", fontsize=8)
        axes[1].imshow(np.log10(np.abs(np.fft.fftshift(kernel_k_omega(mask))) + 1e-12))
        axes[1].set_title("log10 |K| displacement kernel", fontsize=8)
        for ax in axes:
            ax.axis("off")
    else:
        return _fail(f"unknown plot kind {args.what!r}")
    fig.tight_layout()
    fig.savefig(args.out, dpi=130)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mrnlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("make-data", help="generate a synthetic flow field")
    d.add_argument("--case", required=True,
                   choices=["poiseuille-ortho", "poiseuille-long", "aorta-like"])
    d.add_argument("--size", type=int, default=64)
    d.add_argument("--venc", type=float, default=1.0)
    d.add_argument("--vmax", type=float, default=0.6)
    d.add_argument("--radius", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_make_data)

    m = sub.add_parser("make-mask", help="generate a sampling mask")
    m.add_argument("--pattern", required=True,
                   choices=["bernoulli", "gaussian", "triangular", "exponential", "halton"])
    m.add_argument("--ratio", type=float, required=True)
    m.add_argument("--size", type=int, default=64)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_make_mask)

    r = sub.add_parser("reconstruct", help="single four-image reconstruction")
    r.add_argument("--data", required=True)
    r.add_argument("--mask", required=True)
    r.add_argument("--method", required=True, choices=list(METHODS))
    r.add_argument("--wavelet", default="haar", choices=["haar", "db4", "db8"])
    r.add_argument("--levels", type=int, default=4)
    r.add_argument("--noise-pct", type=float, default=10.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--solver-tol", type=float, default=1e-5)
    r.add_argument("--solver-maxiter", type=int, default=4000)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("ensemble", help="run a Monte Carlo ensemble from a config file")
    e.add_argument("--config", required=True)
    e.add_argument("--out", default="")
    e.set_defaults(func=cmd_ensemble)

    a = sub.add_parser("analyze", help="emit metrics/correlations/kernels for a run")
    a.add_argument("--run", required=True)
    a.add_argument("--correlations", action="store_true")
    a.add_argument("--kernels", action="store_true")
    a.add_argument("--pairs", type=int, default=50)
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("plot", help="render run panels to a raster image")
    g.add_argument("--run", required=True)
    g.add_argument("--what", required=True, choices=["recon", "error", "corr", "kernels"])
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
