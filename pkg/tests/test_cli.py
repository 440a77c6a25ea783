import csv
import json
import os

import numpy as np
import pytest

from mrnlab.cli import main
from mrnlab.gridio import read_grid


def run_cli(*argv):
    return main(list(argv))


def write_config(path, **overrides):
    cfg = dict(case="poiseuille-ortho", size=32, realizations=2, method="l2",
               noise_percent=10.0, undersampling=0.5, mask_pattern="bernoulli",
               master_seed=7)
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


class TestMakeData:
    def test_writes_field_files(self, tmp_path):
        out = tmp_path / "field"
        code = run_cli("make-data", "--case", "poiseuille-ortho", "--size", "64",
                       "--venc", "1.0", "--vmax", "0.6", "--out", str(out))
        assert code == 0
        names = sorted(os.listdir(out))
        assert names == ["field.json", "fluid_mask.grid", "rho.grid", "theta0.grid",
                         "v1.grid", "v2.grid", "v3.grid"]
        assert read_grid(out / "rho.grid").shape == (64, 64)

    def test_encoding_violation_exits_2(self, tmp_path, capsys):
        code = run_cli("make-data", "--case", "poiseuille-ortho", "--size", "32",
                       "--venc", "1.0", "--vmax", "1.0", "--out", str(tmp_path / "f"))
        assert code == 2
        assert "venc" in capsys.readouterr().err

    def test_deterministic_regeneration(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_cli("make-data", "--case", "poiseuille-long", "--size", "32",
                    "--out", str(out))
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestMakeMask:
    def test_kept_fraction(self, tmp_path):
        out = tmp_path / "m.grid"
        assert run_cli("make-mask", "--pattern", "bernoulli", "--ratio", "0.75",
                       "--size", "64", "--seed", "9", "--out", str(out)) == 0
        omega = read_grid(out)
        bound = 3 * np.sqrt(0.25 * 0.75 / 4096)
        assert abs(omega.mean() - 0.25) <= bound

    def test_density_sidecar_saturates_at_dc(self, tmp_path):
        out = tmp_path / "g.grid"
        run_cli("make-mask", "--pattern", "gaussian", "--ratio", "0.95",
                "--size", "64", "--seed", "1", "--out", str(out))
        mu = read_grid(str(out) + ".density")
        assert mu[32, 32] == pytest.approx(1.0)

    def test_same_flags_identical_file(self, tmp_path):
        a, b = tmp_path / "a.grid", tmp_path / "b.grid"
        for out in (a, b):
            run_cli("make-mask", "--pattern", "gaussian", "--ratio", "0.5",
                    "--size", "32", "--seed", "4", "--out", str(out))
        assert a.read_bytes() == b.read_bytes()


class TestReconstruct:
    def test_full_mask_noiseless_l2(self, tmp_path, capsys):
        field = tmp_path / "field"
        run_cli("make-data", "--case", "poiseuille-ortho", "--size", "32",
                "--out", str(field))
        mask = tmp_path / "full.grid"
        from mrnlab.gridio import write_grid

        write_grid(mask, np.ones((32, 32), dtype=bool))
        out = tmp_path / "rec"
        code = run_cli("reconstruct", "--data", str(field), "--mask", str(mask),
                       "--method", "l2", "--noise-pct", "0", "--out", str(out))
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["percent_error"] == pytest.approx(0.0, abs=1e-9)

    def test_unknown_method_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run_cli("reconstruct", "--data", "x", "--mask", "y",
                    "--method", "magic", "--out", "z")
        assert err.value.code == 2

    def test_cs_run_emits_outputs(self, tmp_path):
        field = tmp_path / "field"
        run_cli("make-data", "--case", "poiseuille-ortho", "--size", "32",
                "--out", str(field))
        mask = tmp_path / "m.grid"
        run_cli("make-mask", "--pattern", "gaussian", "--ratio", "0.75",
                "--size", "32", "--seed", "2", "--out", str(mask))
        out = tmp_path / "rec"
        code = run_cli("reconstruct", "--data", str(field), "--mask", str(mask),
                       "--method", "cs", "--noise-pct", "10", "--out", str(out))
        assert code == 0
        assert sorted(os.listdir(out)) == ["recon_0000_0.grid", "recon_0000_1.grid",
                                           "recon_0000_2.grid", "recon_0000_3.grid",
                                           "summary.json"]


class TestEnsembleCmd:
    def test_run_and_rerun_identical_metrics(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", realizations=4)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run_cli("ensemble", "--config", str(cfg), "--out", str(out1)) == 0
        assert run_cli("ensemble", "--config", str(cfg), "--out", str(out2)) == 0
        with open(out1 / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {int(r["realization"]) for r in rows} == {0, 1, 2, 3}
        assert {r["metric"] for r in rows} >= {"mse_mag", "mse_ang", "mse_cplx", "pe",
                                               "vel_mse", "vel_pe"}
        strip = lambda text: [line.split(",", 1)[1] for line in text.splitlines()[1:]]
        assert strip((out1 / "metrics.csv").read_text()) == strip((out2 / "metrics.csv").read_text())

    def test_progress_lines(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", realizations=2)
        run_cli("ensemble", "--config", str(cfg), "--out", str(tmp_path / "run"))
        err = capsys.readouterr().err
        assert err.count("realization") == 2

    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"warp_factor": 9}')
        assert run_cli("ensemble", "--config", str(bad)) == 2


class TestAnalyzeCmd:
    def test_identical_realizations_correlate_fully(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", realizations=2, noise_percent=0.0)
        out = tmp_path / "run"
        run_cli("ensemble", "--config", str(cfg), "--out", str(out))
        assert run_cli("analyze", "--run", str(out), "--correlations") == 0
        with open(out / "correlations.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert all(float(r["r"]) == pytest.approx(1.0) for r in rows)

    def test_kernel_grid_center_is_one(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        out = tmp_path / "run"
        run_cli("ensemble", "--config", str(cfg), "--out", str(out))
        assert run_cli("analyze", "--run", str(out), "--kernels") == 0
        k = read_grid(out / "k_omega.grid")
        assert k[16, 16] == pytest.approx(1.0)

    def test_missing_run_dir(self, tmp_path):
        assert run_cli("analyze", "--run", str(tmp_path / "nope")) == 2


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("plots")
    cfg = write_config(tmp / "cfg.json")
    out = tmp / "run"
    run_cli("ensemble", "--config", str(cfg), "--out", str(out))
    return out


class TestPlotCmd:
    @pytest.mark.parametrize("what", ["recon", "error", "corr", "kernels"])
    def test_plot_kinds(self, run_dir, tmp_path, what):
        out = tmp_path / f"{what}.png"
        assert run_cli("plot", "--run", str(run_dir), "--what", what,
                       "--out", str(out)) == 0
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_missing_run_exits_2(self, tmp_path):
        assert run_cli("plot", "--run", str(tmp_path / "gone"), "--what", "corr",
                       "--out", str(tmp_path / "x.png")) == 2


class TestExitCodes:
    def test_solver_flag_exit_3(self, tmp_path):
        field = tmp_path / "field"
        run_cli("make-data", "--case", "poiseuille-ortho", "--size", "32",
                "--out", str(field))
        mask = tmp_path / "m.grid"
        run_cli("make-mask", "--pattern", "gaussian", "--ratio", "0.75",
                "--size", "32", "--seed", "2", "--out", str(mask))
        code = run_cli("reconstruct", "--data", str(field), "--mask", str(mask),
                       "--method", "cs", "--noise-pct", "10", "--solver-maxiter", "2",
                       "--solver-tol", "1e-14", "--out", str(tmp_path / "rec"))
        assert code == 3
        summary = json.loads((tmp_path / "rec" / "summary.json").read_text())
        assert summary["flagged"] is True
