import numpy as np
import pytest

from helmdg import cli


def run_cli(args):
    return cli.main(list(args))


class TestMeshCommand:
    def test_counts_mode_reference_values(self, capsys):
        code = run_cli(["mesh", "--counts", "614", "953", "--p", "3"])
        out = capsys.readouterr().out
        assert code == 0
        assert "dof_dg=18420" in out
        assert "dof_hdg=3812" in out
        assert "dof_chdg=7368" in out

    def test_unit_square_counts(self, capsys):
        code = run_cli(["mesh", "--n", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "N_tri=2 N_fce=5 N_fce_bnd=4 N_fce_int=1" in out
        assert "3*N_tri = N_fce_bnd + 2*N_fce_int: 6 = 4 + 2*1" in out

    def test_write_and_read_back(self, tmp_path, capsys):
        path = tmp_path / "m.msh"
        assert run_cli(["mesh", "--n", "3", "--out", str(path)]) == 0
        capsys.readouterr()
        assert run_cli(["mesh", "--mesh-file", str(path)]) == 0
        out = capsys.readouterr().out
        assert "N_tri=18" in out

    def test_missing_geometry_is_usage_error(self, capsys):
        assert run_cli(["mesh"]) == 1

    def test_invalid_geometry(self, capsys):
        assert run_cli(["mesh", "--n", "0"]) == 1


class TestRunCommand:
    def test_smoke_richardson(self, tmp_path, capsys):
        code = run_cli([
            "run", "--benchmark", "plane_wave", "--method", "chdg", "--solver", "richardson",
            "--kappa", "6.2832", "--h", "0.3", "--p", "1", "--max-iter", "60",
            "--out", str(tmp_path),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "relative_error=" in out
        csv = tmp_path / "plane_wave_chdg_richardson.csv"
        assert csv.exists()
        lines = csv.read_text().splitlines()
        assert lines[0] == "iteration;residual;relative_error"
        assert len(lines) > 2

    def test_richardson_requires_chdg(self, capsys):
        code = run_cli([
            "run", "--method", "hdg", "--solver", "richardson",
            "--kappa", "6.0", "--h", "0.4", "--p", "1",
        ])
        err = capsys.readouterr().err
        assert code == 1
        assert "only supported with the chdg" in err

    def test_near_resonance_mode_parameters(self, tmp_path, capsys):
        code = run_cli([
            "run", "--benchmark", "cavity", "--kappa-mode", "near_resonance",
            "--method", "chdg", "--solver", "direct", "--p", "1", "--h", "0.2",
            "--out", str(tmp_path),
        ])
        out = capsys.readouterr().out
        assert code == 0
        # overridden h wins, near-resonance kappa = (7 + 1/100) sqrt(2) pi
        assert f"kappa={(7 + 1 / 100) * np.sqrt(2) * np.pi:.6g}" in out

    def test_byte_identical_to_module_call(self, tmp_path, capsys):
        from helmdg import bench

        args = [
            "run", "--benchmark", "plane_wave", "--method", "chdg", "--solver", "gmres",
            "--kappa", "6.2832", "--h", "0.3", "--p", "1", "--max-iter", "40",
        ]
        assert run_cli(args + ["--out", str(tmp_path / "a")]) == 0
        capsys.readouterr()
        case = bench.make_benchmark(
            "plane_wave", n=bench.subdivisions_for_target_h(0.3), kappa=6.2832, degree=1
        )
        ws = bench.prepare_workspace(case, methods=("chdg",))
        rec = bench.run_benchmark(ws, "chdg", "gmres", max_iter=40)
        rec.write_csv(tmp_path / "b.csv")
        a = (tmp_path / "a" / "plane_wave_chdg_gmres.csv").read_bytes()
        b = (tmp_path / "b.csv").read_bytes()
        assert a == b


class TestAnalyzeCommand:
    def test_small_analysis(self, tmp_path, capsys):
        code = run_cli([
            "analyze", "--benchmark", "plane_wave", "--kappa", "6.0", "--h", "0.35",
            "--p", "1", "--num-eigenvalues", "4", "--out", str(tmp_path),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "rho(PiS)=" in out
        spec = tmp_path / "plane_wave_spectrum.csv"
        cond = tmp_path / "plane_wave_conditioning.csv"
        assert spec.exists() and cond.exists()
        assert spec.read_text().splitlines()[0] == "re_lambda;im_lambda"
        rho = float(out.split("rho(PiS)=")[1].split()[0])
        assert rho < 1.0
        # p-sweep rows are monotone in p for the local conditioning
        rows = [line for line in cond.read_text().splitlines()[1:] if line.startswith("hdg")]
        values = [float(line.split(";")[1]) for line in rows]
        assert values == sorted(values)


class TestConfigFile:
    def test_flags_override_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("benchmark = plane_wave\nkappa = 6.2832\nh = 0.4\np = 2\nmax_iter = 10\n")
        code = run_cli([
            "--config", str(cfg), "run", "--method", "chdg", "--solver", "richardson",
            "--p", "1", "--out", str(tmp_path),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "p=1" in out  # flag wins over the file's p = 2

    def test_malformed_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("kappa 6.0\n")
        code = run_cli(["--config", str(cfg), "mesh", "--n", "2"])
        assert code == 1
        assert "expected key = value" in capsys.readouterr().err
