"""Command-line interface: exit codes, config handling, file outputs."""

import os

import numpy as np
import pytest

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from fastl21.cli import main, load_config, dump_config, UsageError


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2


def test_unknown_nested_action(capsys):
    assert main(["soe", "destroy"]) == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "soe" in capsys.readouterr().out


class TestConfig:

    def test_round_trip(self, tmp_path):
        text = ('alpha = 0.3\nn = 200\nbackend = "cheb"\n'
                'r_list = [2.0, 4.0]\nout = "results"\n')
        path = tmp_path / "cfg.toml"
        path.write_text(text)
        cfg = load_config(path)
        assert tomllib.loads(dump_config(cfg)) == tomllib.loads(text)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("alpha = 0.3\nwavelength = 5\n")
        with pytest.raises(UsageError, match="wavelength"):
            load_config(path)

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        path = tmp_path / "cfg.toml"
        path.write_text("frequency = 2\n")
        assert main(["mesh", "make", "--config", str(path)]) == 2
        assert "frequency" in capsys.readouterr().err

    def test_malformed_toml_exit_code(self, tmp_path, capsys):
        path = tmp_path / "cfg.toml"
        path.write_text("alpha = = 0.3\n")
        assert main(["mesh", "make", "--config", str(path)]) == 2

    def test_missing_file_exit_code(self, capsys):
        assert main(["mesh", "make", "--config", "/nonexistent.toml"]) == 2

    def test_flag_overrides_config(self, tmp_path, capsys):
        path = tmp_path / "cfg.toml"
        path.write_text('alpha = 0.3\nkind = "graded"\nn = 10\nr = 2.0\n'
                        'out = "%s"\n' % tmp_path)
        assert main(["mesh", "make", "--config", str(path),
                     "--n", "20"]) == 0
        out = capsys.readouterr().out
        assert "steps=20" in out

    def test_study_selector_conflict(self, tmp_path, capsys):
        path = tmp_path / "cfg.toml"
        path.write_text('study = "timing"\n')
        assert main(["study", "convergence", "--config", str(path)]) == 2


class TestSoeCommands:

    def test_build_writes_artifact(self, tmp_path, capsys):
        assert main(["soe", "build", "--alpha", "0.5", "--eps", "1e-8",
                     "--dt-cut", "1e-4", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "nq=" in out
        files = os.listdir(tmp_path)
        assert any(f.startswith("soe_") for f in files)

    def test_certify_round_trip(self, tmp_path, capsys):
        assert main(["soe", "build", "--alpha", "0.5", "--eps", "1e-8",
                     "--dt-cut", "1e-4", "--out", str(tmp_path)]) == 0
        artifact = os.path.join(
            tmp_path, [f for f in os.listdir(tmp_path)
                       if f.startswith("soe_")][0])
        capsys.readouterr()
        assert main(["soe", "certify", "--in", artifact]) == 0
        assert "passed=True" in capsys.readouterr().out


class TestMeshAndPsd:

    def test_mesh_check_passes_on_table_setup(self, capsys):
        assert main(["mesh", "check", "--alpha", "0.5", "--n", "100",
                     "--r", "4"]) == 0
        assert "passed=True" in capsys.readouterr().out

    def test_psd_verify_prints_certificate(self, capsys):
        assert main(["psd", "verify", "--alpha", "0.3", "--n", "80",
                     "--n-mat", "48"]) == 0
        out = capsys.readouterr().out
        assert "kind=psd-certificate" in out
        assert "passed=True" in out


class TestRunAndStudy:

    def test_run_linear_writes_series(self, tmp_path, capsys):
        assert main(["run", "linear", "--alpha", "0.5", "--n", "30",
                     "--r", "4", "--n-space", "9",
                     "--out", str(tmp_path)]) == 0
        series = tmp_path / "series_linear_alpha0.5.csv"
        assert series.exists()
        header = series.read_text().splitlines()[0]
        assert header.startswith("k,t,l2,h1semi,energy")

    def test_run_semilinear_problem_choice(self, tmp_path, capsys):
        assert main(["run", "semilinear", "--problem", "poly",
                     "--alpha", "0.5", "--n", "25", "--r", "4",
                     "--n-space", "9", "--out", str(tmp_path)]) == 0
        assert main(["run", "semilinear", "--problem", "mystery",
                     "--alpha", "0.5", "--out", str(tmp_path)]) == 2

    def test_standard_operator_flag(self, tmp_path):
        assert main(["run", "linear", "--operator", "standard",
                     "--alpha", "0.5", "--n", "20", "--r", "4",
                     "--n-space", "9", "--out", str(tmp_path)]) == 0

    def test_study_convergence_writes_table_and_report(self, tmp_path,
                                                       capsys):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('alpha = 0.5\nr_list = [4.0]\nn_list = [40, 80]\n'
                       'n_space = 9\nout = "%s"\n' % tmp_path)
        assert main(["study", "convergence", "--config", str(cfg)]) == 0
        table = tmp_path / "convergence_alpha0.5.csv"
        report = tmp_path / "report.txt"
        assert table.exists() and report.exists()
        lines = table.read_text().splitlines()
        assert lines[0] == "alpha,r,n,err_l2,order_l2,err_h1,order_h1"
        assert len(lines) == 3
        assert "overall: pass" in report.read_text()

    def test_study_longtime_exit_and_files(self, tmp_path, capsys):
        assert main(["study", "longtime", "--source", "f2",
                     "--horizon", "60", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "longtime_f2.csv").exists()
        assert "bounded" in capsys.readouterr().out

    def test_study_energy_files(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('problem = "sine"\nalpha_list = [0.5]\n'
                       'horizon = 10.0\nout = "%s"\n' % tmp_path)
        assert main(["study", "energy", "--config", str(cfg)]) == 0
        assert (tmp_path / "energy_sine_alpha0.5.csv").exists()

    def test_failing_study_exits_one(self, tmp_path):
        # two-point timing sweep at toy sizes cannot meet the slope
        # thresholds; exit code must reflect the failed check
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('n_list = [60, 120]\nout = "%s"\n' % tmp_path)
        code = main(["study", "timing", "--config", str(cfg)])
        assert code == 1
        assert "overall: FAIL" in (tmp_path / "report.txt").read_text()
