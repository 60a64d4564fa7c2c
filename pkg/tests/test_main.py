"""
Tests for the command-line entry point.
"""

from pathlib import Path

import pytest

from src.core.config import settings
from src.core.exceptions import ReportIOError
from src.main import EXIT_CHECK, EXIT_ERROR, EXIT_OK, build_parser, build_spec, load_bench_file, main, report_path
from src.schemas.bench import BenchKind
from src.services.reporting import parse_report


class TestConfigFile:
    def test_grammar(self, tmp_path):
        path = tmp_path / "bench.cfg"
        path.write_text("# lasso run\n\nseed = 11   # inline comment\ninstances=4\nschemes = alg7_obj, lit_g\n")
        assert load_bench_file(path) == {"seed": "11", "instances": "4", "schemes": "alg7_obj, lit_g"}

    def test_line_without_equals(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("seed 11\n")
        with pytest.raises(ValueError):
            load_bench_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ReportIOError):
            load_bench_file(tmp_path / "missing.cfg")


class TestBuildSpec:
    def test_flags_override_config_over_defaults(self, tmp_path):
        cfg = tmp_path / "qp.cfg"
        cfg.write_text("seed = 3\ninstances = 4\n")
        args = build_parser().parse_args(["restart-bench", "--bench", "random_qp", "--config", str(cfg), "--seed", "5"])
        spec = build_spec(args, BenchKind.LASSO)
        assert spec.kind == BenchKind.RANDOM_QP
        assert (spec.n_z, spec.alpha, spec.beta, spec.eps) == (200, 10.0, 20.0, 1e-5)
        assert spec.seed == 5
        assert spec.instances == 4

    def test_example_runs_the_plain_baseline_too(self):
        spec = build_spec(build_parser().parse_args(["example31"]), BenchKind.EXAMPLE31)
        assert spec.schemes == ["fista"] + list(settings.restart_schemes)

    def test_mpc_flags(self):
        args = build_parser().parse_args(
            ["mpc-bench", "--bench", "oscillating", "--formulation", "mpct", "--solver", "eadmm", "--rho-pair", "2,40", "--horizon", "6"]
        )
        spec = build_spec(args, BenchKind.MPC_SCENARIO)
        assert spec.bench == "oscillating"
        assert spec.rho_pair == (2.0, 40.0)
        assert spec.horizon == 6

    def test_hmpc_frequency_flag(self):
        spec = build_spec(build_parser().parse_args(["hmpc-bench", "--bench", "academic", "--w", "0.2"]), BenchKind.HMPC_SCENARIO)
        assert spec.base_frequency == 0.2
        assert spec.tolerance == settings.hmpc_tolerance


class TestMain:
    def test_example_writes_a_report(self, tmp_path):
        out = tmp_path / "ex.json"
        assert main(["example31", "--out", str(out), "--format", "json"]) == EXIT_OK
        assert len(parse_report(out).rows) == 1 + len(settings.restart_schemes)

    def test_check_failure_exit_code(self, monkeypatch):
        monkeypatch.setattr("src.main.acceptance_violations", lambda spec, report: ["alg7_obj: off"])
        assert main(["example31", "--check"]) == EXIT_CHECK

    def test_check_success_exit_code(self, monkeypatch):
        monkeypatch.setattr("src.main.acceptance_violations", lambda spec, report: [])
        assert main(["example31", "--check"]) == EXIT_OK

    def test_example_passes_its_own_check(self):
        assert main(["example31", "--check"]) == EXIT_OK

    def test_missing_config_is_an_error(self, tmp_path):
        assert main(["restart-bench", "--config", str(tmp_path / "none.cfg")]) == EXIT_ERROR

    def test_invalid_config_value_is_an_error(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("instances = 0\n")
        assert main(["restart-bench", "--config", str(cfg)]) == EXIT_ERROR

    def test_unknown_subcommand_exits_through_argparse(self):
        with pytest.raises(SystemExit):
            main(["train"])

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert settings.app_name in out and settings.app_version in out


class TestReportPath:
    def test_bare_name_goes_under_report_dir(self, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "report_dir", str(tmp_path / "reports"))
        assert main(["example31", "--out", "ex.csv"]) == EXIT_OK
        assert len(parse_report(tmp_path / "reports" / "ex.csv").rows) == 1 + len(settings.restart_schemes)

    def test_paths_with_a_directory_are_kept(self, tmp_path):
        assert report_path("sub/ex.csv") == Path("sub/ex.csv")
        assert report_path(str(tmp_path / "ex.json")) == tmp_path / "ex.json"
