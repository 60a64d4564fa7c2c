"""
Tests for the benchmark drivers and the acceptance checks.

Full-size reproductions are marked slow.
"""

import numpy as np
import pytest

from src.core.exceptions import ConfigurationError, InvalidInputError
from src.schemas.bench import BenchKind, BenchReport, BenchSpec, ReportRow
from src.schemas.control import MpcVariant
from src.services.bench import (
    EXAMPLE31_COUNTS,
    PLAIN_FISTA,
    acceptance_violations,
    bench_weights,
    hmpc_ball_plate_problem,
    run_hmpc_bench,
    run_mpc_bench,
    run_restart_bench,
)
from src.services.controllers import MpcSolver
from src.services.plants import bench_model, bench_reference
from src.services.reporting import build_report

ALL_SCHEMES = [PLAIN_FISTA, "alg7_obj", "alg8_grad", "alg10_general", "lit_f", "lit_g", "lit_fstar"]


def _example_report(counts) -> BenchReport:
    rows = [ReportRow(scheme=s, instance=0, iterations=k, restarts=j, residual=1e-7) for s, (k, j) in counts.items()]
    return build_report(rows)


# =============================================================================
# Restart benchmarks
# =============================================================================


class TestRestartBench:
    def test_two_dimensional_example(self):
        spec = BenchSpec(kind=BenchKind.EXAMPLE31, schemes=ALL_SCHEMES)
        report = run_restart_bench(spec)
        assert report.failures == []
        assert [r.scheme for r in report.rows] == ALL_SCHEMES
        assert report.extras["cond_H_mean"] == 2.0
        by_scheme = {r.scheme: r for r in report.rows}
        for scheme, (k_ref, j_ref) in EXAMPLE31_COUNTS.items():
            assert abs(by_scheme[scheme].iterations - k_ref) <= 2, scheme
            assert abs(by_scheme[scheme].restarts - j_ref) <= 1, scheme
        assert acceptance_violations(spec, report) == []
        assert by_scheme["alg7_obj"].iterations < by_scheme[PLAIN_FISTA].iterations

    def test_small_lasso_is_deterministic(self):
        spec = BenchSpec(kind=BenchKind.LASSO, rows=20, n_z=40, alpha=0.05, instances=3, eps=1e-6, seed=7,
                         schemes=["alg7_obj", "lit_fstar"])
        first, second = run_restart_bench(spec), run_restart_bench(spec)
        assert first.failures == []
        assert len(first.rows) == 6
        assert [r.iterations for r in first.rows] == [r.iterations for r in second.rows]
        assert "cond_H_mean" not in first.extras
        assert all(r.residual <= 1e-4 for r in first.rows)

    def test_small_random_qp(self):
        spec = BenchSpec(kind=BenchKind.RANDOM_QP, n_z=30, alpha=1.0, beta=2.0, instances=2, eps=1e-6,
                         schemes=[PLAIN_FISTA, "alg8_grad"])
        report = run_restart_bench(spec)
        assert len(report.rows) == 4
        assert report.extras["cond_H_mean"] > 1.0
        assert len(report.aggregates) == 8

    def test_rejects_closed_loop_kinds(self):
        with pytest.raises(InvalidInputError):
            run_restart_bench(BenchSpec(kind=BenchKind.MPC_SCENARIO))


# =============================================================================
# MPC benchmarks
# =============================================================================


class TestBenchWeights:
    def test_fista_gets_a_diagonal_terminal_weight(self):
        model = bench_model("oscillating")
        x_r, u_r = bench_reference("oscillating", model)
        w, ell = bench_weights("oscillating", model, MpcVariant.LAX, MpcSolver.FISTA, x_r, u_r)
        assert ell is None
        assert np.count_nonzero(w.T - np.diag(np.diag(w.T))) == 0
        assert w.N == 10

    def test_ellipsoid_is_centered_at_the_reference(self):
        model = bench_model("oscillating")
        x_r, u_r = bench_reference("oscillating", model)
        w, ell = bench_weights("oscillating", model, MpcVariant.ELLIP, MpcSolver.ADMM, x_r, u_r)
        assert np.allclose(ell.c, x_r)
        assert ell.r > 0
        assert np.allclose(ell.P, w.T)

    def test_mpct_uses_the_input_weight_for_s(self):
        model = bench_model("oscillating")
        x_r, u_r = bench_reference("oscillating", model)
        w, _ = bench_weights("oscillating", model, MpcVariant.MPCT, MpcSolver.EADMM, x_r, u_r, horizon=5)
        assert np.allclose(w.S, w.R)
        assert w.rho_pair == (2.0, 40.0)
        assert w.N == 5

    def test_invalid_combinations(self):
        model = bench_model("oscillating")
        x_r, u_r = bench_reference("oscillating", model)
        with pytest.raises(InvalidInputError):
            bench_weights("pendulum", model, MpcVariant.LAX, MpcSolver.ADMM, x_r, u_r)
        with pytest.raises(ConfigurationError):
            bench_weights("oscillating", model, MpcVariant.ELLIP, MpcSolver.FISTA, x_r, u_r)


class TestMpcBench:
    def test_oscillating_lax_admm(self):
        spec = BenchSpec(kind=BenchKind.MPC_SCENARIO, bench="oscillating", formulation="lax", solver="admm", samples=5)
        report, trace = run_mpc_bench(spec)
        assert report.failures == []
        assert len(report.rows) == 5
        assert {r.scheme for r in report.rows} == {"lax/admm"}
        assert len(trace.samples) == 5
        assert "phi[lax/admm]" in report.extras

    def test_restart_mode_reports_one_label_per_scheme(self):
        spec = BenchSpec(kind=BenchKind.MPC_SCENARIO, bench="oscillating", formulation="lax",
                         solver="dual_fista_restart", samples=4, schemes=[PLAIN_FISTA, "alg7_obj"])
        report, _ = run_mpc_bench(spec)
        assert {r.scheme for r in report.rows} <= {PLAIN_FISTA, "alg7_obj"}
        assert {"phi[fista]", "phi[alg7_obj]"} <= set(report.extras)

    def test_unknown_bench(self):
        with pytest.raises(InvalidInputError):
            run_mpc_bench(BenchSpec(kind=BenchKind.MPC_SCENARIO, bench="academic"))


class TestHmpcBench:
    def test_ball_plate_problem_is_valid(self):
        problem = hmpc_ball_plate_problem()
        assert problem.model.n == 8 and problem.N == 5

    def test_academic_runs_both_references(self):
        spec = BenchSpec(kind=BenchKind.HMPC_SCENARIO, bench="academic", samples=2)
        report, traces = run_hmpc_bench(spec)
        assert set(traces) == {"hmpc-admissible", "hmpc-inadmissible"}
        assert all(len(t.samples) == 3 for t in traces.values())
        assert {"offset[hmpc-admissible]", "offset[hmpc-inadmissible]"} <= set(report.extras)

    def test_unknown_bench(self):
        with pytest.raises(InvalidInputError):
            run_hmpc_bench(BenchSpec(kind=BenchKind.HMPC_SCENARIO, bench="chemical"))


# =============================================================================
# Acceptance
# =============================================================================


class TestAcceptance:
    def test_exact_example_counts_pass(self):
        spec = BenchSpec(kind=BenchKind.EXAMPLE31)
        assert acceptance_violations(spec, _example_report(EXAMPLE31_COUNTS)) == []

    def test_off_count_is_reported(self):
        counts = dict(EXAMPLE31_COUNTS)
        counts["alg8_grad"] = (431 + 5, 14)
        violations = acceptance_violations(BenchSpec(kind=BenchKind.EXAMPLE31), _example_report(counts))
        assert len(violations) == 1 and violations[0].startswith("alg8_grad")

    def test_mpc_average_band(self):
        spec = BenchSpec(kind=BenchKind.MPC_SCENARIO, bench="chemical", formulation="lax", solver="admm")

        def row(it):
            return ReportRow(scheme="lax/admm", instance=0, iterations=it, residual=0.0)

        assert acceptance_violations(spec, build_report([row(125), row(135)])) == []
        assert len(acceptance_violations(spec, build_report([row(200)]))) == 1

    def test_unpublished_configuration_is_not_checked(self):
        spec = BenchSpec(kind=BenchKind.MPC_SCENARIO, bench="chemical", formulation="lax", solver="admm", horizon=7)
        row = ReportRow(scheme="lax/admm", instance=0, iterations=999, residual=0.0)
        assert acceptance_violations(spec, build_report([row])) == []

    def test_failures_count_as_violations(self):
        report = build_report([], failures=["lit_f#0: cap"])
        assert acceptance_violations(BenchSpec(kind=BenchKind.LASSO, rows=10, n_z=20), report) == ["lit_f#0: cap"]

    def test_hmpc_ordering(self):
        spec = BenchSpec(kind=BenchKind.HMPC_SCENARIO, bench="ball_plate")
        good = BenchReport(extras={"phi[hmpc-N5]": 511.0, "phi[mpct-N8]": 600.0, "phi[mpct-N15]": 489.0})
        assert acceptance_violations(spec, good) == []
        bad = BenchReport(extras={"phi[hmpc-N5]": 511.0, "phi[mpct-N8]": 500.0})
        assert acceptance_violations(spec, bad) == ["HMPC with N=5 does not outperform MPCT with N=8"]


# =============================================================================
# Reproductions
# =============================================================================


@pytest.mark.slow
class TestReproductions:
    def test_random_qp_condition_band(self):
        spec = BenchSpec(kind=BenchKind.RANDOM_QP, n_z=200, alpha=10.0, beta=20.0, eps=1e-5, instances=10,
                         schemes=["alg8_grad"])
        report = run_restart_bench(spec)
        assert 36.0 <= report.extras["cond_H_mean"] <= 44.0

