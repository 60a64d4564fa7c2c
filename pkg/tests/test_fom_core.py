"""
Tests for the composite first-order methods and the ADMM drivers.
"""

import math

import numpy as np
import pytest

from src.core.exceptions import InvalidInputError, MaxIterationsError
from src.schemas.solvers import ExitPoint
from src.services.fom_core import (
    AdmmProblem,
    EadmmProblem,
    FistaIterator,
    SmoothMetric,
    admm_solve,
    box_quadratic_problem,
    composite_gradient,
    eadmm_solve,
    fista_solve,
    lasso_problem,
    mfista_solve,
    prox_grad_solve,
    quadratic_problem,
    t_next,
)
from src.services.generators import EXAMPLE31_F_STAR, EXAMPLE31_Z_STAR, gen_lasso
from src.services.sparse_kernels import solve_boxQP
from tests.oracles import active_set_qp


# =============================================================================
# Metric
# =============================================================================


class TestSmoothMetric:
    def test_apply_then_inverse_roundtrip(self, rng):
        A = rng.standard_normal((4, 4))
        metric = SmoothMetric(A @ A.T + 4 * np.eye(4))
        v = rng.standard_normal(4)
        assert np.allclose(metric.apply_inv(metric.apply(v)), v, rtol=1e-12, atol=1e-12)

    def test_diagonal_metric_norms(self):
        metric = SmoothMetric([4.0, 9.0])
        v = np.array([1.0, 1.0])
        assert metric.norm(v) == pytest.approx(math.sqrt(13.0))
        assert metric.dual_norm(v) == pytest.approx(math.sqrt(0.25 + 1.0 / 9.0))

    def test_rejects_indefinite_and_asymmetric(self):
        with pytest.raises(InvalidInputError):
            SmoothMetric([1.0, 0.0])
        with pytest.raises(InvalidInputError):
            SmoothMetric(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(InvalidInputError):
            SmoothMetric(np.array([[2.0, 1.0], [0.0, 2.0]]))

    def test_gershgorin_zero_row_defaults_to_one(self):
        H = np.array([[2.0, -1.0, 0.0], [-1.0, 3.0, 0.0], [0.0, 0.0, 0.0]])
        metric = SmoothMetric.gershgorin(H)
        assert np.allclose(metric.diagonal, [3.0, 4.0, 1.0])


# =============================================================================
# Composite gradient
# =============================================================================


class TestCompositeGradient:
    def test_example_at_origin(self, ex31):
        cg = composite_gradient(ex31.problem, ex31.metric, [0.0, 0.0])
        assert np.allclose(cg.T, [0.001, 0.01])
        assert np.allclose(cg.G, [-0.1, -1.0])
        assert cg.gnorm == pytest.approx(ex31.metric.dual_norm(cg.G))

    def test_vanishes_at_optimum(self, ex31):
        cg = composite_gradient(ex31.problem, ex31.metric, EXAMPLE31_Z_STAR)
        assert cg.gnorm <= 1e-10
        assert composite_gradient(ex31.problem, ex31.metric, [0.3, 1.0]).gnorm > 0

    def test_box_tmap(self):
        problem = box_quadratic_problem([[1.0]], [0.0], -1.0, 1.0)
        cg = composite_gradient(problem, SmoothMetric.identity(1), [3.0])
        assert cg.T[0] == 0.0
        assert cg.G[0] == pytest.approx(3.0)
        assert cg.gnorm == pytest.approx(3.0)

    def test_descent_bound_holds(self, ex31, rng):
        inst = gen_lasso(20, 40, 0.05, seed=7)
        for problem, metric, dim in ((ex31.problem, ex31.metric, 2), (inst.problem, inst.metric, 40)):
            for _ in range(20):
                y = rng.standard_normal(dim)
                cg = composite_gradient(problem, metric, y)
                assert 0.5 * cg.gnorm ** 2 <= problem.eval_f(y) - problem.eval_f(cg.T) + 1e-9

    def test_wrong_dimension_and_nan(self, ex31):
        with pytest.raises(InvalidInputError):
            composite_gradient(ex31.problem, ex31.metric, [1.0, 2.0, 3.0])
        with pytest.raises(InvalidInputError):
            composite_gradient(ex31.problem, ex31.metric, [np.nan, 0.0])


class TestMomentum:
    def test_first_value(self):
        assert t_next(1.0) == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-12)

    def test_identities_along_the_sequence(self):
        t = 1.0
        for k in range(1, 10_001):
            t_new = t_next(t)
            assert t * t == pytest.approx(t_new * t_new - t_new, rel=1e-9)
            assert t_new >= (k + 2) / 2
            t = t_new

    def test_rejects_small_argument(self):
        with pytest.raises(InvalidInputError):
            t_next(0.5)


# =============================================================================
# Solvers
# =============================================================================


class TestProxGrad:
    def test_fixed_point_exits_immediately(self, ex31):
        report = prox_grad_solve(ex31.problem, ex31.metric, EXAMPLE31_Z_STAR, 1e-6)
        assert report.iterations == 1

    def test_converges_on_example(self, ex31):
        report = prox_grad_solve(ex31.problem, ex31.metric, ex31.z0, 1e-6, exit_at=ExitPoint.AT_ZK)
        assert report.final_residual <= 1e-6
        assert np.allclose(report.solution, EXAMPLE31_Z_STAR, atol=1e-3)

    def test_cap_carries_best_iterate(self, ex31):
        with pytest.raises(MaxIterationsError) as exc:
            prox_grad_solve(ex31.problem, ex31.metric, ex31.z0, 1e-12, max_iterations=5)
        assert exc.value.iterations == 5
        assert exc.value.best_iterate.shape == (2,)

    def test_rejects_bad_input(self, ex31):
        with pytest.raises(InvalidInputError):
            prox_grad_solve(ex31.problem, ex31.metric, [0.0], 1e-6)
        with pytest.raises(InvalidInputError):
            prox_grad_solve(ex31.problem, ex31.metric, ex31.z0, 0.0)


class TestFista:
    def test_example_iteration_count(self, ex31):
        report = fista_solve(ex31.problem, ex31.metric, ex31.z0, 1e-6)
        assert abs(report.iterations - 853) <= 2
        assert np.allclose(report.solution, EXAMPLE31_Z_STAR, atol=1e-4)

    def test_optimum_needs_one_iteration(self, ex31):
        assert fista_solve(ex31.problem, ex31.metric, EXAMPLE31_Z_STAR, 1e-6).iterations == 1

    def test_cap_in_non_monotone_phase_returns_lowest_f_iterate(self, ex31):
        it = FistaIterator(ex31.problem, ex31.metric, ex31.problem.tmap(ex31.z0, ex31.metric), track_f=True)
        zs, fs = [it.z], [it.f]
        while fs[-1] <= min(fs[:-1], default=math.inf):
            st = it.step()
            zs.append(st.z)
            fs.append(st.f)
            assert st.k < 1000
        cap = len(fs) - 1

        with pytest.raises(MaxIterationsError) as exc:
            fista_solve(ex31.problem, ex31.metric, ex31.z0, 1e-12, max_iterations=cap)
        best = exc.value.best_iterate
        assert exc.value.iterations == cap
        assert np.array_equal(best, zs[int(np.argmin(fs))])
        assert ex31.problem.eval_f(best) < fs[-1]

    def test_one_dimensional_hand_trace(self):
        problem = quadratic_problem([[1.0]], [0.0])
        report = fista_solve(problem, SmoothMetric.identity(1), [1.0], 1e-9)
        assert report.iterations == 1
        assert report.solution[0] == 0.0

    def test_rate_bounds(self, ex31):
        report = fista_solve(ex31.problem, ex31.metric, ex31.z0, 1e-6, trace=True)
        dist = ex31.metric.norm(ex31.z0 - EXAMPLE31_Z_STAR)
        assert len(report.trace) == report.iterations
        for rec in report.trace:
            assert rec.f_value - EXAMPLE31_F_STAR <= 2.0 / (rec.k + 1) ** 2 * dist ** 2 + 1e-12
            assert rec.gnorm <= 4.0 / (rec.k + 1) * dist + 1e-12


class TestMfista:
    def test_monotone_trace(self, ex31):
        report = mfista_solve(ex31.problem, ex31.metric, ex31.z0, 1e-6, trace=True)
        values = [rec.f_value for rec in report.trace]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert np.allclose(report.solution, EXAMPLE31_Z_STAR, atol=1e-4)

    def test_optimum_needs_one_iteration(self, ex31):
        assert mfista_solve(ex31.problem, ex31.metric, EXAMPLE31_Z_STAR, 1e-6).iterations == 1

    def test_needs_finite_start(self):
        problem = box_quadratic_problem(np.eye(2), [0.0, 0.0], -1.0, 1.0)
        with pytest.raises(InvalidInputError):
            mfista_solve(problem, SmoothMetric.identity(2), [5.0, 0.0], 1e-6)

    def test_lasso_reaches_optimality(self):
        inst = gen_lasso(30, 60, 0.05, seed=3)
        report = mfista_solve(inst.problem, inst.metric, inst.z0, 1e-8)
        g = composite_gradient(inst.problem, inst.metric, report.solution)
        assert g.gnorm <= 1e-3


# =============================================================================
# ADMM
# =============================================================================


class TestAdmm:
    def test_trivial_problem_exits_at_first_pass(self):
        zero = np.zeros(2)
        ap = AdmmProblem(
            z_update=lambda v, lam, rho: zero,
            v_update=lambda z, lam, rho: zero,
            C=np.eye(2), D=-np.eye(2), d=zero, rho=1.0,
        )
        res = admm_solve(ap, zero, zero, 1e-6, 1e-6)
        assert res.iterations == 1
        assert np.all(res.z == 0) and np.all(res.v == 0)

    def test_box_qp_split_matches_oracle(self):
        H = np.array([[2.0, 0.5], [0.5, 1.0]])
        q = np.array([-4.0, 1.0])
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        rho = 1.5
        K = np.linalg.inv(H + rho * np.eye(2))

        ap = AdmmProblem(
            z_update=lambda v, lam, r: -K @ (q + lam - r * v),
            v_update=lambda z, lam, r: solve_boxQP(-r * z - lam, 1.0 / r, lo, hi),
            C=np.eye(2), D=-np.eye(2), d=np.zeros(2), rho=rho,
        )
        res = admm_solve(ap, np.zeros(2), np.zeros(2), 1e-9, 1e-9)
        assert res.r_p <= 1e-9 and res.r_d <= 1e-9
        assert np.allclose(res.v, active_set_qp(H, q, None, None, lo, hi), atol=1e-6)

    def test_mismatched_coupling(self):
        zero = np.zeros(2)
        ap = AdmmProblem(
            z_update=lambda v, lam, rho: zero,
            v_update=lambda z, lam, rho: zero,
            C=np.eye(3), D=-np.eye(2), d=zero, rho=1.0,
        )
        with pytest.raises(InvalidInputError):
            admm_solve(ap, zero, zero, 1e-6, 1e-6)


class TestEadmm:
    @staticmethod
    def _toy(a1, a2, a3, d):
        def upd(a):
            def f(x, y, lam, rho):
                return (a - lam - rho * (x + y - d)) / (1.0 + rho)
            return f

        return EadmmProblem(
            z1_update=upd(a1), z2_update=upd(a2), z3_update=upd(a3),
            C1=np.eye(2), C2=np.eye(2), C3=np.eye(2), d=d,
        )

    def test_zero_problem_exits_at_first_pass(self):
        zero = np.zeros(2)
        res = eadmm_solve(self._toy(zero, zero, zero, zero), zero, zero, zero, 0.3, 1e-8, 1e-8)
        assert res.iterations == 1

    def test_converges_to_kkt_point(self):
        a1, a2, a3 = np.array([1.0, -2.0]), np.array([0.5, 0.5]), np.array([-1.0, 3.0])
        d = np.array([2.0, 0.0])
        nu = (a1 + a2 + a3 - d) / 3.0
        res = eadmm_solve(self._toy(a1, a2, a3, d), np.zeros(2), np.zeros(2), np.zeros(2), 0.3, 1e-10, 1e-10)
        assert np.allclose(res.z1, a1 - nu, atol=1e-7)
        assert np.allclose(res.z2, a2 - nu, atol=1e-7)
        assert np.allclose(res.z3, a3 - nu, atol=1e-7)

    def test_rejects_non_positive_rho(self):
        zero = np.zeros(2)
        with pytest.raises(InvalidInputError):
            eadmm_solve(self._toy(zero, zero, zero, zero), zero, zero, zero, 0.0, 1e-6, 1e-6)


def test_lasso_weights_must_be_non_negative():
    with pytest.raises(InvalidInputError):
        lasso_problem(np.eye(2), [1.0, 1.0], [-1.0, 1.0])
