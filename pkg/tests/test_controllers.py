"""
Tests for the warm-started closed-loop MPC controllers.
"""

import numpy as np
import pytest

from src.core.exceptions import ConfigurationError
from src.schemas.control import LtiModel, MpcVariant, MpcWeights
from src.schemas.solvers import RestartScheme
from src.services.controllers import MpcController, MpcSolver
from src.services.mpc_suite import build_ingredients, eadmm_rho_bound
from src.services.sparse_kernels import Ellipsoid
from tests.oracles import active_set_qp, ellipsoid_qp, mpct_oracle

X_T, X_R, U_R = [1.9], [0.0], [0.0]


def _model() -> LtiModel:
    return LtiModel(A=[[1.1]], B=[[1.0]], x_lo=[-2.0], x_hi=[2.0], u_lo=[-1.0], u_hi=[1.0])


def _weights(N: int = 3, rho=1.0) -> MpcWeights:
    return MpcWeights(Q=[1.0], R=[0.5], T=[2.0], S=[0.5], N=N, rho=rho)


def _oracle_input(ing, x_t, x_r, u_r) -> np.ndarray:
    qp = ing.qp_for(x_t, x_r, u_r)
    H, G = qp.structure.to_dense()
    return ing.control(active_set_qp(H, qp.q, G, qp.b, qp.lo, qp.hi))


class TestConfiguration:
    def test_solver_must_match_the_formulation(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        with pytest.raises(ConfigurationError):
            MpcController(ing, MpcSolver.EADMM)

    def test_fista_does_not_solve_the_ellipsoid_formulation(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.ELLIP, ellipsoid=Ellipsoid(np.eye(1), [0.0], 1.0))
        with pytest.raises(ConfigurationError):
            MpcController(ing, MpcSolver.FISTA)

    def test_restart_solver_needs_a_scheme(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        with pytest.raises(ConfigurationError):
            MpcController(ing, MpcSolver.DUAL_FISTA_RESTART)

    def test_solver_accepts_plain_strings(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.EQU)
        assert MpcController(ing, "admm").solver == MpcSolver.ADMM


class TestSolvers:
    @pytest.mark.parametrize("variant", [MpcVariant.EQU, MpcVariant.LAX])
    @pytest.mark.parametrize("solver", [MpcSolver.FISTA, MpcSolver.ADMM])
    def test_first_input_matches_oracle(self, variant, solver):
        ing = build_ingredients(_model(), _weights(), variant)
        step = MpcController(ing, solver, eps=1e-9)(X_T, X_R, U_R)
        assert step.converged
        assert np.allclose(step.u, _oracle_input(ing, X_T, X_R, U_R), atol=1e-5)

    def test_ellipsoid_formulation(self):
        P, r = np.eye(1), 0.3
        ing = build_ingredients(_model(), _weights(), MpcVariant.ELLIP, ellipsoid=Ellipsoid(P, [0.0], r))
        step = MpcController(ing, MpcSolver.ADMM, eps=1e-9)(X_T, X_R, U_R)
        qp = ing.qp_for(X_T, X_R, U_R)
        H, G = qp.structure.to_dense()
        ref = ellipsoid_qp(H, qp.q, G, qp.b, qp.lo, qp.hi, P, np.zeros(1), r)
        assert np.allclose(step.u, ing.control(ref), atol=1e-4)

    def test_mpct(self):
        rho = eadmm_rho_bound([[1.0]], [[0.5]])
        w = _weights(2, rho=(rho, rho))
        ing = build_ingredients(_model(), w, MpcVariant.MPCT)
        step = MpcController(ing, MpcSolver.EADMM, eps=1e-8)([1.9], [0.5], [-0.05])
        ref = mpct_oracle(_model(), w, np.array([1.9]), np.array([0.5]), np.array([-0.05]))
        assert np.allclose(step.u, ref["u0"], atol=1e-4)

    @pytest.mark.parametrize("solver", [MpcSolver.FISTA, MpcSolver.ADMM])
    def test_warm_start_carries_over(self, solver):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, solver, eps=1e-10)
        ctrl(X_T, X_R, U_R)
        ctrl.eps = 1e-6
        assert ctrl(X_T, X_R, U_R).iterations == 1

    def test_reset_drops_the_warm_start(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, MpcSolver.FISTA, eps=1e-8)
        cold = ctrl(X_T, X_R, U_R).iterations
        ctrl.reset()
        assert ctrl(X_T, X_R, U_R).iterations == cold


class TestRestartController:
    def test_steady_state_sample_is_inactive(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, MpcSolver.DUAL_FISTA_RESTART, scheme=RestartScheme.ALG7_OBJ, eps=1e-8)
        step = ctrl([0.5], [0.5], [-0.05])
        assert ctrl.active == [False]
        assert step.iterations == 1
        assert np.allclose(step.u, [-0.05], atol=1e-8)

    @pytest.mark.parametrize("scheme", [RestartScheme.ALG7_OBJ, RestartScheme.ALG8_GRAD, RestartScheme.ALG10_GENERAL])
    def test_active_sample_matches_oracle(self, scheme):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, MpcSolver.DUAL_FISTA_RESTART, scheme=scheme, eps=1e-10)
        step = ctrl(X_T, X_R, U_R)
        assert ctrl.active == [True]
        assert np.allclose(step.u, _oracle_input(ing, X_T, X_R, U_R), atol=1e-5)

    def test_known_optimal_value_scheme(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, MpcSolver.DUAL_FISTA_RESTART, scheme=RestartScheme.LIT_FSTAR, eps=1e-7)
        step = ctrl(X_T, X_R, U_R)
        assert np.allclose(step.u, _oracle_input(ing, X_T, X_R, U_R), atol=1e-3)

    def test_reset_clears_the_activity_log(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, MpcSolver.DUAL_FISTA_RESTART, scheme=RestartScheme.ALG7_OBJ)
        ctrl([0.5], [0.5], [-0.05])
        ctrl.reset()
        assert ctrl.active == []


class TestCapFallback:
    @pytest.mark.parametrize("solver", [MpcSolver.FISTA, MpcSolver.ADMM])
    def test_cap_applies_the_last_iterate(self, solver):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        step = MpcController(ing, solver, eps=1e-14, max_iterations=2)(X_T, X_R, U_R)
        assert not step.converged
        assert step.iterations == 2
        assert step.u.shape == (1,)
        assert np.all(np.isfinite(step.u))

    def test_mpct_cap(self):
        ing = build_ingredients(_model(), _weights(2, rho=(2.0, 40.0)), MpcVariant.MPCT)
        step = MpcController(ing, MpcSolver.EADMM, eps=1e-14, max_iterations=2)([1.9], [0.5], [-0.05])
        assert not step.converged
        assert step.u.shape == (1,)

    def test_restart_cap_recovers_the_primal(self):
        ing = build_ingredients(_model(), _weights(), MpcVariant.LAX)
        ctrl = MpcController(ing, MpcSolver.DUAL_FISTA_RESTART, scheme=RestartScheme.ALG7_OBJ, eps=1e-14, max_iterations=3)
        step = ctrl(X_T, X_R, U_R)
        assert not step.converged
        assert np.all(np.isfinite(step.u))
