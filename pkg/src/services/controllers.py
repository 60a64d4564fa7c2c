"""
Closed-loop controllers around the sparse MPC solvers.

This module provides:
- MpcSolver: the solver names accepted by the benches
- MpcController: one controller instance (ingredients + solver + warm start)

Every controller returns a ControllerStep. A solver that hits its cap does
not stop the simulation: the best iterate it carried is applied and the
sample is flagged unconverged.
"""

from enum import Enum
from typing import List, Optional

import numpy as np

from src.core.config import settings
from src.core.exceptions import ConfigurationError, MaxIterationsError
from src.core.logging import get_logger
from src.core.numerics import norm_inf
from src.schemas.control import MpcVariant
from src.schemas.solvers import AdmmResult, EadmmResult, QpResult, RestartConfig, RestartScheme
from src.services.mpc_suite import (
    MpcIngredients,
    solve_ellip_admm,
    solve_mpct,
    solve_std_admm,
    solve_std_fista,
    solve_std_restart,
)
from src.services.qp_solvers import dual_primal, dual_problem
from src.services.restart import restart_solve
from src.services.simulation import ControllerStep

logger = get_logger(__name__)


class MpcSolver(str, Enum):
    """Solvers a closed-loop MPC controller can run."""

    FISTA = "fista"
    ADMM = "admm"
    EADMM = "eadmm"
    DUAL_FISTA_RESTART = "dual_fista_restart"


_ALLOWED = {
    MpcSolver.FISTA: (MpcVariant.EQU, MpcVariant.LAX),
    MpcSolver.DUAL_FISTA_RESTART: (MpcVariant.EQU, MpcVariant.LAX),
    MpcSolver.ADMM: (MpcVariant.EQU, MpcVariant.LAX, MpcVariant.ELLIP),
    MpcSolver.EADMM: (MpcVariant.MPCT,),
}


class MpcController:
    """
    A warm-started MPC controller.

    The warm start is the previous sample's solver state reused as is.
    With the restart solver, samples whose QP needs a single dual FISTA
    iteration (no active constraints) are answered by that iteration and
    recorded as inactive in `active`.
    """

    def __init__(
        self,
        ing: MpcIngredients,
        solver: MpcSolver,
        scheme: Optional[RestartScheme] = None,
        eps: Optional[float] = None,
        max_iterations: Optional[int] = None,
    ):
        self.ing = ing
        self.solver = MpcSolver(solver)
        if ing.variant not in _ALLOWED[self.solver]:
            raise ConfigurationError(
                f"{self.solver.value} does not solve the {ing.variant.value} formulation",
                solver=self.solver.value,
                variant=ing.variant.value,
            )
        if self.solver == MpcSolver.DUAL_FISTA_RESTART and scheme is None:
            raise ConfigurationError("the restart solver needs a restart scheme")
        self.scheme = None if scheme is None else RestartScheme(scheme)
        self.eps = settings.mpc_tolerance if eps is None else eps
        self.max_iterations = max_iterations
        self.active: List[bool] = []
        self._lam: Optional[np.ndarray] = None
        self._v: Optional[np.ndarray] = None
        self._z2: Optional[np.ndarray] = None
        self._z3: Optional[np.ndarray] = None

    def reset(self) -> None:
        self.active = []
        self._lam = self._v = self._z2 = self._z3 = None

    def __call__(self, x, x_r, u_r) -> ControllerStep:
        try:
            return self._solve(x, x_r, u_r)
        except MaxIterationsError as e:
            logger.warning("%s hit the cap after %d iterations", self.solver.value, e.iterations)
            return self._fallback(e, x, x_r, u_r)

    # -------------------------------------------------------------------------

    def _solve(self, x, x_r, u_r) -> ControllerStep:
        ing = self.ing
        if self.solver == MpcSolver.FISTA:
            res = solve_std_fista(ing, x, x_r, u_r, self._lam, self.eps, self.max_iterations)
            self._lam = res.lam
            return ControllerStep(u=ing.control(res.z), iterations=res.iterations, r_p=res.residual)

        if self.solver == MpcSolver.ADMM:
            solve = solve_ellip_admm if ing.variant == MpcVariant.ELLIP else solve_std_admm
            res = solve(
                ing, x, x_r, u_r, v_warm=self._v, lam_warm=self._lam,
                eps_p=self.eps, eps_d=self.eps, max_iterations=self.max_iterations,
            )
            self._v, self._lam = res.v, res.lam
            return ControllerStep(u=ing.control(res.v), iterations=res.iterations, r_p=res.r_p, r_d=res.r_d)

        if self.solver == MpcSolver.EADMM:
            res = solve_mpct(ing, x, x_r, u_r, self._z2, self._z3, self._lam, self.eps, self.max_iterations)
            self._z2, self._z3, self._lam = res.z2, res.z3, res.lam
            return ControllerStep(u=ing.control(res.z1), iterations=res.iterations, r_p=res.r_p, r_d=res.r_d)

        return self._solve_restart(x, x_r, u_r)

    def _solve_restart(self, x, x_r, u_r) -> ControllerStep:
        ing = self.ing
        try:
            res = solve_std_fista(ing, x, x_r, u_r, self._lam, self.eps, max_iterations=1)
            self.active.append(False)
            self._lam = res.lam
            return ControllerStep(u=ing.control(res.z), iterations=1, r_p=res.residual)
        except MaxIterationsError:
            self.active.append(True)

        f_star = None
        if self.scheme == RestartScheme.LIT_FSTAR:
            f_star = self._dual_optimal_value(x, x_r, u_r)
        res = solve_std_restart(
            ing, x, x_r, u_r, self.scheme, lam_warm=self._lam, eps=self.eps,
            f_star=f_star, max_iterations=self.max_iterations,
        )
        self._lam = res.lam
        return ControllerStep(u=ing.control(res.z), iterations=res.iterations, r_p=res.residual, restarts=res.restarts)

    def _dual_optimal_value(self, x, x_r, u_r) -> float:
        """f* of the sample's dual, from the objective restart scheme at the tight tolerance."""
        qp = self.ing.qp_for(x, x_r, u_r)
        problem, metric = dual_problem(qp)
        lam0 = np.zeros(qp.m_z) if self._lam is None else self._lam
        cfg = RestartConfig(scheme=RestartScheme.ALG7_OBJ, eps=settings.fstar_tolerance, fair_exit=True)
        res = restart_solve(problem, metric, lam0, cfg)
        return problem.eval_f(res.r_out)

    def _fallback(self, e: MaxIterationsError, x, x_r, u_r) -> ControllerStep:
        best = e.best_iterate
        ing = self.ing
        if isinstance(best, QpResult):
            self._lam = best.lam
            u, r_p, r_d = ing.control(best.z), best.residual, 0.0
        elif isinstance(best, AdmmResult):
            self._v, self._lam = best.v, best.lam
            u, r_p, r_d = ing.control(best.v), best.r_p, best.r_d
        elif isinstance(best, EadmmResult):
            self._z2, self._z3, self._lam = best.z2, best.z3, best.lam
            u, r_p, r_d = ing.control(best.z1), best.r_p, best.r_d
        else:
            # restart schemes carry the dual point only
            qp = ing.qp_for(x, x_r, u_r)
            self._lam = np.asarray(best, dtype=float)
            z = dual_primal(qp, self._lam)
            u, r_p, r_d = ing.control(z), norm_inf(qp.structure.G_mul(z) - qp.b), 0.0
        return ControllerStep(u=u, iterations=e.iterations, r_p=r_p, r_d=r_d, converged=False)
