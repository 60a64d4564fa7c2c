"""
MPC for tracking (MPCT) through the three-block extended ADMM.

The MPCT problem is split into
    z1 = (x_0, u_0, ..., x_N, u_N)            box constrained
    z2 = (x_s, u_s)                           steady-state equation
    z3 = (dx_0, du_0, ..., dx_N, du_N)        incremental dynamics
coupled by C1 z1 + C2 z2 + C3 z3 = d. The coupling rows are laid out as
    [ head (n) | congruence i = 0..N (n+m each) | terminal tie (n+m) ]
with head: x_0 = x(t), congruence: dz_i + z_s - z_i = 0 and tie: z_s - z_N = 0.
Every product with C_i is index arithmetic on these row groups.
"""

from typing import Optional, Tuple

import numpy as np
from scipy.linalg import block_diag

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError
from src.core.logging import get_logger
from src.core.numerics import as_vector
from src.schemas.control import LtiModel, MpcWeights
from src.schemas.solvers import EadmmResult
from src.services.fom_core import EadmmProblem, eadmm_solve
from src.services.sparse_kernels import BandedQpStructure, EqQpData, solve_boxQP, solve_eqQP

logger = get_logger(__name__)


def _as_block(M: np.ndarray):
    """Diagonal matrices are stored as their diagonal."""
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        return np.diag(M).copy()
    return M


class MpctData:
    """
    Offline data of the MPCT solver.

    Holds the per-row penalty vector, the diagonal of C1' diag(rho) C1,
    the z1 box, the closed-form steady-state map M2 and the factorized
    incremental-dynamics QP.
    """

    def __init__(self, model: LtiModel, weights: MpcWeights, big_m: Optional[float] = None):
        if weights.S is None:
            raise ConfigurationError("MPCT needs the input offset weight S")
        n, m, N = model.n, model.m, weights.N
        nb = n + m
        self.n, self.m, self.N = n, m, N
        self.model = model
        self.weights = weights
        self.rows = n + (N + 2) * nb

        G2 = np.hstack([model.A - np.eye(n), model.B])
        if np.linalg.matrix_rank(G2) < n:
            raise ConfigurationError("[A - I, B] must have full row rank for the steady-state map")
        for name, W in (("Q", weights.Q), ("R", weights.R), ("T", weights.T), ("S", weights.S)):
            if not np.allclose(W, W.T) or np.linalg.eigvalsh(0.5 * (W + W.T))[0] < -1e-12:
                raise ConfigurationError(f"{name} must be symmetric positive semidefinite")
        margin = np.concatenate([np.full(n, weights.eps_x), np.full(m, weights.eps_u)])
        if np.any(np.concatenate([model.x_hi - model.x_lo, model.u_hi - model.u_lo]) <= 2.0 * margin):
            raise ConfigurationError("tightening margins leave an empty terminal box")

        # Per-row penalties
        rho1, rho2 = weights.rho_pair
        if not (rho1 > 0 and rho2 > 0):
            raise InvalidInputError(f"MPCT penalties must be positive, got {(rho1, rho2)}")
        r = np.full(self.rows, rho1)
        r[:n] = rho2
        cong = self._cong(r)
        cong[0, :n] = rho2
        cong[N, :] = rho2
        self._tie(r)[:] = rho2
        self.rho = r

        # z1: diag(C1' diag(rho) C1) and bounds
        h1 = self._cong(r).copy()
        h1[0, :n] += r[:n]
        h1[N] += self._tie(r)
        self.h1 = h1.reshape(-1)
        self.h1_inv = 1.0 / self.h1
        big = settings.mpct_big_m if big_m is None else big_m
        lo = np.tile(np.concatenate([model.x_lo, model.u_lo]), (N + 1, 1))
        hi = np.tile(np.concatenate([model.x_hi, model.u_hi]), (N + 1, 1))
        lo[0, :n], hi[0, :n] = -big, big
        lo[N] += margin
        hi[N] -= margin
        self.lo1, self.hi1 = lo.reshape(-1), hi.reshape(-1)

        # z2: closed form on the steady-state manifold
        s2 = self._cong(r).sum(axis=0) + self._tie(r)
        H2 = block_diag(weights.T, weights.S) + np.diag(s2)
        H2_inv = np.linalg.inv(H2)
        K = G2 @ H2_inv
        self.G2 = G2
        self.M2 = K.T @ np.linalg.solve(K @ G2.T, K) - H2_inv

        # z3: banded equality QP with the incremental dynamics
        QR = block_diag(weights.Q, weights.R)
        blocks = []
        middle = _as_block(QR + np.diag(cong[1])) if N > 1 else None
        for i in range(N + 1):
            if 0 < i < N:
                blocks.append(middle)
            else:
                blocks.append(_as_block(QR + np.diag(cong[i])))
        AB = np.hstack([model.A, model.B])
        shift = np.hstack([-np.eye(n), np.zeros((n, m))])
        self.z3_data = EqQpData(BandedQpStructure(blocks, [AB] * N, [shift] * N))
        self._zero_b3 = np.zeros(N * n)
        logger.debug("built MPCT data (n=%d, m=%d, N=%d, rows=%d)", n, m, N, self.rows)

    # -------------------------------------------------------------------------
    # Row groups
    # -------------------------------------------------------------------------

    def _cong(self, y: np.ndarray) -> np.ndarray:
        nb = self.n + self.m
        return y[self.n:self.n + (self.N + 1) * nb].reshape(self.N + 1, nb)

    def _tie(self, y: np.ndarray) -> np.ndarray:
        return y[self.n + (self.N + 1) * (self.n + self.m):]

    @property
    def n_z1(self) -> int:
        return (self.N + 1) * (self.n + self.m)

    # -------------------------------------------------------------------------
    # Coupling operators
    # -------------------------------------------------------------------------

    def C1(self, z1: np.ndarray) -> np.ndarray:
        Z = z1.reshape(self.N + 1, -1)
        out = np.empty(self.rows)
        out[:self.n] = Z[0, :self.n]
        self._cong(out)[:] = -Z
        self._tie(out)[:] = -Z[self.N]
        return out

    def C1T(self, y: np.ndarray) -> np.ndarray:
        out = -self._cong(y)
        out[0, :self.n] += y[:self.n]
        out[self.N] -= self._tie(y)
        return out.reshape(-1)

    def C2(self, z2: np.ndarray) -> np.ndarray:
        out = np.zeros(self.rows)
        self._cong(out)[:] = z2
        self._tie(out)[:] = z2
        return out

    def C2T(self, y: np.ndarray) -> np.ndarray:
        return self._cong(y).sum(axis=0) + self._tie(y)

    def C3(self, z3: np.ndarray) -> np.ndarray:
        out = np.zeros(self.rows)
        self._cong(out)[:] = z3.reshape(self.N + 1, -1)
        return out

    def C3T(self, y: np.ndarray) -> np.ndarray:
        return self._cong(y).reshape(-1).copy()

    def rhs(self, x_t: np.ndarray) -> np.ndarray:
        d = np.zeros(self.rows)
        d[:self.n] = x_t
        return d

    def control(self, z1: np.ndarray) -> np.ndarray:
        """u_0 of the z1 block."""
        return z1[self.n:self.n + self.m].copy()


def mpct_problem(data: MpctData, x_t, x_r, u_r) -> Tuple[EadmmProblem, np.ndarray]:
    """The EADMM problem for the current state and reference, plus its per-row rho."""
    x_t = as_vector(x_t, data.n, "x_t")
    x_r = as_vector(x_r, data.n, "x_r")
    u_r = as_vector(u_r, data.m, "u_r")
    d = data.rhs(x_t)
    q2_ref = -np.concatenate([data.weights.T @ x_r, data.weights.S @ u_r])

    def z1_update(z2, z3, lam, rho):
        q1 = data.C1T(lam + rho * (data.C2(z2) + data.C3(z3) - d))
        return solve_boxQP(q1, data.h1_inv, data.lo1, data.hi1)

    def z2_update(z1, z3, lam, rho):
        q2 = q2_ref + data.C2T(lam + rho * (data.C1(z1) + data.C3(z3) - d))
        return data.M2 @ q2

    def z3_update(z1, z2, lam, rho):
        q3 = data.C3T(lam + rho * (data.C1(z1) + data.C2(z2) - d))
        return solve_eqQP(data.z3_data, q3, data._zero_b3).z

    problem = EadmmProblem(
        z1_update=z1_update,
        z2_update=z2_update,
        z3_update=z3_update,
        C1=data.C1,
        C2=data.C2,
        C3=data.C3,
        d=d,
    )
    return problem, data.rho


def solve_mpct_eadmm(
    data: MpctData,
    x_t,
    x_r,
    u_r,
    z2_warm=None,
    z3_warm=None,
    lam_warm=None,
    eps: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> EadmmResult:
    """
    Solve the MPCT problem with the extended ADMM.

    Args:
        data: Offline data from MpctData
        x_t: Current state
        x_r, u_r: Reference
        z2_warm, z3_warm, lam_warm: Warm start (zeros when omitted)
        eps: Tolerance of the three infinity-norm exit tests
        max_iterations: Iteration cap

    Returns:
        EadmmResult; the control action is data.control(result.z1)

    Raises:
        MaxIterationsError: If the cap is reached
    """
    eps = settings.mpc_tolerance if eps is None else eps
    problem, rho = mpct_problem(data, x_t, x_r, u_r)
    nb = data.n + data.m
    z2 = np.zeros(nb) if z2_warm is None else z2_warm
    z3 = np.zeros(data.n_z1) if z3_warm is None else z3_warm
    lam = np.zeros(data.rows) if lam_warm is None else lam_warm
    return eadmm_solve(problem, z2, z3, lam, rho, eps, eps, max_iterations=max_iterations)
