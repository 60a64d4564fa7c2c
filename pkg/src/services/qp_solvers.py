"""
Structured QP solvers.

This module provides:
- StructuredQp: min 1/2 z'Hz + q'z s.t. Gz = b, lo <= z <= hi with banded G
- dual_fista_qp: FISTA on the dual, metric W = G H^{-1} G'
- admm_qp: ADMM splitting z (equality block) / v (box block)
- dual_problem / BandedMetric: the dual as a CompositeProblem so any restart
  scheme can run on it
"""

from typing import Dict, Optional, Sequence

import numpy as np

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError, MaxIterationsError
from src.core.logging import get_logger
from src.core.numerics import as_vector, dot, norm_inf
from src.schemas.solvers import AdmmResult, QpResult
from src.services.fom_core import AdmmProblem, CompositeProblem, SmoothMetric, admm_solve, t_next
from src.services.sparse_kernels import (
    BandedQpStructure,
    EqQpData,
    solve_boxQP,
    solve_eqQP,
    solve_W,
)

logger = get_logger(__name__)


class StructuredQp:
    """
    QP with block-diagonal H, banded equalities and box constraints.

    The banded factors are cached per penalty rho (rho = 0 is W = G H^{-1} G'
    used by dual FISTA; rho > 0 factors G (H + rho I)^{-1} G' for ADMM).
    with_vectors() shares this cache so closed-loop solves never refactorize.
    """

    def __init__(
        self,
        H_blocks: Sequence[np.ndarray],
        Gd: Sequence[np.ndarray],
        Gs: Sequence[Optional[np.ndarray]],
        q,
        b,
        lo,
        hi,
        _cache: Optional[Dict[float, EqQpData]] = None,
    ):
        self.structure = BandedQpStructure(H_blocks, Gd, Gs)
        s = self.structure
        self.q = as_vector(q, s.n_z, "q")
        self.b = as_vector(b, s.m_z, "b")
        self.lo = np.broadcast_to(np.asarray(lo, dtype=float), (s.n_z,)).copy()
        self.hi = np.broadcast_to(np.asarray(hi, dtype=float), (s.n_z,)).copy()
        if np.any(self.lo > self.hi):
            raise ConfigurationError("QP box is empty (lo > hi)")
        self._cache: Dict[float, EqQpData] = {} if _cache is None else _cache

    @property
    def n_z(self) -> int:
        return self.structure.n_z

    @property
    def m_z(self) -> int:
        return self.structure.m_z

    def with_vectors(self, q=None, b=None, lo=None, hi=None) -> "StructuredQp":
        """Copy with new q / b / bounds sharing the structure and the factor cache."""
        s = self.structure
        return StructuredQp(
            s.H_blocks, s.Gd, s.Gs,
            self.q if q is None else q,
            self.b if b is None else b,
            self.lo if lo is None else lo,
            self.hi if hi is None else hi,
            _cache=self._cache,
        )

    def eq_data(self, rho: float = 0.0) -> EqQpData:
        """Equality-QP data for H + rho I, factorized on first use."""
        key = float(rho)
        data = self._cache.get(key)
        if data is None:
            s = self.structure
            if key == 0.0:
                blocks = s.H_blocks
            else:
                shifted = {}
                blocks = []
                for h in s.H_blocks:
                    if id(h) not in shifted:
                        h_arr = np.asarray(h, dtype=float)
                        shifted[id(h)] = h_arr + key if h_arr.ndim == 1 else h_arr + key * np.eye(h_arr.shape[0])
                    blocks.append(shifted[id(h)])
            data = EqQpData(BandedQpStructure(blocks, s.Gd, s.Gs))
            self._cache[key] = data
            logger.debug("factorized banded W for rho=%g (N=%d, n=%d)", key, data.W_factor.N, data.W_factor.n)
        return data

    def hessian_diagonal(self) -> np.ndarray:
        """diag(H) as one vector; raises unless every block is diagonal."""
        parts = []
        for h in self.structure.H_blocks:
            h = np.asarray(h, dtype=float)
            if h.ndim == 2:
                if np.count_nonzero(h - np.diag(np.diag(h))):
                    raise ConfigurationError("dual FISTA requires a diagonal Hessian")
                h = np.diag(h)
            parts.append(h)
        d = np.concatenate(parts)
        if np.any(d <= 0):
            raise ConfigurationError("dual FISTA requires a positive-definite Hessian")
        return d

    def objective(self, z: np.ndarray) -> float:
        return 0.5 * dot(z, self.structure.H_mul(z)) + dot(self.q, z)


# =============================================================================
# Dual FISTA
# =============================================================================


def dual_fista_qp(
    qp: StructuredQp,
    lam0,
    eps: float,
    max_iterations: Optional[int] = None,
) -> QpResult:
    """
    FISTA on the dual of the QP.

    Each pass computes z_k = argmin over the box of 1/2 z'Hz + (q - G'y_{k-1})'z,
    Gamma_k = b - G z_k and lam_k = y_{k-1} + W^{-1} Gamma_k, followed by the
    FISTA extrapolation. Stops when ||Gamma_k||_inf <= eps and returns
    (z_k, y_{k-1}). The prologue that turns lam0 into y_0 is not counted.

    Raises:
        ConfigurationError: If H is not diagonal positive definite
        MaxIterationsError: If the cap is reached
    """
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    hinv = 1.0 / qp.hessian_diagonal()
    data = qp.eq_data(0.0)
    s = qp.structure
    lam = as_vector(lam0, qp.m_z, "lam0")
    cap = max_iterations or settings.max_iterations

    def primal(y: np.ndarray) -> np.ndarray:
        return solve_boxQP(qp.q - s.GT_mul(y), hinv, qp.lo, qp.hi)

    z = primal(lam)
    gamma = qp.b - s.G_mul(z)
    lam_prev = lam + solve_W(data.W_factor, gamma)
    y = lam_prev
    t = 1.0
    res = norm_inf(gamma)
    for k in range(1, cap + 1):
        z = primal(y)
        gamma = qp.b - s.G_mul(z)
        res = norm_inf(gamma)
        if res <= eps:
            return QpResult(z=z, lam=y, iterations=k, residual=res)
        lam_k = y + solve_W(data.W_factor, gamma)
        t_new = t_next(t)
        y = lam_k + ((t - 1.0) / t_new) * (lam_k - lam_prev)
        lam_prev = lam_k
        t = t_new
    last = QpResult(z=z, lam=y, iterations=cap, residual=res)
    raise MaxIterationsError("dual FISTA reached the iteration cap", best_iterate=last, iterations=cap, residual=res)


# =============================================================================
# ADMM
# =============================================================================


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def _negate(x: np.ndarray) -> np.ndarray:
    return -x


def admm_qp(
    qp: StructuredQp,
    v0,
    lam0,
    rho: float,
    eps_p: float,
    eps_d: float,
    max_iterations: Optional[int] = None,
    callback=None,
) -> AdmmResult:
    """
    ADMM on min J(z) s.t. Gz = b, z = v, v in the box.

    z_{k+1} = solve_eqQP(H + rho I, q + lam_k - rho v_k, b);
    v_{k+1} = clamp(z_{k+1} + lam_k / rho); lam += rho (z - v).
    Exits on ||z_k - v_k||_inf <= eps_p and ||v_k - v_{k-1}||_inf <= eps_d.

    Raises:
        InvalidInputError: If rho <= 0
        MaxIterationsError: If the cap is reached
    """
    if not rho > 0:
        raise InvalidInputError(f"rho must be positive, got {rho}")
    data = qp.eq_data(rho)
    inv_rho = 1.0 / rho

    def z_update(v, lam, rho_):
        return solve_eqQP(data, qp.q + lam - rho_ * v, qp.b).z

    def v_update(z, lam, rho_):
        return solve_boxQP(-rho_ * z - lam, inv_rho, qp.lo, qp.hi)

    ap = AdmmProblem(
        z_update=z_update,
        v_update=v_update,
        C=_identity,
        D=_negate,
        d=np.zeros(qp.n_z),
        rho=rho,
    )
    v0 = as_vector(v0, qp.n_z, "v0")
    return admm_solve(ap, v0, lam0, eps_p, eps_d, max_iterations=max_iterations, callback=callback)


# =============================================================================
# Dual as a composite problem
# =============================================================================


class BandedMetric(SmoothMetric):
    """Metric W = G H^{-1} G' applied through the stored blocks and solve_W."""

    def __init__(self, data: EqQpData):
        self.data = data
        self._diag = None
        self._inv_diag = None
        self._dense = None
        self._chol = None

    @property
    def dim(self) -> int:
        return self.data.structure.m_z

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.apply(e) for e in np.eye(self.dim)])

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.data.W_mul(v)

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        return solve_W(self.data.W_factor, v)


def dual_problem(qp: StructuredQp) -> tuple:
    """
    The QP dual as (CompositeProblem, BandedMetric).

    f(lam) = -psi(lam) = -(1/2 z'Hz + (q - G'lam)'z + b'lam) at z = z(lam),
    grad f(lam) = G z(lam) - b, unconstrained; T(y) = y - W^{-1} grad f(y).
    """
    hinv = 1.0 / qp.hessian_diagonal()
    s = qp.structure
    metric = BandedMetric(qp.eq_data(0.0))

    def primal(lam: np.ndarray) -> np.ndarray:
        return solve_boxQP(qp.q - s.GT_mul(lam), hinv, qp.lo, qp.hi)

    def grad_h(lam: np.ndarray) -> np.ndarray:
        return s.G_mul(primal(lam)) - qp.b

    def eval_f(lam: np.ndarray) -> float:
        z = primal(lam)
        q_lam = qp.q - s.GT_mul(lam)
        return -(0.5 * dot(z, s.H_mul(z)) + dot(q_lam, z) + dot(qp.b, lam))

    def tmap(y: np.ndarray, metric_: SmoothMetric) -> np.ndarray:
        return y - metric_.apply_inv(grad_h(y))

    problem = CompositeProblem(
        dim=qp.m_z, grad_h=grad_h, eval_f=eval_f, tmap=tmap, name="qp-dual"
    )
    return problem, metric


def dual_primal(qp: StructuredQp, lam: np.ndarray) -> np.ndarray:
    """Primal minimizer z(lam) over the box for a dual point lam."""
    hinv = 1.0 / qp.hessian_diagonal()
    return solve_boxQP(qp.q - qp.structure.GT_mul(lam), hinv, qp.lo, qp.hi)
