"""
Sparse MPC ingredients and dedicated solvers.

This module provides:
- build_ingredients: the banded QP (or the MPCT split) of each formulation
- solve_std_fista / solve_std_admm / solve_std_restart for equMPC and laxMPC
- solve_ellip_admm for the MPC with a terminal ellipsoid
- solve_mpct (re-exported driver of the MPCT solver)
- Weight synthesis (Riccati, Lyapunov, LQR gain) and the EADMM penalty bound
- validate_invariant_ellipsoid and admissible_ellipsoid

Decision variables follow the usual sparse ordering
    equ:   (u_0, x_1, u_1, ..., x_{N-1}, u_{N-1})
    lax:   (u_0, x_1, u_1, ..., x_{N-1}, u_{N-1}, x_N)
    ellip: same as lax with x_N in an ellipsoid instead of the box
so the control action is always the first m entries.
"""

from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, block_diag, solve_discrete_are, solve_discrete_lyapunov

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError
from src.core.logging import get_logger
from src.core.numerics import as_vector, norm_inf
from src.schemas.control import EllipsoidValidationReport, LtiModel, MpcVariant, MpcWeights
from src.schemas.solvers import AdmmResult, EadmmResult, QpResult, RestartConfig, RestartScheme
from src.services.fom_core import AdmmProblem, admm_solve
from src.services.mpct import MpctData, solve_mpct_eadmm
from src.services.qp_solvers import StructuredQp, admm_qp, dual_fista_qp, dual_primal, dual_problem
from src.services.restart import restart_solve
from src.services.sparse_kernels import (
    BandedQpStructure,
    Ellipsoid,
    EqQpData,
    ellipsoid_project,
    solve_eqQP,
)

logger = get_logger(__name__)


# =============================================================================
# Ingredients
# =============================================================================


def _block(*mats: np.ndarray):
    """Block-diagonal weight; stored as a vector when every part is diagonal."""
    M = block_diag(*mats)
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        return np.diag(M).copy()
    return M


def _check_psd(name: str, W: np.ndarray) -> None:
    if W.shape[0] != W.shape[1] or not np.allclose(W, W.T):
        raise ConfigurationError(f"{name} must be symmetric", weight=name)
    if np.linalg.eigvalsh(0.5 * (W + W.T))[0] < -1e-12:
        raise ConfigurationError(f"{name} must be positive semidefinite", weight=name)


class MpcIngredients:
    """
    Offline data of one MPC controller.

    Only the repeating blocks are stored. q and b are templates refreshed
    from (x(t), x_r, u_r) at solve time; the banded factors live in the
    cache of the StructuredQp and are shared by every refreshed copy.
    """

    def __init__(
        self,
        variant: MpcVariant,
        model: LtiModel,
        weights: MpcWeights,
        qp: Optional[StructuredQp] = None,
        ellipsoid: Optional[Ellipsoid] = None,
        ellip_data: Optional[EqQpData] = None,
        mpct: Optional[MpctData] = None,
    ):
        self.variant = variant
        self.model = model
        self.weights = weights
        self.qp = qp
        self.ellipsoid = ellipsoid
        self.ellip_data = ellip_data
        self.mpct = mpct

    @property
    def n_z(self) -> int:
        if self.mpct is not None:
            return self.mpct.n_z1 + self.model.n + self.model.m + self.mpct.n_z1
        return self.qp.n_z

    @property
    def m_z(self) -> int:
        if self.mpct is not None:
            return self.mpct.rows
        return self.qp.m_z

    def q_vector(self, x_r, u_r) -> np.ndarray:
        """Linear cost -(R u_r, Q x_r, R u_r, ..., [T x_r])."""
        w = self.weights
        x_r = as_vector(x_r, self.model.n, "x_r")
        u_r = as_vector(u_r, self.model.m, "u_r")
        Ru, Qx = w.R @ u_r, w.Q @ x_r
        parts = [Ru] + [np.concatenate([Qx, Ru])] * (w.N - 1)
        if self.variant != MpcVariant.EQU:
            parts.append(w.T @ x_r)
        return -np.concatenate(parts)

    def b_vector(self, x_t, x_r) -> np.ndarray:
        """Equality right-hand side (-A x(t), 0, ..., 0[, x_r])."""
        n, N = self.model.n, self.weights.N
        b = np.zeros(N * n)
        b[:n] = -self.model.A @ as_vector(x_t, n, "x_t")
        if self.variant == MpcVariant.EQU:
            b[-n:] = as_vector(x_r, n, "x_r")
        return b

    def qp_for(self, x_t, x_r, u_r) -> StructuredQp:
        """The QP of the current sample (shares the factor cache)."""
        if self.qp is None:
            raise ConfigurationError("MPCT ingredients have no single banded QP")
        return self.qp.with_vectors(q=self.q_vector(x_r, u_r), b=self.b_vector(x_t, x_r))

    def control(self, solution: np.ndarray) -> np.ndarray:
        """Control action of a primal solution (z1 for MPCT)."""
        if self.mpct is not None:
            return self.mpct.control(solution)
        return np.asarray(solution)[:self.model.m].copy()


def _banded_layout(model: LtiModel, weights: MpcWeights, variant: MpcVariant):
    n, m, N = model.n, model.m, weights.N
    AB = np.hstack([model.A, model.B])
    shift = np.hstack([-np.eye(n), np.zeros((n, m))])
    R_blk = _block(weights.R)
    QR_blk = _block(weights.Q, weights.R)

    H: List[np.ndarray] = [R_blk] + [QR_blk] * (N - 1)
    Gd: List[np.ndarray] = [model.B] + [AB] * (N - 1)
    Gs: List[Optional[np.ndarray]] = [shift] * (N - 1)
    x_lo, x_hi = model.x_lo, model.x_hi
    lo = [model.u_lo] + [np.concatenate([x_lo, model.u_lo])] * (N - 1)
    hi = [model.u_hi] + [np.concatenate([x_hi, model.u_hi])] * (N - 1)
    if variant == MpcVariant.EQU:
        Gs.append(None)
    else:
        H.append(_block(weights.T))
        Gs.append(-np.eye(n))
        if variant == MpcVariant.LAX:
            lo.append(x_lo)
            hi.append(x_hi)
        else:
            lo.append(np.full(n, -np.inf))
            hi.append(np.full(n, np.inf))
    return H, Gd, Gs, np.concatenate(lo), np.concatenate(hi)


def build_ingredients(
    model: LtiModel,
    weights: MpcWeights,
    variant: MpcVariant,
    ellipsoid: Optional[Ellipsoid] = None,
) -> MpcIngredients:
    """
    Assemble the offline data of a formulation.

    Args:
        model: Prediction model with box bounds
        weights: Cost weights, horizon and penalties
        variant: equ | lax | ellip | mpct
        ellipsoid: Terminal set (ellip only); its center and radius may be
            replaced per solve without refactorization

    Raises:
        ConfigurationError: If a modelling assumption of the variant fails
        InvalidInputError: On inconsistent dimensions
    """
    variant = MpcVariant(variant)
    model.check()
    n, m = model.n, model.m
    for name, W, size in (("Q", weights.Q, n), ("R", weights.R, m), ("T", weights.T, n)):
        if W.shape != (size, size):
            raise InvalidInputError(f"{name} has shape {W.shape}, expected ({size}, {size})")
        _check_psd(name, W)

    if variant == MpcVariant.MPCT:
        if weights.S is None or weights.S.shape != (m, m):
            raise InvalidInputError("MPCT needs an m x m input offset weight S")
        return MpcIngredients(variant, model, weights, mpct=MpctData(model, weights))

    H, Gd, Gs, lo, hi = _banded_layout(model, weights, variant)
    qp = StructuredQp(H, Gd, Gs, np.zeros(sum(np.shape(h)[0] for h in H)), np.zeros(weights.N * n), lo, hi)

    if variant != MpcVariant.ELLIP:
        return MpcIngredients(variant, model, weights, qp=qp)

    if ellipsoid is None:
        raise ConfigurationError("ellipMPC needs a terminal ellipsoid")
    if ellipsoid.dim != n:
        raise InvalidInputError(f"ellipsoid has dimension {ellipsoid.dim}, expected {n}")
    rho = weights.rho_scalar
    if not rho > 0:
        raise InvalidInputError(f"rho must be positive, got {rho}")
    shifted = {}
    blocks = []
    for h in H[:-1]:
        if id(h) not in shifted:
            shifted[id(h)] = h + rho if h.ndim == 1 else h + rho * np.eye(h.shape[0])
        blocks.append(shifted[id(h)])
    blocks.append(weights.T + rho * ellipsoid.P)
    ellip_data = EqQpData(BandedQpStructure(blocks, Gd, Gs))
    return MpcIngredients(variant, model, weights, qp=qp, ellipsoid=ellipsoid, ellip_data=ellip_data)


def _require(ing: MpcIngredients, *variants: MpcVariant) -> None:
    if ing.variant not in variants:
        raise ConfigurationError(
            f"solver does not apply to the {ing.variant.value} formulation",
            variant=ing.variant.value,
        )


# =============================================================================
# Standard formulations
# =============================================================================


def solve_std_fista(
    ing: MpcIngredients,
    x_t,
    x_r,
    u_r,
    lam_warm=None,
    eps: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> QpResult:
    """
    Dual FISTA for equMPC / laxMPC.

    Needs diagonal Q, R and T. The control action is ing.control(result.z).
    """
    _require(ing, MpcVariant.EQU, MpcVariant.LAX)
    qp = ing.qp_for(x_t, x_r, u_r)
    lam = np.zeros(qp.m_z) if lam_warm is None else lam_warm
    return dual_fista_qp(qp, lam, settings.mpc_tolerance if eps is None else eps, max_iterations=max_iterations)


def solve_std_admm(
    ing: MpcIngredients,
    x_t,
    x_r,
    u_r,
    v_warm=None,
    lam_warm=None,
    eps_p: Optional[float] = None,
    eps_d: Optional[float] = None,
    max_iterations: Optional[int] = None,
    callback=None,
) -> AdmmResult:
    """
    ADMM for equMPC / laxMPC with the scalar penalty of the weights.

    The control action is ing.control(result.v).
    """
    _require(ing, MpcVariant.EQU, MpcVariant.LAX)
    qp = ing.qp_for(x_t, x_r, u_r)
    v = np.zeros(qp.n_z) if v_warm is None else v_warm
    lam = np.zeros(qp.n_z) if lam_warm is None else lam_warm
    tol = settings.mpc_tolerance
    return admm_qp(
        qp, v, lam, ing.weights.rho_scalar,
        tol if eps_p is None else eps_p,
        tol if eps_d is None else eps_d,
        max_iterations=max_iterations,
        callback=callback,
    )


def solve_std_restart(
    ing: MpcIngredients,
    x_t,
    x_r,
    u_r,
    scheme: RestartScheme,
    lam_warm=None,
    eps: Optional[float] = None,
    f_star: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> QpResult:
    """
    A restart scheme wrapped around FISTA on the dual of equMPC / laxMPC.

    The exit test is the dual composite gradient norm in the W^{-1} metric.
    """
    _require(ing, MpcVariant.EQU, MpcVariant.LAX)
    qp = ing.qp_for(x_t, x_r, u_r)
    problem, metric = dual_problem(qp)
    lam = np.zeros(qp.m_z) if lam_warm is None else as_vector(lam_warm, qp.m_z, "lam_warm")
    cfg = RestartConfig(
        scheme=RestartScheme(scheme),
        eps=settings.mpc_tolerance if eps is None else eps,
        f_star=f_star,
        fair_exit=True,
        gradient_exit=True,
        max_iterations=max_iterations,
    )
    res = restart_solve(problem, metric, lam, cfg)
    z = dual_primal(qp, res.r_out)
    return QpResult(
        z=z,
        lam=res.r_out,
        iterations=res.k_out,
        residual=norm_inf(qp.structure.G_mul(z) - qp.b),
        restarts=res.j_out,
    )


# =============================================================================
# Terminal ellipsoid
# =============================================================================


def solve_ellip_admm(
    ing: MpcIngredients,
    x_t,
    x_r,
    u_r,
    v_warm=None,
    lam_warm=None,
    eps_p: Optional[float] = None,
    eps_d: Optional[float] = None,
    bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    center=None,
    radius: Optional[float] = None,
    max_iterations: Optional[int] = None,
    callback=None,
) -> AdmmResult:
    """
    ADMM for the MPC with a terminal ellipsoid.

    z = (z_o, z_f) with z_f = x_N. The coupling is C(z - v) = 0 with
    C = blockdiag(I, P^{1/2}); v_o is clamped to the step-wise box and v_f
    is the P-weighted projection of z_f + P^{-1/2} lam_f / rho.

    Args:
        bounds: Step-wise (lo, hi) over z_o; defaults to the global box
        center, radius: Replace the ellipsoid's c (default x_r) and r

    Raises:
        ConfigurationError: If the step-wise bounds leave the global box
        MaxIterationsError: If the cap is reached
    """
    _require(ing, MpcVariant.ELLIP)
    n = ing.model.n
    rho = ing.weights.rho_scalar
    qp = ing.qp_for(x_t, x_r, u_r)
    n_o = qp.n_z - n
    lo, hi = qp.lo[:n_o], qp.hi[:n_o]
    if bounds is not None:
        b_lo = as_vector(bounds[0], n_o, "bounds lo")
        b_hi = as_vector(bounds[1], n_o, "bounds hi")
        if np.any(b_lo < lo) or np.any(b_hi > hi) or np.any(b_lo > b_hi):
            raise ConfigurationError("step-wise bounds must lie inside the global box")
        lo, hi = b_lo, b_hi
    ell = ing.ellipsoid.with_center_radius(
        as_vector(x_r, n, "x_r") if center is None else center,
        radius,
    )
    P, P_half, P_neg_half = ell.P, ell.P_half, ell.P_neg_half
    data = ing.ellip_data
    q, b = qp.q, qp.b
    inv_rho = 1.0 / rho

    def z_update(v, lam, rho_):
        q_hat = q.copy()
        q_hat[:n_o] += lam[:n_o] - rho_ * v[:n_o]
        q_hat[n_o:] += P_half @ lam[n_o:] - rho_ * (P @ v[n_o:])
        return solve_eqQP(data, q_hat, b).z

    def v_update(z, lam, rho_):
        v = np.empty_like(z)
        v[:n_o] = np.clip(z[:n_o] + inv_rho * lam[:n_o], lo, hi)
        v[n_o:] = ellipsoid_project(ell, z[n_o:] + inv_rho * (P_neg_half @ lam[n_o:]))
        return v

    def couple(z):
        out = z.copy()
        out[n_o:] = P_half @ z[n_o:]
        return out

    ap = AdmmProblem(
        z_update=z_update,
        v_update=v_update,
        C=couple,
        D=lambda v: -couple(v),
        d=np.zeros(qp.n_z),
        rho=rho,
    )
    v0 = np.zeros(qp.n_z) if v_warm is None else as_vector(v_warm, qp.n_z, "v_warm")
    lam0 = np.zeros(qp.n_z) if lam_warm is None else lam_warm
    tol = settings.mpc_tolerance
    return admm_solve(
        ap, v0, lam0,
        tol if eps_p is None else eps_p,
        tol if eps_d is None else eps_d,
        max_iterations=max_iterations,
        callback=callback,
    )


def solve_mpct(
    ing: MpcIngredients,
    x_t,
    x_r,
    u_r,
    z2_warm=None,
    z3_warm=None,
    lam_warm=None,
    eps: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> EadmmResult:
    """EADMM for MPCT; the control action is ing.control(result.z1)."""
    _require(ing, MpcVariant.MPCT)
    return solve_mpct_eadmm(ing.mpct, x_t, x_r, u_r, z2_warm, z3_warm, lam_warm, eps, max_iterations)


# =============================================================================
# Weight synthesis
# =============================================================================


def _riccati_fixed_point(A, B, Q, R, tol: float, max_iterations: int) -> np.ndarray:
    P = np.array(Q, dtype=float)
    for _ in range(max_iterations):
        BtP = B.T @ P
        P_new = A.T @ P @ A - (BtP @ A).T @ np.linalg.solve(R + BtP @ B, BtP @ A) + Q
        P_new = 0.5 * (P_new + P_new.T)
        if np.max(np.abs(P_new - P)) <= tol * max(1.0, np.max(np.abs(P_new))):
            return P_new
        P = P_new
    raise ConfigurationError("Riccati iteration did not converge; is (A, B) stabilizable?")


def riccati_terminal_weight(A, B, Q, R, diagonal: bool = True) -> np.ndarray:
    """
    Solution of the discrete algebraic Riccati equation.

    Solved by fixed-point iteration and cross-checked against
    scipy.linalg.solve_discrete_are. With diagonal=True the diagonal
    surrogate T_ii = sum_j |T_ij| is returned (needed by dual FISTA).
    """
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    P = _riccati_fixed_point(A, B, Q, R, settings.riccati_tolerance, settings.riccati_max_iterations)
    try:
        ref = solve_discrete_are(A, B, Q, R)
        if not np.allclose(P, ref, rtol=1e-6, atol=1e-8):
            logger.warning("Riccati fixed point deviates from the Schur solution by %.3g", np.max(np.abs(P - ref)))
    except (LinAlgError, ValueError) as e:
        logger.debug("Schur-based Riccati check skipped: %s", e)
    if diagonal:
        return np.diag(np.sum(np.abs(P), axis=1))
    return P


def lqr_gain(A, B, Q, R) -> np.ndarray:
    """Infinite-horizon gain K of u = K (x - x_r) + u_r."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    R = np.atleast_2d(R)
    P = riccati_terminal_weight(A, B, Q, R, diagonal=False)
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def lyapunov_terminal_weight(A, B, K, Q, R) -> np.ndarray:
    """
    T solving (A + BK)' T (A + BK) - T = -(Q + K'RK).

    Raises:
        ConfigurationError: If A + BK is not Schur stable
    """
    A, B, K = np.atleast_2d(A), np.atleast_2d(B), np.atleast_2d(K)
    Ak = A + B @ K
    if np.max(np.abs(np.linalg.eigvals(Ak))) >= 1.0:
        raise ConfigurationError("A + BK must be Schur stable")
    rhs = np.atleast_2d(Q) + K.T @ np.atleast_2d(R) @ K
    T = rhs.copy()
    for _ in range(settings.riccati_max_iterations):
        T_new = Ak.T @ T @ Ak + rhs
        if np.max(np.abs(T_new - T)) <= settings.riccati_tolerance * max(1.0, np.max(np.abs(T_new))):
            T = T_new
            break
        T = T_new
    else:
        T = solve_discrete_lyapunov(Ak.T, rhs)
    return 0.5 * (T + T.T)


def eadmm_rho_bound(Q, R) -> float:
    """Largest penalty with guaranteed EADMM convergence for MPCT: 6 mu / 17."""
    mu = float(np.linalg.eigvalsh(block_diag(np.atleast_2d(Q), np.atleast_2d(R)))[0])
    if mu <= 0:
        raise ConfigurationError("the bound needs positive definite Q and R")
    return 6.0 * mu / 17.0


# =============================================================================
# Invariant ellipsoids
# =============================================================================


def admissible_ellipsoid(model: LtiModel, K, P, x_r, u_r) -> Ellipsoid:
    """
    Largest E(P, x_r, r) inside the state box on which u = K(x - x_r) + u_r
    respects the input box.

    The radius follows from the support function r ||P^{-1/2} a|| of every
    constraint row a.

    Raises:
        ConfigurationError: If (x_r, u_r) is not strictly inside the boxes
    """
    n = model.n
    x_r = as_vector(x_r, n, "x_r")
    u_r = as_vector(u_r, model.m, "u_r")
    K = np.atleast_2d(K)
    ell = Ellipsoid(P, x_r, 1.0)
    rows = np.vstack([np.eye(n), K])
    center = np.concatenate([x_r, u_r])
    slack = np.minimum(np.concatenate([model.x_hi, model.u_hi]) - center, center - np.concatenate([model.x_lo, model.u_lo]))
    if np.any(slack <= 0):
        raise ConfigurationError("reference must lie strictly inside the bounds")
    support = np.linalg.norm(rows @ ell.P_neg_half, axis=1)
    active = support > 0
    r = float(np.min(slack[active] / support[active]))
    return ell.with_center_radius(r=r)


def validate_invariant_ellipsoid(
    model: LtiModel,
    K,
    ell: Ellipsoid,
    samples: int = 10_000,
    seed: int = 0,
    u_r=None,
    tol: float = 1e-9,
) -> EllipsoidValidationReport:
    """
    Sampling check of admissible invariance of ell under u = K(x - c) + u_r.

    Half the samples lie on the boundary, the rest are uniform in the
    interior. Violations are reported, never raised.
    """
    n, m = model.n, model.m
    K = np.atleast_2d(K)
    u_r = np.zeros(m) if u_r is None else as_vector(u_r, m, "u_r")
    rng = np.random.default_rng(seed)

    d = rng.standard_normal((samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    scale = np.ones(samples)
    inner = samples // 2
    scale[:inner] = rng.random(inner) ** (1.0 / n)
    X = ell.c + ell.r * scale[:, None] * (d @ ell.P_neg_half)
    U = u_r + (X - ell.c) @ K.T
    X_next = X @ model.A.T + U @ model.B.T

    D = X_next - ell.c
    inv_margin = np.einsum("ij,jk,ik->i", D, ell.P, D) - ell.r ** 2
    box = np.maximum.reduce([
        np.max(X - model.x_hi, axis=1),
        np.max(model.x_lo - X, axis=1),
        np.max(U - model.u_hi, axis=1),
        np.max(model.u_lo - U, axis=1),
    ])
    report = EllipsoidValidationReport(
        samples=samples,
        invariance_violations=int(np.sum(inv_margin > tol * max(1.0, ell.r ** 2))),
        admissibility_violations=int(np.sum(box > tol)),
        worst_invariance_margin=float(np.max(inv_margin)) if samples else 0.0,
        worst_constraint_margin=float(np.max(box)) if samples else 0.0,
    )
    if report.violations:
        logger.warning(
            "ellipsoid check: %d invariance and %d admissibility violations over %d samples",
            report.invariance_violations, report.admissibility_violations, samples,
        )
    return report
