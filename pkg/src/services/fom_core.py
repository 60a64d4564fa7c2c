"""
Composite first-order methods.

This module provides:
- SmoothMetric: the positive-definite matrix R of the descent bound
- CompositeProblem plus factories for quadratic, box-constrained and weighted-l1 families
- composite_gradient and the momentum sequence t_next
- prox_grad_solve, fista_solve and mfista_solve
- Step-wise iterators (ProxGradIterator, FistaIterator, MfistaIterator) reused by the restart schemes
- BestIterate: lowest-f iterate, attached to iteration-cap errors
- AdmmProblem / EadmmProblem with admm_solve and eadmm_solve
"""

import math
from typing import Any, Callable, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError, MaxIterationsError
from src.core.logging import get_logger
from src.core.numerics import as_vector, dot, norm_inf
from src.schemas.solvers import AdmmResult, EadmmResult, ExitPoint, FomReport, IterationRecord

logger = get_logger(__name__)

Coupling = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


# =============================================================================
# Metric
# =============================================================================


class SmoothMetric:
    """
    Symmetric positive-definite metric R, diagonal or dense.

    Diagonal metrics are stored as a vector; dense ones keep a Cholesky
    factor for the inverse action. Instances are immutable.
    """

    def __init__(self, R):
        arr = np.asarray(R, dtype=float)
        self._diag: Optional[np.ndarray] = None
        self._inv_diag: Optional[np.ndarray] = None
        self._dense: Optional[np.ndarray] = None
        self._chol = None

        if arr.ndim == 1:
            if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise InvalidInputError("diagonal metric needs finite positive entries")
            self._diag = arr.copy()
            self._inv_diag = 1.0 / arr
        elif arr.ndim == 2:
            if arr.shape[0] != arr.shape[1] or arr.size == 0:
                raise InvalidInputError(f"metric must be square, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError("metric contains non-finite entries")
            scale = max(float(np.max(np.abs(arr))), 1.0)
            if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-12 * scale):
                raise InvalidInputError("metric must be symmetric")
            try:
                self._chol = cho_factor(arr, lower=False)
            except LinAlgError as e:
                raise InvalidInputError(f"metric is not positive definite: {e}")
            self._dense = arr.copy()
        else:
            raise InvalidInputError(f"metric must be a vector or a matrix, got ndim={arr.ndim}")

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "SmoothMetric":
        """scale * I."""
        return cls(np.full(dim, float(scale)))

    @classmethod
    def gershgorin(cls, H: np.ndarray) -> "SmoothMetric":
        """
        Diagonal metric R_ii = sum_j |H_ij|, so that R - H is diagonally dominant.

        Zero rows (e.g. an all-zero Lasso column) get R_ii = 1.
        """
        row_sums = np.sum(np.abs(np.asarray(H, dtype=float)), axis=1)
        row_sums[row_sums <= 0.0] = 1.0
        return cls(row_sums)

    @property
    def dim(self) -> int:
        return int(self._diag.size if self._diag is not None else self._dense.shape[0])

    @property
    def is_diagonal(self) -> bool:
        return self._diag is not None

    @property
    def diagonal(self) -> np.ndarray:
        """Diagonal of R; only defined for diagonal metrics."""
        if self._diag is None:
            raise ConfigurationError("operation requires a diagonal metric")
        return self._diag

    @property
    def inverse_diagonal(self) -> np.ndarray:
        if self._inv_diag is None:
            raise ConfigurationError("operation requires a diagonal metric")
        return self._inv_diag

    def matrix(self) -> np.ndarray:
        """Dense copy of R."""
        if self._diag is not None:
            return np.diag(self._diag)
        return self._dense.copy()

    def apply(self, v: np.ndarray) -> np.ndarray:
        """R v."""
        if self._diag is not None:
            return self._diag * v
        return self._dense @ v

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """R^{-1} v."""
        if self._inv_diag is not None:
            return self._inv_diag * v
        return cho_solve(self._chol, v)

    def norm(self, v: np.ndarray) -> float:
        """||v||_R."""
        return math.sqrt(max(dot(v, self.apply(v)), 0.0))

    def dual_norm(self, v: np.ndarray) -> float:
        """||v||_{R^{-1}}."""
        return math.sqrt(max(dot(v, self.apply_inv(v)), 0.0))


# =============================================================================
# Composite problems
# =============================================================================


class CompositeProblem(BaseModel):
    """
    f = Psi + h over a set Z, described by the handles the methods need.

    tmap(y, R) must return the exact minimizer of
    <grad h(y), z - y> + 1/2 ||z - y||_R^2 + Psi(z) over Z.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int = Field(gt=0, description="Number of decision variables n_z")
    grad_h: Callable[[np.ndarray], np.ndarray]
    eval_f: Callable[[np.ndarray], float]
    tmap: Callable[[np.ndarray, SmoothMetric], np.ndarray]
    name: str = Field(default="composite")


def quadratic_problem(H, q, name: str = "quadratic") -> CompositeProblem:
    """Unconstrained f(z) = 1/2 z'Hz + q'z; T(y) = y - R^{-1}(Hy + q)."""
    H = np.asarray(H, dtype=float)
    q = as_vector(q, H.shape[0], "q")

    def grad_h(z: np.ndarray) -> np.ndarray:
        return H @ z + q

    def eval_f(z: np.ndarray) -> float:
        return 0.5 * dot(z, H @ z) + dot(q, z)

    def tmap(y: np.ndarray, metric: SmoothMetric) -> np.ndarray:
        return y - metric.apply_inv(grad_h(y))

    return CompositeProblem(dim=q.size, grad_h=grad_h, eval_f=eval_f, tmap=tmap, name=name)


def box_quadratic_problem(H, q, lo, hi, name: str = "box-quadratic") -> CompositeProblem:
    """
    1/2 z'Hz + q'z over lo <= z <= hi.

    The T-map is a clamped gradient step and is exact only for diagonal metrics.
    """
    H = np.asarray(H, dtype=float)
    q = as_vector(q, H.shape[0], "q")
    lo = np.broadcast_to(np.asarray(lo, dtype=float), q.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), q.shape).copy()
    if np.any(lo > hi):
        raise InvalidInputError("box bounds must satisfy lo <= hi")

    def grad_h(z: np.ndarray) -> np.ndarray:
        return H @ z + q

    def eval_f(z: np.ndarray) -> float:
        if np.any(z < lo) or np.any(z > hi):
            return math.inf
        return 0.5 * dot(z, H @ z) + dot(q, z)

    def tmap(y: np.ndarray, metric: SmoothMetric) -> np.ndarray:
        step = y - metric.inverse_diagonal * grad_h(y)
        return np.clip(step, lo, hi)

    return CompositeProblem(dim=q.size, grad_h=grad_h, eval_f=eval_f, tmap=tmap, name=name)


def soft_threshold(v: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Componentwise shrinkage sign(v) * max(|v| - tau, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def lasso_problem(A, b, w, name: str = "lasso") -> CompositeProblem:
    """
    Weighted Lasso 1/(2N) ||Az - b||^2 + ||diag(w) z||_1 with N = rows of A.

    The T-map is a gradient step followed by shrinkage; it needs a diagonal metric.
    """
    A = np.asarray(A, dtype=float)
    rows, cols = A.shape
    b = as_vector(b, rows, "b")
    w = as_vector(w, cols, "w")
    if np.any(w < 0):
        raise InvalidInputError("Lasso weights must be non-negative")
    inv_rows = 1.0 / rows

    def grad_h(z: np.ndarray) -> np.ndarray:
        return inv_rows * (A.T @ (A @ z - b))

    def eval_f(z: np.ndarray) -> float:
        res = A @ z - b
        return 0.5 * inv_rows * dot(res, res) + math.fsum(w * np.abs(z))

    def tmap(y: np.ndarray, metric: SmoothMetric) -> np.ndarray:
        inv_r = metric.inverse_diagonal
        return soft_threshold(y - inv_r * grad_h(y), w * inv_r)

    return CompositeProblem(dim=cols, grad_h=grad_h, eval_f=eval_f, tmap=tmap, name=name)


class CompositeGradient(NamedTuple):
    T: np.ndarray
    G: np.ndarray
    gnorm: float


def composite_gradient(problem: CompositeProblem, metric: SmoothMetric, y) -> CompositeGradient:
    """
    Evaluate the composite gradient mapping at y.

    Returns:
        T(y), G(y) = R (y - T(y)) and ||G(y)||_{R^{-1}} = ||y - T(y)||_R

    Raises:
        InvalidInputError: If y has the wrong dimension or non-finite entries
    """
    y = as_vector(y, problem.dim, "y")
    T = problem.tmap(y, metric)
    diff = y - T
    return CompositeGradient(T=T, G=metric.apply(diff), gnorm=metric.norm(diff))


def t_next(t_prev: float) -> float:
    """Momentum sequence t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2."""
    if not t_prev >= 1.0:
        raise InvalidInputError(f"t_prev must be >= 1, got {t_prev}")
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev * t_prev))


# =============================================================================
# Step-wise iterators
# =============================================================================


class FistaStep(NamedTuple):
    """
    Result of one iterator step.

    gnorm_prev is ||y_{k-1} - T(y_{k-1})||_R, available for free.
    v is the T-image T(y_{k-1}); it differs from z only for MFISTA.
    """

    k: int
    z: np.ndarray
    z_prev: np.ndarray
    y_prev: np.ndarray
    v: np.ndarray
    gnorm_prev: float
    f: float


class BestIterate:
    """Lowest-f iterate offered so far; f is evaluated when given as nan."""

    def __init__(self, problem: CompositeProblem):
        self.problem = problem
        self.z: Optional[np.ndarray] = None
        self.f = math.inf

    def offer(self, z: np.ndarray, f: float = math.nan) -> None:
        if math.isnan(f):
            f = self.problem.eval_f(z)
        if self.z is None or f < self.f:
            self.z = z
            self.f = f


class ProxGradIterator:
    """z_k = T(z_{k-1})."""

    def __init__(self, problem: CompositeProblem, metric: SmoothMetric, z0: np.ndarray, track_f: bool = False):
        self.problem = problem
        self.metric = metric
        self.track_f = track_f
        self.z = z0
        self.y = z0
        self.t = 1.0
        self.k = 0
        self.f = problem.eval_f(z0) if track_f else math.nan

    def step(self, tz: Optional[np.ndarray] = None) -> FistaStep:
        z_prev = self.z
        z = self.problem.tmap(z_prev, self.metric) if tz is None else tz
        gnorm_prev = self.metric.norm(z_prev - z)
        self.z = z
        self.y = z
        self.k += 1
        if self.track_f:
            self.f = self.problem.eval_f(z)
        return FistaStep(self.k, z, z_prev, z_prev, z, gnorm_prev, self.f)


class FistaIterator:
    """
    FISTA recursion from y0 = z0, t0 = 1.

    z0 is used as given; fista_solve passes T(z) to match the usual
    initialization. step() accepts a precomputed T(y_{k-1}) so callers that
    already evaluated it (the gradient restart scheme) do not pay twice.
    """

    def __init__(self, problem: CompositeProblem, metric: SmoothMetric, z0: np.ndarray, track_f: bool = False):
        self.problem = problem
        self.metric = metric
        self.track_f = track_f
        self.z = z0
        self.y = z0
        self.t = 1.0
        self.k = 0
        self.f = problem.eval_f(z0) if track_f else math.nan

    def step(self, tz: Optional[np.ndarray] = None) -> FistaStep:
        y_prev, z_prev = self.y, self.z
        z = self.problem.tmap(y_prev, self.metric) if tz is None else tz
        gnorm_prev = self.metric.norm(y_prev - z)
        t = t_next(self.t)
        self.y = z + ((self.t - 1.0) / t) * (z - z_prev)
        self.z = z
        self.t = t
        self.k += 1
        if self.track_f:
            self.f = self.problem.eval_f(z)
        return FistaStep(self.k, z, z_prev, y_prev, z, gnorm_prev, self.f)

    def reset(self, z0: np.ndarray) -> None:
        """Restart the momentum at z0 without resetting the iteration counter."""
        self.z = z0
        self.y = z0
        self.t = 1.0
        if self.track_f:
            self.f = self.problem.eval_f(z0)


class MfistaIterator:
    """Monotone FISTA: z_k keeps the better of T(y_{k-1}) and z_{k-1}."""

    def __init__(self, problem: CompositeProblem, metric: SmoothMetric, z0: np.ndarray):
        self.problem = problem
        self.metric = metric
        self.z = z0
        self.y = z0
        self.t = 1.0
        self.k = 0
        self.f = problem.eval_f(z0)

    def step(self, tv: Optional[np.ndarray] = None) -> FistaStep:
        y_prev, z_prev, f_prev = self.y, self.z, self.f
        v = self.problem.tmap(y_prev, self.metric) if tv is None else tv
        gnorm_prev = self.metric.norm(y_prev - v)
        f_v = self.problem.eval_f(v)
        if f_v <= f_prev:
            z, f = v, f_v
        else:
            z, f = z_prev, f_prev
        t = t_next(self.t)
        self.y = z + (self.t / t) * (v - z) + ((self.t - 1.0) / t) * (z - z_prev)
        self.z = z
        self.f = f
        self.t = t
        self.k += 1
        return FistaStep(self.k, z, z_prev, y_prev, v, gnorm_prev, f)


# =============================================================================
# Solvers
# =============================================================================


def _resolve_exit(exit_at) -> ExitPoint:
    return ExitPoint(exit_at if exit_at is not None else settings.fom_exit_at)


def _run_to_tolerance(
    iterator,
    eps: float,
    exit_at: ExitPoint,
    cap: int,
    trace: bool,
    label: str,
) -> FomReport:
    problem, metric = iterator.problem, iterator.metric
    records: Optional[List[IterationRecord]] = [] if trace else None
    gnorm = math.inf
    best = BestIterate(problem)
    best.offer(iterator.z, iterator.f)
    while iterator.k < cap:
        st = iterator.step()
        best.offer(st.z, st.f)
        if exit_at == ExitPoint.AT_YK_MINUS1:
            gnorm = st.gnorm_prev
        else:
            gnorm = metric.norm(st.z - problem.tmap(st.z, metric))
        if records is not None:
            f_value = st.f if not math.isnan(st.f) else problem.eval_f(st.z)
            records.append(IterationRecord(k=st.k, f_value=f_value, gnorm=gnorm, t=iterator.t))
        if gnorm <= eps:
            logger.debug("%s on %s converged in %d iterations", label, problem.name, st.k)
            return FomReport(solution=st.z, iterations=st.k, final_residual=gnorm, trace=records)
    raise MaxIterationsError(
        f"{label} reached the iteration cap",
        best_iterate=best.z,
        iterations=iterator.k,
        residual=gnorm,
    )


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")


def prox_grad_solve(
    problem: CompositeProblem,
    metric: SmoothMetric,
    z0,
    eps: float,
    exit_at: Optional[str] = None,
    max_iterations: Optional[int] = None,
    trace: bool = False,
) -> FomReport:
    """
    Proximal gradient method.

    With the default exit point the test reuses ||z_{k-1} - z_k||_R, which is
    ||G(z_{k-1})|| and costs nothing extra.

    Raises:
        InvalidInputError: On bad dimensions or eps <= 0
        MaxIterationsError: If the cap is reached; carries the last iterate
    """
    _check_eps(eps)
    z0 = as_vector(z0, problem.dim, "z0")
    it = ProxGradIterator(problem, metric, z0, track_f=trace)
    return _run_to_tolerance(
        it, eps, _resolve_exit(exit_at), max_iterations or settings.max_iterations, trace, "prox-grad"
    )


def fista_solve(
    problem: CompositeProblem,
    metric: SmoothMetric,
    z,
    eps: float,
    exit_at: Optional[str] = None,
    max_iterations: Optional[int] = None,
    trace: bool = False,
) -> FomReport:
    """
    FISTA started at y0 = z0 = T(z), t0 = 1.

    Args:
        problem: Composite problem
        metric: Smoothness metric R
        z: Initial point
        eps: Exit tolerance on ||G||_{R^{-1}}
        exit_at: "at_yk_minus1" (reuse G(y_{k-1})) or "at_zk"; defaults to settings
        max_iterations: Iteration cap; defaults to settings
        trace: Record f(z_k), the tested norm and t_k per iteration

    Returns:
        FomReport with the final z_k and k_out

    Raises:
        InvalidInputError: On bad dimensions or eps <= 0
        MaxIterationsError: If the cap is reached
    """
    _check_eps(eps)
    z = as_vector(z, problem.dim, "z")
    it = FistaIterator(problem, metric, problem.tmap(z, metric), track_f=trace)
    return _run_to_tolerance(
        it, eps, _resolve_exit(exit_at), max_iterations or settings.max_iterations, trace, "FISTA"
    )


def mfista_solve(
    problem: CompositeProblem,
    metric: SmoothMetric,
    z,
    eps: float,
    exit_at: Optional[str] = None,
    max_iterations: Optional[int] = None,
    trace: bool = False,
) -> FomReport:
    """
    Monotone FISTA started at y0 = z0 = z.

    The traced f(z_k) is non-increasing by construction.
    """
    _check_eps(eps)
    z = as_vector(z, problem.dim, "z")
    if not math.isfinite(problem.eval_f(z)):
        raise InvalidInputError("MFISTA needs a starting point in dom f")
    it = MfistaIterator(problem, metric, z)
    return _run_to_tolerance(
        it, eps, _resolve_exit(exit_at), max_iterations or settings.max_iterations, trace, "MFISTA"
    )


# =============================================================================
# ADMM
# =============================================================================


def as_operator(C: Coupling) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a matrix as a matvec; callables pass through."""
    if callable(C):
        return C
    mat = np.asarray(C, dtype=float)
    return lambda x: mat @ x


def _check_rho(rho) -> Any:
    arr = np.asarray(rho, dtype=float)
    if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidInputError("penalty rho must be positive")
    return float(arr) if arr.ndim == 0 else arr


def _check_couplings(couplings: Sequence[Coupling], rows: int) -> None:
    for i, C in enumerate(couplings, start=1):
        if callable(C):
            continue
        shape = np.shape(C)
        if len(shape) != 2 or shape[0] != rows:
            raise InvalidInputError(
                f"coupling {i} has shape {shape}, expected {rows} rows", rows=rows
            )


class AdmmProblem(BaseModel):
    """
    min theta1(z) + theta2(v) s.t. Cz + Dv = d.

    z_update(v, lam, rho) and v_update(z, lam, rho) minimize the augmented
    Lagrangian over their block. C and D are matrices or matvec callables.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    z_update: Callable[..., np.ndarray]
    v_update: Callable[..., np.ndarray]
    C: Any
    D: Any
    d: np.ndarray
    rho: Any = Field(description="Scalar or per-row penalty")


class EadmmProblem(BaseModel):
    """
    min theta1(z1) + theta2(z2) + theta3(z3) s.t. C1 z1 + C2 z2 + C3 z3 = d.

    Updates receive the other two blocks, the multiplier and rho.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    z1_update: Callable[..., np.ndarray]
    z2_update: Callable[..., np.ndarray]
    z3_update: Callable[..., np.ndarray]
    C1: Any
    C2: Any
    C3: Any
    d: np.ndarray


def admm_solve(
    ap: AdmmProblem,
    v0,
    lam0,
    eps_p: float,
    eps_d: float,
    max_iterations: Optional[int] = None,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray, np.ndarray], None]] = None,
) -> AdmmResult:
    """
    Two-block ADMM.

    Exits when r_p = ||Cz_k + Dv_k - d||_inf <= eps_p and
    r_d = ||v_k - v_{k-1}||_inf <= eps_d.

    Raises:
        InvalidInputError: On non-positive tolerances or rho, or mismatched couplings
        MaxIterationsError: If the cap is reached; best_iterate is the last AdmmResult
    """
    if not (eps_p > 0 and eps_d > 0):
        raise InvalidInputError("ADMM tolerances must be positive")
    rho = _check_rho(ap.rho)
    d = as_vector(ap.d, name="d")
    _check_couplings([ap.C, ap.D], d.size)
    if np.ndim(rho) == 1 and np.size(rho) != d.size:
        raise InvalidInputError("per-row rho must match the coupling rows")
    C, D = as_operator(ap.C), as_operator(ap.D)
    v = as_vector(v0, name="v0")
    lam = as_vector(lam0, d.size, "lam0")

    cap = max_iterations or settings.max_iterations
    r_p = r_d = math.inf
    z = v
    for k in range(1, cap + 1):
        z = ap.z_update(v, lam, rho)
        v_prev = v
        v = ap.v_update(z, lam, rho)
        r = C(z) + D(v) - d
        if r.size != d.size:
            raise InvalidInputError(f"coupling residual has length {r.size}, expected {d.size}")
        lam = lam + rho * r
        r_p = norm_inf(r)
        r_d = norm_inf(v - v_prev)
        if callback is not None:
            callback(k, z, v, lam)
        if r_p <= eps_p and r_d <= eps_d:
            return AdmmResult(z=z, v=v, lam=lam, iterations=k, r_p=r_p, r_d=r_d)

    last = AdmmResult(z=z, v=v, lam=lam, iterations=cap, r_p=r_p, r_d=r_d)
    raise MaxIterationsError("ADMM reached the iteration cap", best_iterate=last, iterations=cap, residual=r_p)


def eadmm_solve(
    ap: EadmmProblem,
    z2_0,
    z3_0,
    lam0,
    rho,
    eps_p: float,
    eps_d: float,
    max_iterations: Optional[int] = None,
) -> EadmmResult:
    """
    Extended (three-block) ADMM with sequential block minimization.

    Exits when ||sum C_i z_i - d||_inf <= eps_p and both
    ||z2_k - z2_{k-1}||_inf and ||z3_k - z3_{k-1}||_inf are <= eps_d.

    Raises:
        InvalidInputError: On non-positive rho or tolerances, or mismatched couplings
        MaxIterationsError: If the cap is reached
    """
    if not (eps_p > 0 and eps_d > 0):
        raise InvalidInputError("EADMM tolerances must be positive")
    rho = _check_rho(rho)
    d = as_vector(ap.d, name="d")
    _check_couplings([ap.C1, ap.C2, ap.C3], d.size)
    C1, C2, C3 = as_operator(ap.C1), as_operator(ap.C2), as_operator(ap.C3)
    z2 = as_vector(z2_0, name="z2_0")
    z3 = as_vector(z3_0, name="z3_0")
    lam = as_vector(lam0, d.size, "lam0")

    cap = max_iterations or settings.max_iterations
    r_p = r_d = math.inf
    z1 = None
    for k in range(1, cap + 1):
        z1 = ap.z1_update(z2, z3, lam, rho)
        z2_new = ap.z2_update(z1, z3, lam, rho)
        z3_new = ap.z3_update(z1, z2_new, lam, rho)
        r = C1(z1) + C2(z2_new) + C3(z3_new) - d
        if r.size != d.size:
            raise InvalidInputError(f"coupling residual has length {r.size}, expected {d.size}")
        lam = lam + rho * r
        r_p = norm_inf(r)
        r_d = max(norm_inf(z2_new - z2), norm_inf(z3_new - z3))
        z2, z3 = z2_new, z3_new
        if r_p <= eps_p and r_d <= eps_d:
            return EadmmResult(z1=z1, z2=z2, z3=z3, lam=lam, iterations=k, r_p=r_p, r_d=r_d)

    last = EadmmResult(z1=z1, z2=z2, z3=z3, lam=lam, iterations=cap, r_p=r_p, r_d=r_d)
    raise MaxIterationsError("EADMM reached the iteration cap", best_iterate=last, iterations=cap, residual=r_p)
