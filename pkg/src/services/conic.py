"""
Small dense conic programs solved by operator-splitting ADMM.

This module provides:
- soc_project: closed-form projection onto {(s, t) : ||s|| <= t}
- ConeProgram: min 1/2 x'Px + q'x s.t. Ax in C, with C a product of an
  equality set, a box and shifted three-dimensional second-order cones
- conic_admm: ADMM on (x, v = Ax) with a cached LU factorization of the
  quasi-definite KKT matrix

The programs handled here are small (tens to a few hundred variables), so
the KKT system is dense and factorized once per (rho, sigma).
"""

from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from src.core.config import settings
from src.core.exceptions import InvalidInputError, MaxIterationsError
from src.core.logging import get_logger
from src.core.numerics import as_vector, dot, norm_inf
from src.schemas.solvers import AdmmResult

logger = get_logger(__name__)

# Equality rows use a stiffer penalty than inequality rows.
EQUALITY_RHO_SCALE = 1e3


def soc_project(s, t: float) -> Tuple[np.ndarray, float]:
    """
    Euclidean projection of (s, t) onto the second-order cone.

    Returns (s, t) when ||s|| <= t, the origin when ||s|| <= -t and
    1/2 (1 + t/||s||) (s, ||s||) otherwise.
    """
    s = np.asarray(s, dtype=float)
    ns = float(np.linalg.norm(s))
    if ns <= t:
        return s.copy(), float(t)
    if ns <= -t:
        return np.zeros_like(s), 0.0
    a = 0.5 * (1.0 + t / ns)
    return a * s, a * ns


class ConeProgram:
    """
    min 1/2 x'Px + q'x  s.t.  v = Ax,  v in C.

    Rows of A are grouped as
        [ n_eq equality rows (v = b_eq) | box rows (lo <= v <= hi) |
          3 rows per cone (v1, v2, v3) with ||(v1, v2)|| <= v3 + shift ].
    P, A and the row grouping never change between closed-loop samples;
    with_vectors() swaps q and b_eq and shares the factor cache.
    """

    def __init__(
        self,
        P,
        q,
        A,
        n_eq: int,
        b_eq,
        lo,
        hi,
        soc_shift,
        _cache: Optional[Dict[Tuple[float, float], tuple]] = None,
    ):
        self.P = np.asarray(P, dtype=float)
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.P.shape[0]
        if self.P.shape != (n, n) or self.A.shape[1] != n:
            raise InvalidInputError(f"P {self.P.shape} and A {self.A.shape} are inconsistent")
        self.q = as_vector(q, n, "q")
        self.n_eq = int(n_eq)
        self.b_eq = as_vector(b_eq, self.n_eq, "b_eq")
        self.lo = np.asarray(lo, dtype=float).reshape(-1)
        self.hi = np.asarray(hi, dtype=float).reshape(-1)
        self.soc_shift = np.asarray(soc_shift, dtype=float).reshape(-1)
        if self.lo.size != self.hi.size or np.any(self.lo > self.hi):
            raise InvalidInputError("box rows need matching lo <= hi")
        if self.A.shape[0] != self.n_eq + self.lo.size + 3 * self.soc_shift.size:
            raise InvalidInputError("row count of A does not match the cone product")
        self._cache: Dict[Tuple[float, float], tuple] = {} if _cache is None else _cache

    @property
    def n_x(self) -> int:
        return self.P.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cones(self) -> int:
        return self.soc_shift.size

    def with_vectors(self, q=None, b_eq=None) -> "ConeProgram":
        return ConeProgram(
            self.P, self.q if q is None else q, self.A, self.n_eq,
            self.b_eq if b_eq is None else b_eq,
            self.lo, self.hi, self.soc_shift, _cache=self._cache,
        )

    def row_rho(self, rho: float) -> np.ndarray:
        r = np.full(self.n_rows, float(rho))
        r[:self.n_eq] *= EQUALITY_RHO_SCALE
        return r

    def kkt(self, rho: float, sigma: float):
        """LU factors of [[P + sigma I, A'], [A, -diag(1/rho)]], computed on first use."""
        key = (float(rho), float(sigma))
        entry = self._cache.get(key)
        if entry is None:
            n, m = self.n_x, self.n_rows
            r = self.row_rho(rho)
            K = np.zeros((n + m, n + m))
            K[:n, :n] = self.P + sigma * np.eye(n)
            K[:n, n:] = self.A.T
            K[n:, :n] = self.A
            K[n:, n:] = -np.diag(1.0 / r)
            entry = (lu_factor(K), r)
            self._cache[key] = entry
            logger.debug("factorized conic KKT (n=%d, rows=%d, rho=%g)", n, m, rho)
        return entry

    def project(self, v: np.ndarray) -> np.ndarray:
        """Projection onto C."""
        out = np.empty_like(v)
        e, b = self.n_eq, self.n_eq + self.lo.size
        out[:e] = self.b_eq
        out[e:b] = np.clip(v[e:b], self.lo, self.hi)
        cones = v[b:].reshape(-1, 3)
        proj = out[b:].reshape(-1, 3)
        for i, (v1, v2, v3) in enumerate(cones):
            c = self.soc_shift[i]
            s, t = soc_project((v1, v2), v3 + c)
            proj[i, :2] = s
            proj[i, 2] = t - c
        return out

    def objective(self, x: np.ndarray) -> float:
        return 0.5 * dot(x, self.P @ x) + dot(self.q, x)

    def cone_violation(self, x: np.ndarray) -> float:
        """Largest violation of the constraints at x (0 when feasible)."""
        v = self.A @ x
        e, b = self.n_eq, self.n_eq + self.lo.size
        worst = norm_inf(v[:e] - self.b_eq)
        if b > e:
            worst = max(worst, float(np.max(np.maximum(self.lo - v[e:b], v[e:b] - self.hi), initial=0.0)))
        cones = v[b:].reshape(-1, 3)
        if cones.size:
            gap = np.hypot(cones[:, 0], cones[:, 1]) - cones[:, 2] - self.soc_shift
            worst = max(worst, float(np.max(gap, initial=0.0)))
        return worst


def conic_admm(
    prog: ConeProgram,
    x0=None,
    v0=None,
    y0=None,
    eps_p: Optional[float] = None,
    eps_d: Optional[float] = None,
    rho: Optional[float] = None,
    sigma: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> AdmmResult:
    """
    Solve a ConeProgram.

    Per iteration: one KKT solve for (x~, nu), v~ = v + (nu - y)/rho,
    v+ = Proj_C(v~ + y/rho), y+ = y + rho (v~ - v+). Exits when
    ||Ax - v||_inf <= eps_p and ||Px + q + A'y||_inf <= eps_d.

    Returns:
        AdmmResult with z = x, v = the cone copy and lam = y

    Raises:
        InvalidInputError: On non-positive tolerances or penalties
        MaxIterationsError: If the cap is reached; best_iterate is the last AdmmResult
    """
    eps_p = settings.hmpc_tolerance if eps_p is None else eps_p
    eps_d = settings.hmpc_tolerance if eps_d is None else eps_d
    rho = settings.hmpc_rho if rho is None else rho
    sigma = settings.hmpc_sigma if sigma is None else sigma
    if not (eps_p > 0 and eps_d > 0):
        raise InvalidInputError("conic ADMM tolerances must be positive")
    if not (rho > 0 and sigma > 0):
        raise InvalidInputError("conic ADMM penalties must be positive")

    n, m = prog.n_x, prog.n_rows
    x = np.zeros(n) if x0 is None else as_vector(x0, n, "x0")
    v = prog.project(prog.A @ x) if v0 is None else as_vector(v0, m, "v0")
    y = np.zeros(m) if y0 is None else as_vector(y0, m, "y0")
    factor, r = prog.kkt(rho, sigma)
    inv_r = 1.0 / r

    cap = max_iterations or settings.hmpc_max_iterations
    r_p = r_d = float("inf")
    rhs = np.empty(n + m)
    for k in range(1, cap + 1):
        rhs[:n] = sigma * x - prog.q
        rhs[n:] = v - inv_r * y
        sol = lu_solve(factor, rhs)
        x, nu = sol[:n], sol[n:]
        v_tilde = v + inv_r * (nu - y)
        v = prog.project(v_tilde + inv_r * y)
        y = y + r * (v_tilde - v)
        r_p = norm_inf(prog.A @ x - v)
        r_d = norm_inf(prog.P @ x + prog.q + prog.A.T @ y)
        if r_p <= eps_p and r_d <= eps_d:
            return AdmmResult(z=x, v=v, lam=y, iterations=k, r_p=r_p, r_d=r_d)

    last = AdmmResult(z=x, v=v, lam=y, iterations=cap, r_p=r_p, r_d=r_d)
    raise MaxIterationsError("conic ADMM reached the iteration cap", best_iterate=last, iterations=cap, residual=r_p)
