"""
Harmonic MPC.

This module provides:
- harmonic_eval / harmonic_rotate / harmonic_check: algebra of the
  single-harmonic artificial reference
- HmpcLayout / build_hmpc: assembly of the second-order cone program
- solve_hmpc: conic ADMM solve returning an HmpcSolution
- shift_solution: the feasible successor used for recursive feasibility
- optimal_artificial_reference: the admissible steady state the closed
  loop converges to
- HmpcController: closed-loop wrapper with warm start and shift fallback

Decision vector layout:
    [ x_0 .. x_N | u_0 .. u_{N-1} | x_e x_s x_c | u_e u_s u_c ]
"""

import math
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import block_diag

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError, MaxIterationsError
from src.core.logging import get_logger
from src.core.numerics import as_vector, norm_inf
from src.schemas.control import (
    HarmonicCheckReport,
    HarmonicReference,
    HmpcProblem,
    HmpcSolution,
    LtiModel,
)
from src.services.conic import ConeProgram, conic_admm
from src.services.qp_solvers import StructuredQp, admm_qp
from src.services.simulation import ControllerStep

logger = get_logger(__name__)

# Zero-order-hold bound on the base frequency.
MAX_BASE_FREQUENCY = math.pi / 2


# =============================================================================
# Harmonic reference algebra
# =============================================================================


def harmonic_eval(ref: HarmonicReference, j: int) -> Tuple[np.ndarray, np.ndarray]:
    """(x_h(j), u_h(j)); at j = N this is (x_e + x_c, u_e + u_c)."""
    phase = ref.w * (j - ref.N)
    s, c = math.sin(phase), math.cos(phase)
    return ref.x_e + s * ref.x_s + c * ref.x_c, ref.u_e + s * ref.u_s + c * ref.u_c


def harmonic_rotate(v_s, v_c, w: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advance the sine/cosine pair by one sample.

    v_s+ = v_s cos w - v_c sin w,  v_c+ = v_s sin w + v_c cos w.
    Each component keeps its amplitude sqrt(v_s_i^2 + v_c_i^2).

    Raises:
        InvalidInputError: If the two vectors differ in length
    """
    v_s = np.asarray(v_s, dtype=float)
    v_c = np.asarray(v_c, dtype=float)
    if v_s.shape != v_c.shape:
        raise InvalidInputError(f"sine and cosine parts differ in shape: {v_s.shape} vs {v_c.shape}")
    s, c = math.sin(w), math.cos(w)
    return v_s * c - v_c * s, v_s * s + v_c * c


def _band_gap(y, y_lo, y_hi) -> float:
    gap = np.maximum(y_lo - y, y - y_hi)
    return float(np.max(gap, initial=0.0))


def harmonic_check(
    ref: HarmonicReference,
    problem: HmpcProblem,
    j_range: Optional[Tuple[int, int]] = None,
) -> HarmonicCheckReport:
    """
    Worst residuals of a harmonic reference against the model.

    Checks the steady and rotation equations, the cone inequalities on
    (y_e, y_s, y_c), and sweeps j over j_range (default N-100..N+100) for
    the one-step dynamics residual and the band y_lo <= E x_h + F u_h <= y_hi.
    """
    mdl = problem.model
    A, B = mdl.A, mdl.B
    E, F, y_lo, y_hi = problem.outputs()
    eps = problem.margins()
    w = ref.w

    steady = norm_inf(ref.x_e - A @ ref.x_e - B @ ref.u_e)
    rot_s = ref.x_s * math.cos(w) - ref.x_c * math.sin(w) - A @ ref.x_s - B @ ref.u_s
    rot_c = ref.x_s * math.sin(w) + ref.x_c * math.cos(w) - A @ ref.x_c - B @ ref.u_c
    rotation = max(norm_inf(rot_s), norm_inf(rot_c))

    y_e = E @ ref.x_e + F @ ref.u_e
    amp = np.hypot(E @ ref.x_s + F @ ref.u_s, E @ ref.x_c + F @ ref.u_c)
    soc = max(
        float(np.max(amp - (y_e - y_lo - eps), initial=0.0)),
        float(np.max(amp - (y_hi - eps - y_e), initial=0.0)),
    )

    j_min, j_max = (ref.N - 100, ref.N + 100) if j_range is None else j_range
    dynamics = band = 0.0
    x_j, u_j = harmonic_eval(ref, j_min)
    for j in range(j_min, j_max + 1):
        band = max(band, _band_gap(E @ x_j + F @ u_j, y_lo, y_hi))
        x_next, u_next = harmonic_eval(ref, j + 1)
        if j < j_max:
            dynamics = max(dynamics, norm_inf(x_next - A @ x_j - B @ u_j))
        x_j, u_j = x_next, u_next
    return HarmonicCheckReport(
        steady_residual=steady,
        rotation_residual=rotation,
        soc_violation=soc,
        dynamics_residual=dynamics,
        band_violation=band,
        j_min=j_min,
        j_max=j_max,
    )


# =============================================================================
# Problem assembly
# =============================================================================


class HmpcLayout:
    """
    Offline part of the HMPC cone program.

    The Hessian, constraint matrix and cone structure depend only on the
    problem data; x(t) enters b_eq and (x_r, u_r) enter q. The cone program
    template keeps the KKT factor cache shared by every closed-loop sample.
    """

    def __init__(self, problem: HmpcProblem):
        problem.check()
        if problem.w > MAX_BASE_FREQUENCY:
            logger.warning("base frequency w=%.4f exceeds pi/2; the harmonic may alias", problem.w)
        self.problem = problem
        mdl = problem.model
        n, m, N = mdl.n, mdl.m, problem.N
        self.n, self.m, self.N = n, m, N
        self.ox = 0
        self.ou = (N + 1) * n
        self.oh = self.ou + N * m
        self.ohu = self.oh + 3 * n
        self.n_z = self.ohu + 3 * m

        self.P = self._hessian()
        A, n_eq, lo, hi, shift = self._constraints()
        self.template = ConeProgram(self.P, np.zeros(self.n_z), A, n_eq, np.zeros(n_eq), lo, hi, shift)
        logger.debug("built HMPC layout (n_z=%d, rows=%d, cones=%d)", self.n_z, A.shape[0], shift.size)

    # -- index helpers --------------------------------------------------------

    def xs(self, j: int) -> slice:
        return slice(self.ox + j * self.n, self.ox + (j + 1) * self.n)

    def us(self, j: int) -> slice:
        return slice(self.ou + j * self.m, self.ou + (j + 1) * self.m)

    def xh(self, k: int) -> slice:
        """k = 0, 1, 2 for x_e, x_s, x_c."""
        return slice(self.oh + k * self.n, self.oh + (k + 1) * self.n)

    def uh(self, k: int) -> slice:
        """k = 0, 1, 2 for u_e, u_s, u_c."""
        return slice(self.ohu + k * self.m, self.ohu + (k + 1) * self.m)

    # -- assembly -------------------------------------------------------------

    def _hessian(self) -> np.ndarray:
        p = self.problem
        n, m, N = self.n, self.m, self.N
        M = np.zeros((self.n_z, self.n_z))
        for j in range(N):
            phase = p.w * (j - N)
            s, c = math.sin(phase), math.cos(phase)
            Dx = np.zeros((n, self.n_z))
            Dx[:, self.xs(j)] = np.eye(n)
            Dx[:, self.xh(0)] = -np.eye(n)
            Dx[:, self.xh(1)] = -s * np.eye(n)
            Dx[:, self.xh(2)] = -c * np.eye(n)
            Du = np.zeros((m, self.n_z))
            Du[:, self.us(j)] = np.eye(m)
            Du[:, self.uh(0)] = -np.eye(m)
            Du[:, self.uh(1)] = -s * np.eye(m)
            Du[:, self.uh(2)] = -c * np.eye(m)
            M += Dx.T @ p.Q @ Dx + Du.T @ p.R @ Du
        offset = block_diag(p.T_e, p.T_h, p.T_h, p.S_e, p.S_h, p.S_h)
        M[self.oh:, self.oh:] += offset
        return 2.0 * M

    def _constraints(self):
        p = self.problem
        mdl = p.model
        A, B = mdl.A, mdl.B
        n, m, N = self.n, self.m, self.N
        E, F, y_lo, y_hi = p.outputs()
        eps = p.margins()
        rows = []

        def row(size: int) -> np.ndarray:
            r = np.zeros((size, self.n_z))
            rows.append(r)
            return r

        # Equalities: x_0 = x(t), dynamics, terminal tie, steady and rotation equations.
        row(n)[:, self.xs(0)] = np.eye(n)
        for j in range(N):
            r = row(n)
            r[:, self.xs(j + 1)] = np.eye(n)
            r[:, self.xs(j)] = -A
            r[:, self.us(j)] = -B
        r = row(n)
        r[:, self.xs(N)] = np.eye(n)
        r[:, self.xh(0)] = -np.eye(n)
        r[:, self.xh(2)] = -np.eye(n)
        r = row(n)
        r[:, self.xh(0)] = np.eye(n) - A
        r[:, self.uh(0)] = -B
        cw, sw = math.cos(p.w), math.sin(p.w)
        r = row(n)
        r[:, self.xh(1)] = cw * np.eye(n) - A
        r[:, self.xh(2)] = -sw * np.eye(n)
        r[:, self.uh(1)] = -B
        r = row(n)
        r[:, self.xh(1)] = sw * np.eye(n)
        r[:, self.xh(2)] = cw * np.eye(n) - A
        r[:, self.uh(2)] = -B
        n_eq = (N + 5) * n

        # Stage constraints on the predicted trajectory.
        lo, hi = [], []
        for j in range(N):
            r = row(E.shape[0])
            r[:, self.xs(j)] = E
            r[:, self.us(j)] = F
            lo.append(y_lo)
            hi.append(y_hi)

        # Cone rows (y_s_i, y_c_i, +/- y_e_i) with the band offsets; infinite sides are dropped.
        shift = []
        for i in range(E.shape[0]):
            for sign, bound in ((1.0, y_lo[i]), (-1.0, y_hi[i])):
                if not np.isfinite(bound):
                    continue
                r = row(3)
                r[0, self.xh(1)], r[0, self.uh(1)] = E[i], F[i]
                r[1, self.xh(2)], r[1, self.uh(2)] = E[i], F[i]
                r[2, self.xh(0)], r[2, self.uh(0)] = sign * E[i], sign * F[i]
                shift.append(-(bound + eps[i]) if sign > 0 else bound - eps[i])

        return (
            np.vstack(rows),
            n_eq,
            np.concatenate(lo) if lo else np.zeros(0),
            np.concatenate(hi) if hi else np.zeros(0),
            np.asarray(shift, dtype=float),
        )

    # -- per-sample data ------------------------------------------------------

    def program(self, x_t, x_r, u_r) -> ConeProgram:
        p = self.problem
        x_t = as_vector(x_t, self.n, "x_t")
        x_r = as_vector(x_r, self.n, "x_r")
        u_r = as_vector(u_r, self.m, "u_r")
        q = np.zeros(self.n_z)
        q[self.xh(0)] = -2.0 * (p.T_e @ x_r)
        q[self.uh(0)] = -2.0 * (p.S_e @ u_r)
        b_eq = np.zeros(self.template.n_eq)
        b_eq[:self.n] = x_t
        return self.template.with_vectors(q=q, b_eq=b_eq)

    def offset_constant(self, x_r, u_r) -> float:
        p = self.problem
        return float(x_r @ p.T_e @ x_r + u_r @ p.S_e @ u_r)

    def pack(self, sol: HmpcSolution) -> np.ndarray:
        z = np.empty(self.n_z)
        z[self.ox:self.ou] = np.asarray(sol.x).reshape(-1)
        z[self.ou:self.oh] = np.asarray(sol.u).reshape(-1)
        ref = sol.reference
        for k, v in enumerate((ref.x_e, ref.x_s, ref.x_c)):
            z[self.xh(k)] = v
        for k, v in enumerate((ref.u_e, ref.u_s, ref.u_c)):
            z[self.uh(k)] = v
        return z

    def unpack(self, z: np.ndarray, **extra) -> HmpcSolution:
        ref = HarmonicReference(
            x_e=z[self.xh(0)], x_s=z[self.xh(1)], x_c=z[self.xh(2)],
            u_e=z[self.uh(0)], u_s=z[self.uh(1)], u_c=z[self.uh(2)],
            w=self.problem.w, N=self.N,
        )
        return HmpcSolution(
            x=z[self.ox:self.ou].reshape(self.N + 1, self.n).copy(),
            u=z[self.ou:self.oh].reshape(self.N, self.m).copy(),
            reference=ref,
            **extra,
        )

    def violation(self, sol: HmpcSolution, x_t) -> float:
        """Worst constraint violation of a candidate solution for the state x_t."""
        prog = self.program(x_t, np.zeros(self.n), np.zeros(self.m))
        return prog.cone_violation(self.pack(sol))

    def cost(self, sol: HmpcSolution, x_r, u_r) -> float:
        """J_h of a candidate solution."""
        x_r = as_vector(x_r, self.n, "x_r")
        u_r = as_vector(u_r, self.m, "u_r")
        prog = self.program(np.zeros(self.n), x_r, u_r)
        return prog.objective(self.pack(sol)) + self.offset_constant(x_r, u_r)


class HmpcProgram:
    """One sample's cone program with the data needed to decode it."""

    def __init__(self, layout: HmpcLayout, cone: ConeProgram, constant: float):
        self.layout = layout
        self.cone = cone
        self.constant = constant

    @property
    def n_cones(self) -> int:
        return self.cone.n_cones

    @property
    def n_z(self) -> int:
        return self.layout.n_z


def build_hmpc(problem: HmpcProblem, x_t, x_r, u_r, layout: Optional[HmpcLayout] = None) -> HmpcProgram:
    """
    Cone program of the HMPC problem for the state x_t and reference (x_r, u_r).

    Pass the layout of a previous call to reuse its factorization.

    Raises:
        ConfigurationError: If the problem violates the standing assumptions
    """
    layout = HmpcLayout(problem) if layout is None else layout
    x_r = as_vector(x_r, layout.n, "x_r")
    u_r = as_vector(u_r, layout.m, "u_r")
    return HmpcProgram(layout, layout.program(x_t, x_r, u_r), layout.offset_constant(x_r, u_r))


def solve_hmpc(
    program: HmpcProgram,
    warm: Optional[HmpcSolution] = None,
    eps_p: Optional[float] = None,
    eps_d: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> HmpcSolution:
    """
    Solve an HMPC cone program.

    Raises:
        MaxIterationsError: If the cap is reached; best_iterate is the decoded
            HmpcSolution flagged converged=False
    """
    layout = program.layout
    x0 = v0 = y0 = None
    if warm is not None:
        x0 = layout.pack(warm)
        v0, y0 = warm.slack, warm.dual
    try:
        res = conic_admm(program.cone, x0, v0, y0, eps_p=eps_p, eps_d=eps_d, max_iterations=max_iterations)
    except MaxIterationsError as e:
        last = e.best_iterate
        best = layout.unpack(
            last.z,
            objective=program.cone.objective(last.z) + program.constant,
            iterations=last.iterations,
            r_p=last.r_p,
            r_d=last.r_d,
            converged=False,
            slack=last.v,
            dual=last.lam,
        )
        raise MaxIterationsError(str(e.message), best_iterate=best, iterations=e.iterations, residual=e.residual)
    return layout.unpack(
        res.z,
        objective=program.cone.objective(res.z) + program.constant,
        iterations=res.iterations,
        r_p=res.r_p,
        r_d=res.r_d,
        slack=res.v,
        dual=res.lam,
    )


# =============================================================================
# Recursive feasibility and the optimal artificial reference
# =============================================================================


def shift_solution(sol: HmpcSolution, model: LtiModel, w: float) -> HmpcSolution:
    """
    Feasible solution for the successor state A x_0 + B u_0.

    The input sequence is shifted and completed with u_e + u_c, the states
    are rolled forward through the model, and the harmonic parameters are
    advanced one sample (x parts through the model, u parts by rotation).
    """
    A, B = model.A, model.B
    x, u = np.asarray(sol.x), np.asarray(sol.u)
    ref = sol.reference
    N = u.shape[0]

    u_plus = np.empty_like(u)
    u_plus[:N - 1] = u[1:]
    u_plus[N - 1] = ref.u_e + ref.u_c
    x_plus = np.empty_like(x)
    x_plus[0] = A @ x[0] + B @ u[0]
    for j in range(N):
        x_plus[j + 1] = A @ x_plus[j] + B @ u_plus[j]

    u_s, u_c = harmonic_rotate(ref.u_s, ref.u_c, w)
    shifted = HarmonicReference(
        x_e=A @ ref.x_e + B @ ref.u_e,
        x_s=A @ ref.x_s + B @ ref.u_s,
        x_c=A @ ref.x_c + B @ ref.u_c,
        u_e=ref.u_e,
        u_s=u_s,
        u_c=u_c,
        w=w,
        N=ref.N,
    )
    return HmpcSolution(x=x_plus, u=u_plus, reference=shifted, converged=sol.converged)


def optimal_artificial_reference(
    problem: HmpcProblem,
    x_r,
    u_r,
    eps: float = 1e-10,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Admissible steady state closest to (x_r, u_r) in the (T_e, S_e) metric.

    The optimal harmonic reference has zero sine and cosine parts, so this is
    the QP over z = (x_e, u_e, y):
        min ||x_e - x_r||^2_{T_e} + ||u_e - u_r||^2_{S_e}
        s.t. (A - I) x_e + B u_e = 0,  E x_e + F u_e - y = 0,
             y_lo + eps_y <= y <= y_hi - eps_y,
    solved with the banded ADMM.

    Raises:
        ConfigurationError: If the problem violates the standing assumptions
        MaxIterationsError: If the band admits no steady state
    """
    problem.check()
    mdl = problem.model
    n, m = mdl.n, mdl.m
    x_r = as_vector(x_r, n, "x_r")
    u_r = as_vector(u_r, m, "u_r")
    E, F, y_lo, y_hi = problem.outputs()
    margins = problem.margins()
    p = E.shape[0]

    H = 2.0 * block_diag(problem.T_e, problem.S_e, np.zeros((p, p)))
    G = np.block([
        [mdl.A - np.eye(n), mdl.B, np.zeros((n, p))],
        [E, F, -np.eye(p)],
    ])
    if np.linalg.matrix_rank(G) < n + p:
        raise ConfigurationError("[A - I, B] must have full row rank")
    q = np.concatenate([-2.0 * problem.T_e @ x_r, -2.0 * problem.S_e @ u_r, np.zeros(p)])
    lo = np.concatenate([np.full(n + m, -np.inf), y_lo + margins])
    hi = np.concatenate([np.full(n + m, np.inf), y_hi - margins])
    qp = StructuredQp([H], [G], [None], q, np.zeros(n + p), lo, hi)
    start = np.clip(np.concatenate([x_r, u_r, E @ x_r + F @ u_r]), lo, hi)
    res = admm_qp(qp, start, np.zeros(qp.n_z), 1.0, eps, eps)
    x_e, u_e = res.z[:n], res.z[n:n + m]
    logger.debug("optimal artificial reference after %d ADMM iterations", res.iterations)
    return x_e, u_e


# =============================================================================
# Closed loop
# =============================================================================


class HmpcController:
    """
    Closed-loop HMPC controller.

    Each call solves the cone program warm-started from the previous sample.
    If the solver hits its cap, the shifted previous solution (feasible by
    construction) supplies the input instead, and the sample is flagged.
    """

    def __init__(
        self,
        problem: HmpcProblem,
        eps: Optional[float] = None,
        max_iterations: Optional[int] = None,
    ):
        self.layout = HmpcLayout(problem)
        self.problem = problem
        self.eps = settings.hmpc_tolerance if eps is None else eps
        self.max_iterations = max_iterations
        self.last: Optional[HmpcSolution] = None

    def __call__(self, x, x_r, u_r) -> ControllerStep:
        program = build_hmpc(self.problem, x, x_r, u_r, layout=self.layout)
        try:
            sol = solve_hmpc(program, warm=self.last, eps_p=self.eps, eps_d=self.eps, max_iterations=self.max_iterations)
            self.last = sol
            return ControllerStep(u=sol.u[0].copy(), iterations=sol.iterations, r_p=sol.r_p, r_d=sol.r_d)
        except MaxIterationsError as e:
            best: HmpcSolution = e.best_iterate
            if self.last is not None:
                fallback = shift_solution(self.last, self.problem.model, self.problem.w)
                self.last = fallback.model_copy(update={"slack": best.slack, "dual": best.dual})
                u = fallback.u[0].copy()
                logger.warning("HMPC hit the cap; applying the shifted previous solution")
            else:
                self.last = best
                u = best.u[0].copy()
                logger.warning("HMPC hit the cap on the first sample; applying the best iterate")
            return ControllerStep(u=u, iterations=best.iterations, r_p=best.r_p, r_d=best.r_d, converged=False)
