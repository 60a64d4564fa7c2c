"""
Restart schemes for accelerated first-order methods.

This module provides:
- restart_fista_obj: FISTA restarted on an objective-decrease test with an adaptive iteration floor
- restart_fista_grad: FISTA restarted when the composite gradient at y_k drops by a factor e
- delayed_afom / restart_afom_general: the delayed monotone exit and the general scheme built on it
- restart_literature: objective-increase, gradient-alignment, known-f* and fixed-rate restarts
- optimal_fixed_rate and restart_solve, which dispatches on a RestartConfig

All schemes return a RestartResult whose trace satisfies k_out = sum of
the inner iterations of its counted segments.
"""

import math
from typing import Callable, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError, MaxIterationsError
from src.core.logging import get_logger
from src.core.numerics import as_vector, dot
from src.schemas.solvers import (
    RestartConfig,
    RestartPoint,
    RestartResult,
    RestartScheme,
    RestartTrace,
)
from src.services.fom_core import (
    BestIterate,
    CompositeProblem,
    FistaIterator,
    MfistaIterator,
    SmoothMetric,
)

logger = get_logger(__name__)

E = math.e

# (z_k, f(z_k), ||G(y_{k-1})||, T(y_{k-1})) produced by an inner method started at a given point
StepSource = Iterator[Tuple[np.ndarray, float, float, np.ndarray]]


def _check(eps: float, cap: Optional[int]) -> int:
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    return cap or settings.max_iterations


def _result(r_out: np.ndarray, j_out: int, k_out: int, points: List[RestartPoint]) -> RestartResult:
    return RestartResult(
        r_out=r_out,
        j_out=j_out,
        k_out=k_out,
        trace=RestartTrace(restart_points=points, k_out=k_out, j_out=j_out),
    )


def _cap_error(label: str, best: np.ndarray, k: int, residual: float) -> MaxIterationsError:
    return MaxIterationsError(
        f"{label} reached the iteration cap", best_iterate=best, iterations=k, residual=residual
    )


# =============================================================================
# Objective-based restart
# =============================================================================


def restart_fista_obj(
    problem: CompositeProblem,
    metric: SmoothMetric,
    r0,
    eps: float,
    fair_exit: bool = False,
    max_iterations: Optional[int] = None,
) -> RestartResult:
    """
    Restart FISTA on objective-function values.

    Each FISTA call stops at the first k with k >= n, f(z_k) <= f(z_0) and
    f(z_m) - f(z_k) <= (f(z_0) - f(z_m)) / e where m = floor(k/2) + 1.

    The first call runs with floor n_0 = 0 and only seeds the scheme: its
    iterations enter k_out only if it already meets the tolerance. After
    call j the next floor n_j is the call's own iteration count, replaced by
    2 n_{j-1} when f(r_{j-1}) - f(r_j) > (f(r_{j-2}) - f(r_{j-1})) / e.
    ||G(r_j)|| is checked after each call and its T(r_j) seeds the next call.

    Args:
        problem: Composite problem
        metric: Smoothness metric R
        r0: Starting point in Z
        eps: Terminal tolerance on ||G(r_j)||_{R^{-1}}
        fair_exit: Also stop as soon as ||G(y_{k-1})|| <= eps inside a call
        max_iterations: Cap on the total inner iterations

    Raises:
        InvalidInputError: On bad input
        MaxIterationsError: If the cap is reached
    """
    cap = _check(eps, max_iterations)
    r = as_vector(r0, problem.dim, "r0")
    f_r = [problem.eval_f(r)]
    tz = problem.tmap(r, metric)
    gnorm = metric.norm(r - tz)
    floors = [0]
    j = 0
    k_total = 0
    k_spent = 0
    points: List[RestartPoint] = []
    best = BestIterate(problem)
    best.offer(r, f_r[0])
    # f history of the current call, indexed by k
    f_hist = np.empty(cap + 1)

    while True:
        j += 1
        n = floors[-1]
        it = FistaIterator(problem, metric, tz, track_f=True)
        f_hist[0] = it.f
        best.offer(it.z, it.f)
        hit_tol = False
        while True:
            if k_spent + it.k >= cap:
                raise _cap_error("objective restart", best.z, k_spent + it.k, gnorm)
            st = it.step()
            k = st.k
            f_hist[k] = st.f
            best.offer(st.z, st.f)
            if fair_exit and st.gnorm_prev <= eps:
                hit_tol = True
                gnorm = st.gnorm_prev
                break
            if k >= n and f_hist[k] <= f_hist[0]:
                m = k // 2 + 1
                if f_hist[m] - f_hist[k] <= (f_hist[0] - f_hist[m]) / E:
                    break

        r = it.z
        n_j = it.k
        k_spent += n_j
        f_r.append(it.f)
        if not hit_tol:
            tz = problem.tmap(r, metric)
            gnorm = metric.norm(r - tz)
        done = hit_tol or gnorm <= eps
        counted = j > 1 or done
        if counted:
            k_total += n_j
        points.append(
            RestartPoint(
                j=j, r=r, f_value=f_r[-1], inner_iterations=n_j, floor=float(n),
                counted=counted, gnorm=gnorm, terminal=done,
            )
        )
        if done:
            logger.debug("objective restart finished: k_out=%d j_out=%d", k_total, j)
            return _result(r, j, k_total, points)
        if j >= 2 and f_r[-2] - f_r[-1] > (f_r[-3] - f_r[-2]) / E:
            n_j = 2 * n
        floors.append(n_j)


# =============================================================================
# Gradient-based restart
# =============================================================================


def restart_fista_grad(
    problem: CompositeProblem,
    metric: SmoothMetric,
    r0,
    eps: float,
    practical_exit: bool = False,
    fair_exit: bool = False,
    max_iterations: Optional[int] = None,
) -> RestartResult:
    """
    Gradient-based restart FISTA.

    After each iteration ||G(y_k)|| is evaluated; when it is <= rho_j / e the
    method restarts at r_{j+1} = y_k with rho_{j+1} = ||G(y_k)||. The T(y_k)
    computed for the test becomes the next z, so one T-evaluation is spent
    per iteration. Terminates when rho_j <= eps and returns z_k = T(r_j).

    practical_exit (or fair_exit) additionally stops on ||G(y_{k-1})|| <= eps.
    """
    cap = _check(eps, max_iterations)
    r = as_vector(r0, problem.dim, "r0")
    tz = problem.tmap(r, metric)
    rho = metric.norm(r - tz)
    points: List[RestartPoint] = []
    if rho <= eps:
        points.append(
            RestartPoint(j=0, r=r, f_value=problem.eval_f(r), inner_iterations=0, gnorm=rho, terminal=True)
        )
        return _result(tz, 0, 0, points)

    it = FistaIterator(problem, metric, tz)
    j = 0
    segment = 0
    cached: Optional[np.ndarray] = None
    best = BestIterate(problem)
    best.offer(tz)
    while True:
        if it.k >= cap:
            raise _cap_error("gradient restart", best.z, it.k, rho)
        st = it.step(cached)
        best.offer(st.z)
        segment += 1
        if (practical_exit or fair_exit) and st.gnorm_prev <= eps:
            points.append(
                RestartPoint(
                    j=j, r=st.z, f_value=problem.eval_f(st.z), inner_iterations=segment,
                    gnorm=st.gnorm_prev, terminal=True,
                )
            )
            return _result(st.z, j, it.k, points)
        y = it.y
        ty = problem.tmap(y, metric)
        g_y = metric.norm(y - ty)
        if g_y <= rho / E:
            j += 1
            rho = g_y
            done = rho <= eps
            points.append(
                RestartPoint(
                    j=j, r=y, f_value=problem.eval_f(y), inner_iterations=segment,
                    gnorm=rho, terminal=done,
                )
            )
            segment = 0
            it.reset(ty)
            cached = None
            if done:
                logger.debug("gradient restart finished: k_out=%d j_out=%d", it.k, j)
                return _result(ty, j, it.k, points)
        else:
            cached = ty


# =============================================================================
# Delayed exit and the general scheme
# =============================================================================


class DelayedExit(NamedTuple):
    z: np.ndarray
    m: int
    f: float
    hit_tolerance: bool


def fista_sequence(problem: CompositeProblem, metric: SmoothMetric, z0: np.ndarray) -> StepSource:
    """FISTA iterates from y0 = z0 = z (no initial T-step) with f(z_k) and ||G(y_{k-1})||."""
    it = FistaIterator(problem, metric, z0, track_f=True)
    while True:
        st = it.step()
        yield st.z, st.f, st.gnorm_prev, st.v


def mfista_sequence(problem: CompositeProblem, metric: SmoothMetric, z0: np.ndarray) -> StepSource:
    """MFISTA iterates from y0 = z0 = z with f(z_k) and ||G(y_{k-1})||."""
    it = MfistaIterator(problem, metric, z0)
    while True:
        st = it.step()
        yield st.z, st.f, st.gnorm_prev, st.v


def delayed_afom(
    steps: StepSource,
    z0: np.ndarray,
    f0: float,
    n: float,
    cap: Optional[int] = None,
    eps: Optional[float] = None,
) -> DelayedExit:
    """
    Run an inner method with the running-best sequence and the delayed exit test.

    z_k is the best of the inner iterates seen so far (equal to the inner
    iterate for monotone methods). Exits at the first k >= n with
    f(z_l) - f(z_k) <= (f(z_0) - f(z_l)) / 3, l = floor(k/2).

    Args:
        steps: Inner iterates (z, f(z), ||G(y_{k-1})||, T(y_{k-1})) started at z0
        z0: Starting point
        f0: f(z0), finite
        n: Minimum number of iterations
        cap: Iteration cap
        eps: When given, also stop as soon as ||G(y_{k-1})|| <= eps and return
            the T-image that passed the test instead of the running best

    Returns:
        DelayedExit(z_m, m, f(z_m), hit_tolerance)
    """
    if not math.isfinite(f0):
        raise InvalidInputError("delayed exit needs f(z0) finite")
    cap = cap or settings.max_iterations
    f_best = [f0]
    z_best = z0
    k = 0
    for z, f, gnorm_prev, v in steps:
        k += 1
        if f <= f_best[-1]:
            z_best = z
            f_best.append(f)
        else:
            f_best.append(f_best[-1])
        if eps is not None and gnorm_prev <= eps:
            return DelayedExit(v, k, f_best[-1], True)
        if k >= n:
            ell = k // 2
            if f_best[ell] - f_best[k] <= (f_best[0] - f_best[ell]) / 3.0:
                return DelayedExit(z_best, k, f_best[-1], False)
        if k >= cap:
            raise _cap_error("delayed exit", z_best, k, math.nan)
    raise InvalidInputError("inner method stopped producing iterates")


def restart_afom_general(
    problem: CompositeProblem,
    metric: SmoothMetric,
    r0,
    eps: float,
    inner: str = "mfista",
    gradient_exit: bool = False,
    fair_exit: bool = False,
    max_iterations: Optional[int] = None,
) -> RestartResult:
    """
    General restart scheme around the delayed exit.

    s_j = sqrt((f(r_{j-1}) - f(r_j)) / (f(r_{j-2}) - f(r_j))) for j >= 2 (else 0),
    n_j = max(m_j, 4 s_j m_{j-1}), [r_{j+1}, m_{j+1}] = delayed(r_j, n_j).
    Stops when f(r_j) - f(r_{j+1}) <= eps, or with gradient_exit when
    ||G(r_{j+1})|| <= eps. Returns j_out = j and k_out = sum of m_{j+1}.
    """
    cap = _check(eps, max_iterations)
    if inner not in ("fista", "mfista"):
        raise ConfigurationError("inner must be 'fista' or 'mfista'", inner=inner)
    source: Callable[..., StepSource] = mfista_sequence if inner == "mfista" else fista_sequence
    r = as_vector(r0, problem.dim, "r0")
    f_r = [problem.eval_f(r)]
    if not math.isfinite(f_r[0]):
        raise InvalidInputError("general restart needs r0 in dom f")

    m_prev = m_cur = 1
    j = -1
    k_total = 0
    points: List[RestartPoint] = []
    while True:
        j += 1
        s = 0.0
        if j >= 2:
            den = f_r[j - 2] - f_r[j]
            if den <= eps and not gradient_exit:
                points.append(RestartPoint(j=j, r=r, f_value=f_r[j], inner_iterations=0, terminal=True))
                return _result(r, j, k_total, points)
            s = math.sqrt(max(f_r[j - 1] - f_r[j], 0.0) / den) if den > 0.0 else 0.0
        n_j = max(float(m_cur), 4.0 * s * m_prev)
        if k_total >= cap:
            raise _cap_error("general restart", r, k_total, math.nan)
        out = delayed_afom(
            source(problem, metric, r),
            r,
            f_r[j],
            n_j,
            cap=cap - k_total,
            eps=eps if fair_exit else None,
        )
        k_total += out.m
        r_next = out.z
        f_r.append(problem.eval_f(r_next) if out.hit_tolerance else out.f)
        if gradient_exit:
            gnorm = metric.norm(r_next - problem.tmap(r_next, metric))
            done = gnorm <= eps
        else:
            gnorm = None
            done = f_r[j] - f_r[j + 1] <= eps
        done = done or out.hit_tolerance
        points.append(
            RestartPoint(
                j=j, r=r_next, f_value=f_r[j + 1], inner_iterations=out.m, floor=n_j,
                gnorm=gnorm, terminal=done,
            )
        )
        r = r_next
        if done:
            logger.debug("general restart finished: k_out=%d j_out=%d", k_total, j)
            return _result(r, j, k_total, points)
        m_prev, m_cur = m_cur, out.m


# =============================================================================
# Literature schemes
# =============================================================================


def optimal_fixed_rate(L: float, mu: float) -> int:
    """Restart period ceil(2 e sqrt(L / mu)) for a function with growth mu and smoothness L."""
    if not (L > 0 and mu > 0):
        raise InvalidInputError("L and mu must be positive")
    return int(math.ceil(2.0 * E * math.sqrt(L / mu)))


def restart_literature(
    problem: CompositeProblem,
    metric: SmoothMetric,
    r0,
    cfg: RestartConfig,
    eps: Optional[float] = None,
) -> RestartResult:
    """
    General restart procedure with one of the classic restart conditions.

    lit_f restarts when f(z_k) > f(z_{k-1}); lit_g when
    <R(y_{k-1} - z_k), z_k - z_{k-1}> > 0; lit_fstar when
    f(z_k) - f* <= (f(z_0) - f*) / e^2; fixed_rate when k >= k_m.
    The restart point is z_k. Each call also stops on the plain FISTA exit
    ||G(y_{k-1})|| <= eps, which terminates the scheme; otherwise
    ||G(r_j)|| <= eps is checked after the call.

    Raises:
        ConfigurationError: If the scheme is not a literature scheme or lacks f_star / k_m
    """
    cfg.check()
    if not cfg.scheme.is_literature:
        raise ConfigurationError("not a literature restart scheme", scheme=cfg.scheme.value)
    eps = cfg.eps if eps is None else eps
    cap = _check(eps, cfg.max_iterations)
    scheme = cfg.scheme
    f_star = cfg.f_star
    k_m = cfg.k_m
    needs_f = scheme in (RestartScheme.LIT_F, RestartScheme.LIT_FSTAR)

    r = as_vector(r0, problem.dim, "r0")
    tz = problem.tmap(r, metric)
    gnorm = metric.norm(r - tz)
    j = 0
    k_total = 0
    points: List[RestartPoint] = []
    best = BestIterate(problem)
    best.offer(r)
    while True:
        j += 1
        it = FistaIterator(problem, metric, tz, track_f=needs_f)
        f0 = it.f
        f_prev = it.f
        hit_tol = False
        while True:
            if k_total + it.k >= cap:
                raise _cap_error(f"{scheme.value} restart", best.z, k_total + it.k, gnorm)
            st = it.step()
            best.offer(st.z, st.f)
            if st.gnorm_prev <= eps:
                hit_tol = True
                gnorm = st.gnorm_prev
                break
            if scheme == RestartScheme.LIT_F:
                fire = st.f > f_prev
                f_prev = st.f
            elif scheme == RestartScheme.LIT_G:
                fire = dot(metric.apply(st.y_prev - st.z), st.z - st.z_prev) > 0.0
            elif scheme == RestartScheme.LIT_FSTAR:
                fire = st.f - f_star <= (f0 - f_star) / (E * E)
            else:
                fire = st.k >= k_m
            if fire:
                break

        r = it.z
        k_total += it.k
        if not hit_tol:
            tz = problem.tmap(r, metric)
            gnorm = metric.norm(r - tz)
        done = hit_tol or gnorm <= eps
        points.append(
            RestartPoint(
                j=j, r=r, f_value=problem.eval_f(r), inner_iterations=it.k,
                gnorm=gnorm, terminal=done,
            )
        )
        if done:
            logger.debug("%s restart finished: k_out=%d j_out=%d", scheme.value, k_total, j)
            return _result(r, j, k_total, points)


def restart_solve(problem: CompositeProblem, metric: SmoothMetric, r0, cfg: RestartConfig) -> RestartResult:
    """Dispatch on cfg.scheme."""
    cfg.check()
    if cfg.scheme == RestartScheme.ALG7_OBJ:
        return restart_fista_obj(
            problem, metric, r0, cfg.eps, fair_exit=cfg.fair_exit, max_iterations=cfg.max_iterations
        )
    if cfg.scheme == RestartScheme.ALG8_GRAD:
        return restart_fista_grad(
            problem, metric, r0, cfg.eps,
            practical_exit=cfg.practical_exit, fair_exit=cfg.fair_exit,
            max_iterations=cfg.max_iterations,
        )
    if cfg.scheme == RestartScheme.ALG10_GENERAL:
        return restart_afom_general(
            problem, metric, r0, cfg.eps, inner=cfg.inner,
            gradient_exit=cfg.gradient_exit, fair_exit=cfg.fair_exit,
            max_iterations=cfg.max_iterations,
        )
    return restart_literature(problem, metric, r0, cfg)
