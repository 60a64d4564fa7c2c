"""
Closed-loop simulation on the linear prediction model.

This module provides:
- ControllerStep: what a controller returns for one sample
- simulate_closed_loop: apply the first input, propagate x+ = Ax + Bu
- performance_index: the quadratic tracking cost summed over a trace
- engineering_trace / export_trace_csv: trace views in engineering units
"""

import csv
import time
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.core.exceptions import InvalidInputError, ReportIOError
from src.core.logging import get_logger
from src.core.numerics import as_vector
from src.schemas.control import ClosedLoopSample, ClosedLoopTrace, LtiModel, OperatingPoint

logger = get_logger(__name__)


class ControllerStep(NamedTuple):
    """Input to apply and solver statistics of one sample."""

    u: np.ndarray
    iterations: int
    r_p: float = 0.0
    r_d: float = 0.0
    restarts: int = 0
    converged: bool = True


Controller = Callable[[np.ndarray, np.ndarray, np.ndarray], ControllerStep]
ReferenceSchedule = Dict[int, Tuple[np.ndarray, np.ndarray]]


def simulate_closed_loop(
    model: LtiModel,
    controller: Controller,
    x0,
    x_r,
    u_r,
    steps: int,
    schedule: Optional[ReferenceSchedule] = None,
) -> ClosedLoopTrace:
    """
    Run the controller in closed loop with the model it predicts with.

    Args:
        model: Prediction and simulation model (scaled units)
        controller: Callable (x, x_r, u_r) -> ControllerStep
        x0: Initial state
        x_r, u_r: Reference in force from sample 0
        steps: Number of samples
        schedule: Optional {sample: (x_r, u_r)} reference changes

    Returns:
        ClosedLoopTrace; samples whose solver hit its cap are flagged
        converged=False and still applied
    """
    if steps < 1:
        raise InvalidInputError(f"steps must be positive, got {steps}")
    n, m = model.n, model.m
    x = as_vector(x0, n, "x0")
    ref_x = as_vector(x_r, n, "x_r")
    ref_u = as_vector(u_r, m, "u_r")
    schedule = schedule or {}

    samples: List[ClosedLoopSample] = []
    for k in range(steps):
        if k in schedule:
            ref_x = as_vector(schedule[k][0], n, "x_r")
            ref_u = as_vector(schedule[k][1], m, "u_r")
            logger.info("reference change at sample %d", k)
        start = time.perf_counter_ns()
        step = controller(x, ref_x, ref_u)
        wall_us = (time.perf_counter_ns() - start) / 1000.0
        u = as_vector(step.u, m, "u")
        if not step.converged:
            logger.warning("sample %d: solver hit its cap after %d iterations", k, step.iterations)
        samples.append(
            ClosedLoopSample(
                sample=k,
                x=x.copy(),
                u=u.copy(),
                iterations=step.iterations,
                restarts=step.restarts,
                r_p=step.r_p,
                r_d=step.r_d,
                wall_us=wall_us,
                converged=step.converged,
            )
        )
        x = model.A @ x + model.B @ u
    return ClosedLoopTrace(samples=samples, x_r=ref_x, u_r=ref_u, x_final=x)


def performance_index(trace: ClosedLoopTrace, x_r, u_r, Q, R, first: int = 1) -> float:
    """
    sum_k ||x_k - x_r||^2_Q + ||u_k - u_r||^2_R over samples first..end.

    The initial sample is excluded by default since no controller acts
    on x_0.
    """
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    x_r, u_r = np.asarray(x_r, dtype=float), np.asarray(u_r, dtype=float)
    total = 0.0
    for s in trace.samples[first:]:
        dx, du = s.x - x_r, s.u - u_r
        total += float(dx @ Q @ dx + du @ R @ du)
    return total


def engineering_trace(trace: ClosedLoopTrace, op: OperatingPoint) -> Tuple[np.ndarray, np.ndarray]:
    """States and inputs of every sample mapped back to engineering units."""
    states = np.array([op.state_to_engineering(s.x) for s in trace.samples])
    inputs = np.array([op.input_to_engineering(s.u) for s in trace.samples])
    return states, inputs


def export_trace_csv(trace: ClosedLoopTrace, path, op: Optional[OperatingPoint] = None) -> Path:
    """
    Write one row per sample: sample, x..., u..., iterations, r_p, r_d, wall_us.

    States and inputs are scaled units, or engineering units when the
    operating point is given.

    Raises:
        ReportIOError: If the file cannot be written
    """
    path = Path(path)
    if op is None:
        states, inputs = trace.states, trace.inputs
    else:
        states, inputs = engineering_trace(trace, op)
    n = states.shape[1] if states.size else trace.x_r.size
    m = inputs.shape[1] if inputs.size else trace.u_r.size
    header = ["sample"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    header += ["iterations", "r_p", "r_d", "wall_us"]
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for s, x, u in zip(trace.samples, states, inputs):
                writer.writerow(
                    [s.sample, *(repr(float(v)) for v in x), *(repr(float(v)) for v in u),
                     s.iterations, repr(s.r_p), repr(s.r_d), f"{s.wall_us:.1f}"]
                )
    except OSError as e:
        raise ReportIOError(f"cannot write trace: {e}", path=str(path))
    logger.info("wrote %d samples to %s", len(trace.samples), path)
    return path
