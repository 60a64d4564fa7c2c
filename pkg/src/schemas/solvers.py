"""
Solver result and configuration schemas.

Includes first-order method reports, ADMM results, and the restart
scheme configuration and trace records.
"""

from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.exceptions import ConfigurationError


class ExitPoint(str, Enum):
    """Where FISTA-type methods evaluate the composite gradient exit test."""

    AT_ZK = "at_zk"
    AT_YK_MINUS1 = "at_yk_minus1"


class IterationRecord(BaseModel):
    """One iteration of a first-order method."""

    k: int = Field(ge=1, description="Iteration index")
    f_value: float = Field(description="Objective value f(z_k)")
    gnorm: float = Field(description="Composite gradient norm used by the exit test")
    t: float = Field(default=1.0, description="Momentum sequence value t_k")


class FomReport(BaseModel):
    """Output of prox_grad_solve, fista_solve and mfista_solve."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    solution: np.ndarray = Field(description="Returned iterate z_k")
    iterations: int = Field(ge=0, description="Iterations performed (k_out)")
    final_residual: float = Field(description="Composite gradient norm at exit")
    trace: Optional[List[IterationRecord]] = Field(
        default=None,
        description="Per-iteration records when tracing is enabled",
    )

    @model_validator(mode="after")
    def check_trace_length(self) -> "FomReport":
        """Trace, when present, has one record per iteration."""
        if self.trace is not None and len(self.trace) != self.iterations:
            raise ValueError(
                f"trace has {len(self.trace)} records for {self.iterations} iterations"
            )
        return self


class AdmmResult(BaseModel):
    """Output of two-block ADMM solvers."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    z: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    iterations: int = Field(ge=0)
    r_p: float = Field(description="Primal residual at exit (infinity norm)")
    r_d: float = Field(description="Dual residual at exit (infinity norm)")


class EadmmResult(BaseModel):
    """Output of the three-block extended ADMM."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    lam: np.ndarray
    iterations: int = Field(ge=0)
    r_p: float
    r_d: float = Field(description="Largest of the z2 and z3 block differences")


class QpResult(BaseModel):
    """Output of the dual FISTA QP solver."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    z: np.ndarray = Field(description="Primal iterate z_k")
    lam: np.ndarray = Field(description="Dual iterate y_{k-1}")
    iterations: int = Field(ge=0)
    residual: float = Field(description="Infinity norm of Gz - b at exit")
    restarts: int = Field(default=0, ge=0, description="Restarts when a restart scheme drove the dual")


# =============================================================================
# Restart schemes
# =============================================================================


class RestartScheme(str, Enum):
    """Restart schemes wrapped around FISTA / MFISTA."""

    ALG7_OBJ = "alg7_obj"
    ALG8_GRAD = "alg8_grad"
    ALG10_GENERAL = "alg10_general"
    LIT_F = "lit_f"
    LIT_G = "lit_g"
    LIT_FSTAR = "lit_fstar"
    FIXED_RATE = "fixed_rate"

    @property
    def is_literature(self) -> bool:
        return self in (
            RestartScheme.LIT_F,
            RestartScheme.LIT_G,
            RestartScheme.LIT_FSTAR,
            RestartScheme.FIXED_RATE,
        )


class RestartConfig(BaseModel):
    """Scheme selection plus the options every scheme shares."""

    scheme: RestartScheme
    eps: float = Field(gt=0, description="Terminal tolerance on the composite gradient norm")
    f_star: Optional[float] = Field(default=None, description="Optimal value (lit_fstar only)")
    k_m: Optional[int] = Field(default=None, description="Restart period (fixed_rate only)")
    fair_exit: bool = Field(
        default=False,
        description="Stop as soon as any iterate passes the terminal gradient test",
    )
    practical_exit: bool = Field(
        default=False,
        description="Gradient scheme exits on the cheap test at y_{k-1}",
    )
    gradient_exit: bool = Field(
        default=False,
        description="General scheme exits on the gradient norm instead of the objective decrease",
    )
    inner: str = Field(default="mfista", description="Inner method of the general scheme")
    max_iterations: Optional[int] = Field(default=None, ge=1)

    def check(self) -> "RestartConfig":
        """
        Validate scheme-specific requirements.

        Raises:
            ConfigurationError: If f_star or k_m is missing for the scheme needing it
        """
        if self.scheme == RestartScheme.LIT_FSTAR and self.f_star is None:
            raise ConfigurationError("lit_fstar requires f_star", scheme=self.scheme.value)
        if self.scheme == RestartScheme.FIXED_RATE and (self.k_m is None or self.k_m < 1):
            raise ConfigurationError("fixed_rate requires k_m >= 1", k_m=self.k_m)
        if self.inner not in ("fista", "mfista"):
            raise ConfigurationError("inner must be 'fista' or 'mfista'", inner=self.inner)
        return self


class RestartPoint(BaseModel):
    """One restart (or the terminal segment) of a restart scheme."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    j: int = Field(ge=0, description="Restart counter when the point was produced")
    r: np.ndarray = Field(description="Restart point r_j")
    f_value: float = Field(description="f(r_j)")
    inner_iterations: int = Field(ge=0, description="Inner iterations spent in this segment")
    floor: float = Field(default=0.0, description="Minimum-iteration floor n_j used by the call")
    counted: bool = Field(default=True, description="Whether the segment's iterations enter k_out")
    gnorm: Optional[float] = Field(default=None, description="Composite gradient norm at r_j")
    terminal: bool = Field(default=False)


class RestartTrace(BaseModel):
    """Restart points plus the scheme's counters."""

    restart_points: List[RestartPoint] = Field(default_factory=list)
    k_out: int = Field(ge=0)
    j_out: int = Field(ge=0)

    @model_validator(mode="after")
    def check_counts(self) -> "RestartTrace":
        total = sum(p.inner_iterations for p in self.restart_points if p.counted)
        if total != self.k_out:
            raise ValueError(f"k_out={self.k_out} but counted segments sum to {total}")
        return self


class RestartResult(BaseModel):
    """Output of every restart scheme."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    r_out: np.ndarray
    j_out: int = Field(ge=0)
    k_out: int = Field(ge=0)
    trace: RestartTrace
