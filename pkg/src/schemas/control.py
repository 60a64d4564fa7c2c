"""
Control schemas: prediction models, MPC weights, closed-loop traces and
validation reports.
"""

from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.config import settings
from src.core.exceptions import ConfigurationError, InvalidInputError


class ClosedLoopSample(BaseModel):
    """State, applied input and solver statistics of one sample."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sample: int = Field(ge=0)
    x: np.ndarray = Field(description="State at the start of the sample (scaled units)")
    u: np.ndarray = Field(description="Applied input (scaled units)")
    iterations: int = Field(ge=0)
    restarts: int = Field(default=0, ge=0)
    r_p: float = Field(default=0.0)
    r_d: float = Field(default=0.0)
    wall_us: float = Field(default=0.0, ge=0)
    converged: bool = Field(default=True, description="False when the solver hit its cap")


class ClosedLoopTrace(BaseModel):
    """Per-sample records of a closed-loop simulation."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: List[ClosedLoopSample] = Field(default_factory=list)
    x_r: np.ndarray
    u_r: np.ndarray
    x_final: Optional[np.ndarray] = Field(default=None, description="State after the last sample")

    @property
    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])

    @property
    def inputs(self) -> np.ndarray:
        return np.array([s.u for s in self.samples])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([s.iterations for s in self.samples], dtype=int)

    @property
    def unconverged(self) -> int:
        """Number of samples whose solver hit the iteration cap."""
        return sum(1 for s in self.samples if not s.converged)


class EllipsoidValidationReport(BaseModel):
    """Sampling check of admissible invariance of an ellipsoid under a linear gain."""

    samples: int = Field(ge=0)
    invariance_violations: int = Field(ge=0)
    admissibility_violations: int = Field(ge=0)
    worst_invariance_margin: float = Field(
        description="max over samples of (x+ - c)'P(x+ - c) - r^2; <= 0 means invariant"
    )
    worst_constraint_margin: float = Field(
        description="Largest bound violation over samples; <= 0 means admissible"
    )

    @property
    def violations(self) -> int:
        return self.invariance_violations + self.admissibility_violations


class HarmonicCheckReport(BaseModel):
    """Worst residuals of a harmonic reference against dynamics and constraints."""

    steady_residual: float = Field(description="Residual of x_e = A x_e + B u_e")
    rotation_residual: float = Field(description="Residual of the sine/cosine rotation equations")
    soc_violation: float = Field(description="Largest violation of the cone inequalities")
    dynamics_residual: float = Field(description="Worst x_h(j+1) - A x_h(j) - B u_h(j) over the sweep")
    band_violation: float = Field(description="Worst violation of y_lo <= E x_h + F u_h <= y_hi")
    j_min: int
    j_max: int

    def is_feasible(self, tol: float) -> bool:
        return max(
            self.steady_residual,
            self.rotation_residual,
            self.soc_violation,
            self.dynamics_residual,
            self.band_violation,
        ) <= tol


# =============================================================================
# MPC models and weights
# =============================================================================


class MpcVariant(str, Enum):
    """MPC formulations with dedicated sparse solvers."""

    EQU = "equ"
    LAX = "lax"
    ELLIP = "ellip"
    MPCT = "mpct"


def _matrix(v) -> np.ndarray:
    return np.atleast_2d(np.asarray(v, dtype=float))


def _vector(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)


class LtiModel(BaseModel):
    """
    Discrete-time model x+ = Ax + Bu with box bounds and optional
    coupled constraints y_lo <= Ex + Fu <= y_hi.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    B: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    E: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    y_lo: Optional[np.ndarray] = None
    y_hi: Optional[np.ndarray] = None

    @field_validator("A", "B", "E", "F", mode="before")
    @classmethod
    def as_matrix(cls, v):
        return None if v is None else _matrix(v)

    @field_validator("x_lo", "x_hi", "u_lo", "u_hi", "y_lo", "y_hi", mode="before")
    @classmethod
    def as_vector(cls, v):
        return None if v is None else _vector(v)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def has_outputs(self) -> bool:
        return self.E is not None

    def check(self) -> "LtiModel":
        """
        Validate dimensions and bounds.

        Raises:
            InvalidInputError: On mismatched shapes or non-finite matrices
            ConfigurationError: If some lower bound is not below its upper bound
        """
        n, m = self.n, self.m
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise InvalidInputError(f"A/B have shapes {self.A.shape}/{self.B.shape}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise InvalidInputError("A and B must be finite")
        for name, v, size in (("x_lo", self.x_lo, n), ("x_hi", self.x_hi, n), ("u_lo", self.u_lo, m), ("u_hi", self.u_hi, m)):
            if v.size != size:
                raise InvalidInputError(f"{name} has length {v.size}, expected {size}")
        if np.any(self.x_lo >= self.x_hi) or np.any(self.u_lo >= self.u_hi):
            raise ConfigurationError("box bounds need lo < hi componentwise")
        if self.has_outputs:
            if self.F is None or self.y_lo is None or self.y_hi is None:
                raise InvalidInputError("coupled constraints need E, F, y_lo and y_hi")
            p = self.E.shape[0]
            if self.E.shape != (p, n) or self.F.shape != (p, m) or self.y_lo.size != p or self.y_hi.size != p:
                raise InvalidInputError("coupled constraint data has inconsistent shapes")
            if np.any(self.y_lo >= self.y_hi):
                raise ConfigurationError("output bounds need y_lo < y_hi componentwise")
        return self


class MpcWeights(BaseModel):
    """Cost weights, horizon and penalty parameters of an MPC controller."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Q: np.ndarray
    R: np.ndarray
    T: np.ndarray
    S: Optional[np.ndarray] = Field(default=None, description="Input offset weight (MPCT only)")
    N: int = Field(ge=2, description="Prediction horizon")
    eps_x: float = Field(
        default_factory=lambda: settings.mpct_margin, gt=0, description="Tightening of the artificial state (MPCT)"
    )
    eps_u: float = Field(
        default_factory=lambda: settings.mpct_margin, gt=0, description="Tightening of the artificial input (MPCT)"
    )
    rho: Union[float, Tuple[float, float]] = Field(
        default_factory=lambda: settings.admm_rho,
        description="ADMM penalty, or the (rho1, rho2) pair of the MPCT solver",
    )

    @field_validator("Q", "R", "T", "S", mode="before")
    @classmethod
    def as_matrix(cls, v):
        if v is None:
            return None
        arr = np.asarray(v, dtype=float)
        return np.diag(arr) if arr.ndim == 1 else _matrix(arr)

    @property
    def rho_pair(self) -> Tuple[float, float]:
        if isinstance(self.rho, tuple):
            return self.rho
        return (float(self.rho), float(self.rho))

    @property
    def rho_scalar(self) -> float:
        return self.rho[0] if isinstance(self.rho, tuple) else float(self.rho)


# =============================================================================
# Harmonic MPC
# =============================================================================


class HarmonicReference(BaseModel):
    """
    Single-harmonic artificial reference

        x_h(j) = x_e + x_s sin(w (j - N)) + x_c cos(w (j - N))

    and likewise u_h(j) with (u_e, u_s, u_c).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x_e: np.ndarray
    x_s: np.ndarray
    x_c: np.ndarray
    u_e: np.ndarray
    u_s: np.ndarray
    u_c: np.ndarray
    w: float = Field(ge=0, description="Base frequency in radians per sample")
    N: int = Field(ge=1, description="Sample index where the phase is zero")

    @field_validator("x_e", "x_s", "x_c", "u_e", "u_s", "u_c", mode="before")
    @classmethod
    def as_vector(cls, v):
        return _vector(v)

    @classmethod
    def stationary(cls, x_e, u_e, w: float, N: int) -> "HarmonicReference":
        """A constant reference (zero sine and cosine parts)."""
        x_e, u_e = _vector(x_e), _vector(u_e)
        zx, zu = np.zeros_like(x_e), np.zeros_like(u_e)
        return cls(x_e=x_e, x_s=zx, x_c=zx, u_e=u_e, u_s=zu, u_c=zu, w=w, N=N)


class HmpcProblem(BaseModel):
    """Prediction model, weights and harmonic parameters of an HMPC controller."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    model: LtiModel
    Q: np.ndarray
    R: np.ndarray
    T_e: np.ndarray
    S_e: np.ndarray
    T_h: np.ndarray
    S_h: np.ndarray
    N: int = Field(ge=1, description="Prediction horizon")
    w: float = Field(ge=0, description="Base frequency")
    eps_y: Optional[np.ndarray] = Field(
        default=None,
        description="Constraint margins; 1e-6 (y_hi - y_lo) on finite rows when omitted",
    )

    @field_validator("Q", "R", "T_e", "S_e", "T_h", "S_h", mode="before")
    @classmethod
    def as_matrix(cls, v):
        arr = np.asarray(v, dtype=float)
        return np.diag(arr) if arr.ndim == 1 else _matrix(arr)

    @field_validator("eps_y", mode="before")
    @classmethod
    def as_vector(cls, v):
        return None if v is None else _vector(v)

    def outputs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        (E, F, y_lo, y_hi) of the constraints y_lo <= Ex + Fu <= y_hi.

        Uses the model's coupled constraints when present, otherwise one row
        per finitely bounded state or input of the box.
        """
        mdl = self.model
        if mdl.has_outputs:
            return mdl.E, mdl.F, mdl.y_lo, mdl.y_hi
        n, m = mdl.n, mdl.m
        lo = np.concatenate([mdl.x_lo, mdl.u_lo])
        hi = np.concatenate([mdl.x_hi, mdl.u_hi])
        rows = np.flatnonzero(np.isfinite(lo) | np.isfinite(hi))
        sel = np.eye(n + m)[rows]
        return sel[:, :n], sel[:, n:], lo[rows], hi[rows]

    def margins(self) -> np.ndarray:
        _, _, y_lo, y_hi = self.outputs()
        if self.eps_y is None:
            width = np.where(np.isfinite(y_hi - y_lo), y_hi - y_lo, 1.0)
            return 1e-6 * width
        return np.broadcast_to(self.eps_y, y_lo.shape).astype(float)

    def check(self) -> "HmpcProblem":
        """
        Validate the standing assumptions of the formulation.

        Raises:
            InvalidInputError: On mismatched weight shapes
            ConfigurationError: If the margins leave no interior, Q/R/T_e/S_e
                are not positive definite or T_h/S_h are not diagonal positive
        """
        self.model.check()
        n, m = self.model.n, self.model.m
        for name, W, size in (
            ("Q", self.Q, n), ("R", self.R, m), ("T_e", self.T_e, n),
            ("S_e", self.S_e, m), ("T_h", self.T_h, n), ("S_h", self.S_h, m),
        ):
            if W.shape != (size, size):
                raise InvalidInputError(f"{name} has shape {W.shape}, expected ({size}, {size})")
            if not np.allclose(W, W.T) or np.linalg.eigvalsh(0.5 * (W + W.T))[0] <= 0:
                raise ConfigurationError(f"{name} must be symmetric positive definite")
        for name, W in (("T_h", self.T_h), ("S_h", self.S_h)):
            if np.count_nonzero(W - np.diag(np.diag(W))):
                raise ConfigurationError(f"{name} must be diagonal")
        _, _, y_lo, y_hi = self.outputs()
        eps = self.margins()
        if np.any(eps <= 0):
            raise ConfigurationError("constraint margins eps_y must be positive")
        if np.any(y_lo + eps >= y_hi - eps):
            raise ConfigurationError("margins eps_y leave an empty constraint band")
        return self


class HmpcSolution(BaseModel):
    """Predicted trajectory and harmonic reference returned by the HMPC solver."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray = Field(description="Predicted states x_0..x_N, shape (N+1, n)")
    u: np.ndarray = Field(description="Predicted inputs u_0..u_{N-1}, shape (N, m)")
    reference: HarmonicReference
    objective: Optional[float] = Field(default=None, description="J_h at the solution")
    iterations: int = Field(default=0, ge=0)
    r_p: float = Field(default=0.0)
    r_d: float = Field(default=0.0)
    converged: bool = Field(default=True)
    slack: Optional[np.ndarray] = Field(default=None, description="Cone copy kept for warm starts")
    dual: Optional[np.ndarray] = Field(default=None, description="Multipliers kept for warm starts")


# =============================================================================
# Plant models
# =============================================================================


class OperatingPoint(BaseModel):
    """
    Linearization point and diagonal scalings.

    Scaled incremental variables are x = N_x (chi - chi_o) and
    u = N_u (v - v_o); N_x and N_u are stored as their diagonals.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray = Field(description="Operating state chi_o (engineering units)")
    u: np.ndarray = Field(description="Operating input (engineering units)")
    N_x: np.ndarray = Field(description="Diagonal of the state scaling")
    N_u: np.ndarray = Field(description="Diagonal of the input scaling")

    @field_validator("x", "u", "N_x", "N_u", mode="before")
    @classmethod
    def as_vector(cls, v):
        arr = np.asarray(v, dtype=float)
        return np.diag(arr).copy() if arr.ndim == 2 else _vector(arr)

    @classmethod
    def unscaled(cls, x, u) -> "OperatingPoint":
        x, u = _vector(x), _vector(u)
        return cls(x=x, u=u, N_x=np.ones_like(x), N_u=np.ones_like(u))

    def check(self) -> "OperatingPoint":
        """
        Raises:
            InvalidInputError: On a zero, negative or non-finite scaling entry
                or sizes that do not match the operating point
        """
        if self.N_x.size != self.x.size or self.N_u.size != self.u.size:
            raise InvalidInputError("scalings must match the operating point sizes")
        for name, d in (("N_x", self.N_x), ("N_u", self.N_u)):
            if not np.all(np.isfinite(d)) or np.any(d <= 0):
                raise InvalidInputError(f"{name} needs positive finite diagonal entries")
        return self

    def scale_state(self, chi) -> np.ndarray:
        return self.N_x * (np.asarray(chi, dtype=float) - self.x)

    def scale_input(self, v) -> np.ndarray:
        return self.N_u * (np.asarray(v, dtype=float) - self.u)

    def state_to_engineering(self, x) -> np.ndarray:
        return self.x + np.asarray(x, dtype=float) / self.N_x

    def input_to_engineering(self, u) -> np.ndarray:
        return self.u + np.asarray(u, dtype=float) / self.N_u


class DiscreteLtiModel(LtiModel):
    """A sampled, scaled prediction model together with the point it was built around."""

    sample_time: float = Field(gt=0, description="Sampling period in seconds")
    operating_point: OperatingPoint
