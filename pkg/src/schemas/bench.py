"""
Benchmark specification and report schemas.
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator

REPORT_COLUMNS = ("scheme", "instance", "iterations", "restarts", "residual", "wall_us")


class BenchKind(str, Enum):
    """Benchmark families."""

    LASSO = "lasso"
    RANDOM_QP = "random_qp"
    EXAMPLE31 = "example31"
    MPC_SCENARIO = "mpc_scenario"
    HMPC_SCENARIO = "hmpc_scenario"


class ReportFormat(str, Enum):
    """Report file formats."""

    CSV = "csv"
    JSON = "json"


class BenchSpec(BaseModel):
    """Everything that determines a benchmark run; instances are a pure function of it."""

    kind: BenchKind
    seed: int = Field(default=20240917, ge=0, lt=2**64)
    instances: int = Field(default=100, ge=1)

    # Restart benchmarks
    rows: int = Field(default=600, ge=1, description="Lasso sample count N")
    n_z: int = Field(default=800, ge=1, description="Decision-variable dimension")
    alpha: float = Field(default=0.003, gt=0)
    beta: float = Field(default=20.0, gt=0)
    eps: float = Field(default=1e-7, gt=0)
    schemes: List[str] = Field(
        default_factory=lambda: [
            "alg7_obj", "alg8_grad", "alg10_general", "lit_f", "lit_g", "lit_fstar",
        ]
    )
    fair_exit: bool = Field(default=True)

    # MPC benchmarks
    bench: str = Field(default="chemical", description="chemical | ball_plate | oscillating | academic")
    formulation: str = Field(default="lax", description="equ | lax | ellip | mpct | hmpc")
    solver: str = Field(default="admm", description="fista | admm | eadmm | dual_fista_restart")
    rho: Optional[float] = Field(default=None, gt=0)
    rho_pair: Optional[Tuple[float, float]] = Field(default=None)
    horizon: Optional[int] = Field(default=None, ge=2)
    samples: int = Field(default=50, ge=1)
    tolerance: float = Field(default=1e-4, gt=0)
    base_frequency: Optional[float] = Field(default=None, ge=0)

    @field_validator("schemes", mode="before")
    @classmethod
    def parse_schemes(cls, v):
        """Parse schemes from comma-separated string or list."""
        if isinstance(v, str):
            return [s.strip() for s in v.split(",") if s.strip()]
        return v

    @field_validator("rho_pair", mode="before")
    @classmethod
    def parse_rho_pair(cls, v):
        if isinstance(v, str):
            parts = [float(p) for p in v.split(",") if p.strip()]
            if len(parts) != 2:
                raise ValueError("rho_pair needs two comma-separated values")
            return tuple(parts)
        return v


class ReportRow(BaseModel):
    """One solver run on one instance (or one closed-loop sample)."""

    scheme: str
    instance: int = Field(ge=0)
    iterations: int = Field(ge=0)
    restarts: int = Field(default=0, ge=0)
    residual: float
    wall_us: float = Field(default=0.0, ge=0)


class AggregateRow(BaseModel):
    """avg / median / max / min of one scheme's rows."""

    scheme: str
    statistic: str = Field(description="avg | median | max | min")
    iterations: float
    restarts: float
    residual: float
    wall_us: float


class BenchReport(BaseModel):
    """Rows, their aggregates and scalar extras such as mean cond(H)."""

    spec: Optional[BenchSpec] = None
    rows: List[ReportRow] = Field(default_factory=list)
    aggregates: List[AggregateRow] = Field(default_factory=list)
    extras: Dict[str, float] = Field(default_factory=dict)
    failures: List[str] = Field(default_factory=list)

    def aggregate(self, scheme: str, statistic: str = "avg") -> AggregateRow:
        """Look up one aggregate row."""
        for row in self.aggregates:
            if row.scheme == scheme and row.statistic == statistic:
                return row
        raise KeyError(f"no {statistic} aggregate for scheme {scheme!r}")
