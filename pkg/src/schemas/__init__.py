"""
Typed records shared by the services and the command line.

Usage:
    from src.schemas import FomReport, RestartConfig, RestartScheme
"""

# Solvers
from src.schemas.solvers import (
    AdmmResult,
    EadmmResult,
    ExitPoint,
    FomReport,
    IterationRecord,
    QpResult,
    RestartConfig,
    RestartPoint,
    RestartResult,
    RestartScheme,
    RestartTrace,
)

# Benchmarks
from src.schemas.bench import (
    REPORT_COLUMNS,
    AggregateRow,
    BenchKind,
    BenchReport,
    BenchSpec,
    ReportFormat,
    ReportRow,
)

# Control
from src.schemas.control import (
    ClosedLoopSample,
    ClosedLoopTrace,
    EllipsoidValidationReport,
    HarmonicCheckReport,
    HarmonicReference,
    HmpcProblem,
    HmpcSolution,
    DiscreteLtiModel,
    LtiModel,
    MpcVariant,
    MpcWeights,
    OperatingPoint,
)

__all__ = [
    "AdmmResult",
    "EadmmResult",
    "ExitPoint",
    "FomReport",
    "IterationRecord",
    "QpResult",
    "RestartConfig",
    "RestartPoint",
    "RestartResult",
    "RestartScheme",
    "RestartTrace",
    "REPORT_COLUMNS",
    "AggregateRow",
    "BenchKind",
    "BenchReport",
    "BenchSpec",
    "ReportFormat",
    "ReportRow",
    "ClosedLoopSample",
    "ClosedLoopTrace",
    "EllipsoidValidationReport",
    "HarmonicCheckReport",
    "HarmonicReference",
    "HmpcProblem",
    "HmpcSolution",
    "DiscreteLtiModel",
    "LtiModel",
    "MpcVariant",
    "MpcWeights",
    "OperatingPoint",
]
