"""
Command-line entry point.

This module:
- Parses the subcommands restart-bench, mpc-bench, hmpc-bench, example31
  and validate-ellipsoid
- Merges settings, an optional key = value config file and flags into a BenchSpec
- Runs the benchmark, prints the aggregate table and writes the report

Exit codes: 0 on success, 2 when --check finds a published value missed,
1 on any error.

Usage:
    python -m src.main restart-bench --bench lasso --instances 10 --out reports/lasso.csv
    python -m src.main mpc-bench --bench chemical --formulation lax --solver admm --check
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel

from src.core.config import settings
from src.core.exceptions import ReportIOError, SuiteError
from src.core.logging import configure_logging, get_logger
from src.schemas.bench import BenchKind, BenchReport, BenchSpec, ReportFormat
from src.services.bench import (
    MPC_PROFILES,
    PLAIN_FISTA,
    acceptance_violations,
    run_hmpc_bench,
    run_mpc_bench,
    run_restart_bench,
)
from src.services.mpc_suite import (
    admissible_ellipsoid,
    lqr_gain,
    lyapunov_terminal_weight,
    validate_invariant_ellipsoid,
)
from src.services.plants import bench_model, bench_reference
from src.services.reporting import emit_report, render_report
from src.services.simulation import export_trace_csv

logger = get_logger(__name__)
console = Console()

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK = 2


# ============================================================================
# Config files
# ============================================================================


def load_bench_file(path) -> Dict[str, str]:
    """
    Read a flat config file.

    One `key = value` per line; `#` starts a comment; blank lines are
    ignored. Keys are BenchSpec field names.

    Raises:
        ReportIOError: If the file cannot be read
        ValueError: On a line without '='
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"cannot read config: {e}", path=str(path))
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{number}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_FLAG_FIELDS = {
    "seed": "seed",
    "instances": "instances",
    "eps": "eps",
    "rho": "rho",
    "horizon": "horizon",
    "formulation": "formulation",
    "solver": "solver",
    "samples": "samples",
    "w": "base_frequency",
}


# Published sizes of the random QP benchmark.
_RANDOM_QP_DEFAULTS = {"n_z": 200, "alpha": 10.0, "beta": 20.0, "eps": 1e-5}


def build_spec(args: argparse.Namespace, kind: BenchKind) -> BenchSpec:
    """settings < benchmark defaults < config file < flags."""
    bench = getattr(args, "bench", None)
    if kind in (BenchKind.LASSO, BenchKind.RANDOM_QP) and bench is not None:
        kind = BenchKind(bench)
    fields: Dict[str, object] = {
        "kind": kind,
        "seed": settings.default_seed,
        "instances": settings.default_instances,
        "schemes": list(settings.restart_schemes),
        "samples": settings.closed_loop_samples,
        "tolerance": settings.mpc_tolerance,
        "fair_exit": settings.restart_fair_exit,
    }
    if kind == BenchKind.RANDOM_QP:
        fields.update(_RANDOM_QP_DEFAULTS)
    if kind == BenchKind.HMPC_SCENARIO:
        fields["tolerance"] = settings.hmpc_tolerance
    if getattr(args, "config", None):
        fields.update(load_bench_file(args.config))

    if bench is not None and kind not in (BenchKind.LASSO, BenchKind.RANDOM_QP):
        fields["bench"] = bench
    for flag, field in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            fields[field] = value
    if getattr(args, "scheme", None):
        fields["schemes"] = args.scheme
    if getattr(args, "rho_pair", None):
        fields["rho_pair"] = args.rho_pair
    if getattr(args, "alpha", None) is not None:
        fields["alpha"] = args.alpha
    if kind == BenchKind.EXAMPLE31 and not getattr(args, "scheme", None):
        fields["schemes"] = [PLAIN_FISTA] + list(settings.restart_schemes)
    if kind == BenchKind.MPC_SCENARIO and fields.get("solver") == "dual_fista_restart" and not getattr(args, "scheme", None):
        fields["schemes"] = [PLAIN_FISTA] + list(settings.restart_schemes)
    return BenchSpec(**fields)


# ============================================================================
# Subcommands
# ============================================================================


def report_path(out: str) -> Path:
    """A bare file name is placed under settings.report_dir; any other path is kept."""
    path = Path(out)
    if path.is_absolute() or path.parent != Path("."):
        return path
    return Path(settings.report_dir) / path


def _finish(args: argparse.Namespace, spec: BenchSpec, report: BenchReport, title: str) -> int:
    render_report(report, console, title=title)
    if args.out:
        emit_report(report, report_path(args.out), args.format or settings.report_format)
    if args.check:
        violations = acceptance_violations(spec, report)
        for v in violations:
            console.print(f"[red]check[/red] {v}")
        if violations:
            return EXIT_CHECK
        console.print("[green]all checks passed[/green]")
    return EXIT_OK


def cmd_restart_bench(args: argparse.Namespace) -> int:
    spec = build_spec(args, BenchKind.LASSO)
    report = run_restart_bench(spec)
    return _finish(args, spec, report, f"{spec.kind.value}: {spec.instances} instances")


def cmd_example31(args: argparse.Namespace) -> int:
    spec = build_spec(args, BenchKind.EXAMPLE31)
    report = run_restart_bench(spec)
    return _finish(args, spec, report, "two-dimensional example (k_out, j_out)")


def cmd_mpc_bench(args: argparse.Namespace) -> int:
    spec = build_spec(args, BenchKind.MPC_SCENARIO)
    report, trace = run_mpc_bench(spec)
    if args.trace:
        model = bench_model(spec.bench)
        export_trace_csv(trace, args.trace, op=model.operating_point if args.engineering else None)
    return _finish(args, spec, report, f"{spec.bench}: {spec.formulation}/{spec.solver}")


def cmd_hmpc_bench(args: argparse.Namespace) -> int:
    spec = build_spec(args, BenchKind.HMPC_SCENARIO)
    report, traces = run_hmpc_bench(spec)
    if args.trace:
        stem = Path(args.trace)
        for label, trace in traces.items():
            export_trace_csv(trace, stem.with_name(f"{stem.stem}-{label}{stem.suffix or '.csv'}"))
    return _finish(args, spec, report, f"{spec.bench}: harmonic MPC")


def cmd_validate_ellipsoid(args: argparse.Namespace) -> int:
    """LQR ellipsoid of a bench, checked by sampling."""
    bench = args.bench or "oscillating"
    model = bench_model(bench)
    x_r, u_r = bench_reference(bench, model)
    prof = MPC_PROFILES[bench]
    Q, R = np.diag(prof.Q), np.diag(prof.R)
    K = lqr_gain(model.A, model.B, Q, R)
    P = lyapunov_terminal_weight(model.A, model.B, K, Q, R)
    ell = admissible_ellipsoid(model, K, P, x_r, u_r)
    report = validate_invariant_ellipsoid(model, K, ell, samples=args.samples or 10_000, seed=args.seed or 0, u_r=u_r)
    console.print(
        Panel(
            f"radius {ell.r:.6g}\n"
            f"invariance violations {report.invariance_violations}\n"
            f"admissibility violations {report.admissibility_violations}\n"
            f"worst invariance margin {report.worst_invariance_margin:.3e}\n"
            f"worst constraint margin {report.worst_constraint_margin:.3e}",
            title=f"{bench}: {report.samples} samples",
        )
    )
    if args.check and report.violations:
        return EXIT_CHECK
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================


def _schemes(text: str) -> List[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _pair(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.app_name, description="Restarted FOM and sparse MPC benchmarks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    parser.add_argument("--log-level", default=None, help="Logging level (default from settings)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="Flat key = value file merged under the flags")
        p.add_argument("--seed", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--scheme", type=_schemes, help="Comma-separated scheme names")
        p.add_argument("--out", help="Report path; a bare file name goes under the report directory")
        p.add_argument("--format", choices=[f.value for f in ReportFormat])
        p.add_argument("--check", action="store_true", help="Exit with 2 when a published value is missed")

    p = sub.add_parser("restart-bench", help="Restart schemes on random Lasso or QP instances")
    common(p)
    p.add_argument("--bench", choices=[BenchKind.LASSO.value, BenchKind.RANDOM_QP.value], default="lasso")
    p.add_argument("--instances", type=int)
    p.add_argument("--alpha", type=float)
    p.set_defaults(handler=cmd_restart_bench)

    p = sub.add_parser("example31", help="Iteration counts on the two-dimensional example")
    common(p)
    p.set_defaults(handler=cmd_example31)

    p = sub.add_parser("mpc-bench", help="Closed-loop MPC on a test bench")
    common(p)
    p.add_argument("--bench", choices=["chemical", "ball_plate", "oscillating"], default="chemical")
    p.add_argument("--formulation", choices=["equ", "lax", "ellip", "mpct"])
    p.add_argument("--solver", choices=["fista", "admm", "eadmm", "dual_fista_restart"])
    p.add_argument("--rho", type=float)
    p.add_argument("--rho-pair", type=_pair, help="MPCT penalties rho1,rho2")
    p.add_argument("--horizon", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--trace", help="Write the closed-loop trace as CSV")
    p.add_argument("--engineering", action="store_true", help="Trace in engineering units")
    p.set_defaults(handler=cmd_mpc_bench)

    p = sub.add_parser("hmpc-bench", help="Harmonic MPC against MPCT")
    common(p)
    p.add_argument("--bench", choices=["ball_plate", "academic"], default="ball_plate")
    p.add_argument("--horizon", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--w", type=float, help="Base frequency")
    p.add_argument("--trace", help="Trace CSV path stem")
    p.set_defaults(handler=cmd_hmpc_bench)

    p = sub.add_parser("validate-ellipsoid", help="Sampling check of a bench's terminal ellipsoid")
    common(p)
    p.add_argument("--bench", choices=["chemical", "ball_plate", "oscillating"], default="oscillating")
    p.add_argument("--samples", type=int)
    p.set_defaults(handler=cmd_validate_ellipsoid)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (SuiteError, ValidationError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
