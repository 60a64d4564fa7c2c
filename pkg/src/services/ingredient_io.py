"""
Plain-text export and import of MPC ingredients.

Grammar (one item per line, '#' starts a comment):

    @variant lax
    @N 10
    @rho 15.0            (two values for the MPCT pair)
    @eps 0.0001 0.0001   (eps_x eps_u)
    [A] 2 2
    0.9 0.8
    0.0 1.0
    [x_lo] 1 2
    -10.0 -0.5

Every matrix is a labeled section "[name] rows cols" followed by its rows,
row-major, as decimal floats (repr precision, so values round-trip exactly).
Vectors are single-row sections. Sections: A, B, x_lo, x_hi, u_lo, u_hi,
Q, R, T and optionally E, F, y_lo, y_hi, S, and P, c, r for the ellipsoid.
"""

from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from src.core.exceptions import InvalidInputError, ReportIOError
from src.core.logging import get_logger
from src.schemas.control import LtiModel, MpcVariant, MpcWeights
from src.services.mpc_suite import MpcIngredients, build_ingredients
from src.services.sparse_kernels import Ellipsoid

logger = get_logger(__name__)

_MODEL_FIELDS = ("A", "B", "x_lo", "x_hi", "u_lo", "u_hi", "E", "F", "y_lo", "y_hi")
_VECTOR_FIELDS = {"x_lo", "x_hi", "u_lo", "u_hi", "y_lo", "y_hi", "c"}


def _section(name: str, M) -> List[str]:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"[{name}] {M.shape[0]} {M.shape[1]}"]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in M)
    return lines


def format_ingredients(ing: MpcIngredients) -> str:
    """Render the data that rebuilds ``ing`` through build_ingredients."""
    w = ing.weights
    rho = " ".join(repr(float(r)) for r in (w.rho if isinstance(w.rho, tuple) else (w.rho,)))
    lines = [
        "# restart-fom-mpc ingredients",
        f"@variant {ing.variant.value}",
        f"@N {w.N}",
        f"@rho {rho}",
        f"@eps {w.eps_x!r} {w.eps_u!r}",
    ]
    for name in _MODEL_FIELDS:
        value = getattr(ing.model, name)
        if value is not None:
            lines.extend(_section(name, value))
    for name in ("Q", "R", "T", "S"):
        value = getattr(w, name)
        if value is not None:
            lines.extend(_section(name, value))
    if ing.ellipsoid is not None:
        lines.extend(_section("P", ing.ellipsoid.P))
        lines.extend(_section("c", ing.ellipsoid.c))
        lines.extend(_section("r", [[ing.ellipsoid.r]]))
    return "\n".join(lines) + "\n"


def _parse(text: str):
    header: Dict[str, List[str]] = {}
    sections: Dict[str, np.ndarray] = {}
    lines = [(i, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, ln) for i, ln in lines if ln]
    pos = 0
    while pos < len(lines):
        lineno, line = lines[pos]
        pos += 1
        if line.startswith("@"):
            key, *values = line[1:].split()
            header[key] = values
            continue
        if not line.startswith("["):
            raise InvalidInputError(f"line {lineno}: expected a header or a section, got {line!r}")
        try:
            label, dims = line[1:].split("]", 1)
            rows, cols = (int(t) for t in dims.split())
        except ValueError:
            raise InvalidInputError(f"line {lineno}: malformed section header {line!r}")
        if pos + rows > len(lines):
            raise InvalidInputError(f"line {lineno}: section [{label}] is truncated")
        data = []
        for j in range(rows):
            row_no, row = lines[pos + j]
            try:
                values = [float(t) for t in row.split()]
            except ValueError:
                raise InvalidInputError(f"line {row_no}: non-numeric entry in [{label}]")
            if len(values) != cols:
                raise InvalidInputError(f"line {row_no}: [{label}] row has {len(values)} entries, expected {cols}")
            data.append(values)
        pos += rows
        sections[label.strip()] = np.array(data, dtype=float).reshape(rows, cols)
    return header, sections


def parse_ingredients(text: str) -> MpcIngredients:
    """
    Rebuild ingredients from their text form.

    Raises:
        InvalidInputError: On malformed text or missing sections
    """
    header, sections = _parse(text)
    try:
        variant = MpcVariant(header["variant"][0])
        N = int(header["N"][0])
        rho_values = [float(v) for v in header.get("rho", ["15.0"])]
        eps = [float(v) for v in header.get("eps", ["1e-4", "1e-4"])]
    except (KeyError, IndexError, ValueError) as e:
        raise InvalidInputError(f"ingredient header is incomplete: {e}")

    def get(name: str, required: bool = True) -> Optional[np.ndarray]:
        if name not in sections:
            if required:
                raise InvalidInputError(f"missing section [{name}]")
            return None
        value = sections[name]
        return value.reshape(-1) if name in _VECTOR_FIELDS else value

    model = LtiModel(**{name: get(name, required=name in _MODEL_FIELDS[:6]) for name in _MODEL_FIELDS})
    weights = MpcWeights(
        Q=get("Q"),
        R=get("R"),
        T=get("T"),
        S=get("S", required=False),
        N=N,
        eps_x=eps[0],
        eps_u=eps[1],
        rho=tuple(rho_values) if len(rho_values) == 2 else rho_values[0],
    )
    ellipsoid = None
    if "P" in sections:
        ellipsoid = Ellipsoid(get("P"), get("c"), float(get("r")[0, 0]))
    return build_ingredients(model, weights, variant, ellipsoid=ellipsoid)


def export_ingredients(ing: MpcIngredients, path) -> Path:
    """
    Write ingredients to ``path``.

    Raises:
        ReportIOError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.write_text(format_ingredients(ing), encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"cannot write ingredients: {e}", path=str(path))
    logger.info("wrote %s ingredients to %s", ing.variant.value, path)
    return path


def import_ingredients(path) -> MpcIngredients:
    """
    Read ingredients written by export_ingredients.

    Raises:
        ReportIOError: If the file cannot be read
        InvalidInputError: If its content is malformed
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"cannot read ingredients: {e}", path=str(path))
    return parse_ingredients(text)
