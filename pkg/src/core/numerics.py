"""
Norm helpers with compensated summation.

Golden iteration counts depend on exit tests that compare norms against
tight tolerances, so squared sums are accumulated with math.fsum.
"""

import math

import numpy as np

from src.core.exceptions import InvalidInputError


def norm2(v: np.ndarray) -> float:
    """Euclidean norm."""
    return math.sqrt(math.fsum(np.square(v)))


def norm_inf(v: np.ndarray) -> float:
    """Infinity norm; 0 for empty vectors."""
    return float(np.max(np.abs(v))) if v.size else 0.0


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product with compensated summation."""
    return math.fsum(np.multiply(a, b))


def as_vector(v, dim: int = -1, name: str = "vector") -> np.ndarray:
    """
    Convert to a finite 1-D float array, optionally checking its length.

    Raises:
        InvalidInputError: On wrong dimension or non-finite entries
    """
    arr = np.asarray(v, dtype=float).reshape(-1)
    if dim >= 0 and arr.size != dim:
        raise InvalidInputError(f"{name} has length {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr
