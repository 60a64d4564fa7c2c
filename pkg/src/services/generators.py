"""
Seeded instance generators for the restart benchmarks.

Every instance stream is a pure function of (parameters, seed): the master
seed is expanded with numpy's SeedSequence and each instance draws from its
own PCG64 stream, so instance i does not depend on how many instances are
generated or in which order they are solved.
"""

import math
from typing import List, NamedTuple, Union

import numpy as np

from src.core.exceptions import InvalidInputError
from src.services.fom_core import CompositeProblem, SmoothMetric, lasso_problem, quadratic_problem

SeedLike = Union[int, np.random.SeedSequence]

EXAMPLE31_H = np.diag([0.5, 1.0])
EXAMPLE31_Q = np.array([-0.1, -1.0])
EXAMPLE31_Z_STAR = np.array([0.2, 1.0])
EXAMPLE31_START = np.array([-2.0, -5.0])
EXAMPLE31_F_STAR = -0.51
EXAMPLE31_EPS = 1e-6


class BenchInstance(NamedTuple):
    """A generated problem with its metric, starting point and cond(H) (nan when undefined)."""

    problem: CompositeProblem
    metric: SmoothMetric
    z0: np.ndarray
    cond: float


def rng_for(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator for an int seed or a spawned SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(ss))


def instance_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """One independent child sequence per instance."""
    return np.random.SeedSequence(seed).spawn(count)


def _open_unit(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform samples on (0, 1]."""
    return 1.0 - rng.random(size)


def example31() -> BenchInstance:
    """Two-dimensional quadratic with a deliberately poor metric R = 100 I."""
    problem = quadratic_problem(EXAMPLE31_H, EXAMPLE31_Q, name="example31")
    return BenchInstance(problem, SmoothMetric.identity(2, 100.0), EXAMPLE31_START.copy(), 2.0)


def gen_lasso(N: int, n_z: int, alpha: float, seed: SeedLike) -> BenchInstance:
    """
    Weighted Lasso 1/(2N)||Az - b||^2 + ||Wz||_1.

    A has each entry zero with probability 0.9 and standard normal otherwise,
    b is standard normal and diag(W) is uniform on (0, alpha]. The metric is
    R_ii = sum_j |H_ij| with H = A'A / N. The starting point is the origin.

    Raises:
        InvalidInputError: If n_z <= N, N < 1 or alpha <= 0
    """
    if N < 1 or n_z <= N:
        raise InvalidInputError(f"Lasso needs n_z > N >= 1, got N={N}, n_z={n_z}")
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    rng = rng_for(seed)
    keep = rng.random((N, n_z)) >= 0.9
    A = np.where(keep, rng.standard_normal((N, n_z)), 0.0)
    b = rng.standard_normal(N)
    w = alpha * _open_unit(rng, n_z)
    H = (A.T @ A) / N
    problem = lasso_problem(A, b, w, name=f"lasso-{N}x{n_z}")
    return BenchInstance(problem, SmoothMetric.gershgorin(H), np.zeros(n_z), math.nan)


def gen_random_qp(
    n_z: int,
    alpha: float,
    beta: float,
    seed: SeedLike,
    m_rows: int = 15,
) -> BenchInstance:
    """
    Unconstrained QP 1/2 z'Hz + q'z with H = 1/2 M'M + alpha I.

    M (m_rows x n_z) and q have entries uniform on (0, 1] and (0, beta].
    With m_rows < n_z the smallest eigenvalue of H is exactly alpha; the
    default m_rows puts the largest near alpha + 383, which reproduces the
    condition numbers reported for these benchmarks. The starting point is
    the origin.

    Raises:
        InvalidInputError: If a parameter is non-positive
    """
    if n_z < 1 or m_rows < 1:
        raise InvalidInputError("n_z and m_rows must be positive")
    if not (alpha > 0 and beta > 0):
        raise InvalidInputError(f"alpha and beta must be positive, got {alpha}, {beta}")
    rng = rng_for(seed)
    M = _open_unit(rng, (m_rows, n_z))
    H = 0.5 * (M.T @ M) + alpha * np.eye(n_z)
    q = beta * _open_unit(rng, n_z)
    evals = np.linalg.eigvalsh(H)
    problem = quadratic_problem(H, q, name=f"qp-{n_z}")
    return BenchInstance(problem, SmoothMetric.gershgorin(H), np.zeros(n_z), float(evals[-1] / evals[0]))
