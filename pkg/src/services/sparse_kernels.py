"""
Structure-exploiting kernels for banded quadratic programs.

This module provides:
- BandedCholesky / banded_chol_factor / solve_W: block-bidiagonal Cholesky of a
  block-tridiagonal W and the two-pass substitution that solves W z = w
- BandedQpStructure / EqQpData / solve_eqQP: equality-constrained QPs whose
  W = G H^{-1} G' is block tridiagonal
- solve_boxQP: separable box-constrained QPs with diagonal Hessian
- Ellipsoid / ellipsoid_project: P-weighted projection onto E(P, c, r)

Only the repeating n x n blocks are stored; there are no sparse-matrix
index arrays.
"""

import math
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular

from src.core.exceptions import FactorizationError, InvalidInputError
from src.core.logging import get_logger
from src.core.numerics import as_vector

logger = get_logger(__name__)


# =============================================================================
# Banded Cholesky
# =============================================================================


class BandedCholesky:
    """
    Upper block-bidiagonal factor W_c with W = W_c' W_c.

    beta_hat[k] is the upper-triangular k-th diagonal block with its
    diagonal replaced by reciprocals; alpha[k] couples block k to k+1.
    """

    __slots__ = ("beta_hat", "alpha")

    def __init__(self, beta_hat: np.ndarray, alpha: np.ndarray):
        self.beta_hat = beta_hat
        self.alpha = alpha

    @property
    def n(self) -> int:
        return int(self.beta_hat.shape[1])

    @property
    def N(self) -> int:
        return int(self.beta_hat.shape[0])

    @property
    def size(self) -> int:
        return self.n * self.N

    def beta(self, k: int) -> np.ndarray:
        """k-th diagonal block with its true diagonal."""
        b = self.beta_hat[k].copy()
        idx = np.arange(self.n)
        b[idx, idx] = 1.0 / b[idx, idx]
        return b

    def to_dense(self) -> np.ndarray:
        """Dense W_c (tests and diagnostics only)."""
        n, N = self.n, self.N
        Wc = np.zeros((n * N, n * N))
        for k in range(N):
            Wc[k * n:(k + 1) * n, k * n:(k + 1) * n] = self.beta(k)
            if k < N - 1:
                Wc[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = self.alpha[k]
        return Wc


def banded_chol_factor(D: Sequence[np.ndarray], E: Sequence[np.ndarray]) -> BandedCholesky:
    """
    Blockwise Cholesky of a symmetric block-tridiagonal matrix.

    Args:
        D: N diagonal blocks (n x n)
        E: N-1 upper off-diagonal blocks, E[k] = W_{k,k+1}

    Returns:
        BandedCholesky with beta_1 = chol(D_1), alpha_k solving beta_k' alpha_k = E_k,
        beta_{k+1} = chol(D_{k+1} - alpha_k' alpha_k)

    Raises:
        InvalidInputError: On inconsistent block shapes
        FactorizationError: If a pivot block is not positive definite
    """
    N = len(D)
    if N == 0:
        raise InvalidInputError("need at least one diagonal block")
    n = np.shape(D[0])[0]
    if len(E) != N - 1:
        raise InvalidInputError(f"expected {N - 1} off-diagonal blocks, got {len(E)}")
    for blk in list(D) + list(E):
        if np.shape(blk) != (n, n):
            raise InvalidInputError(f"all blocks must be {n}x{n}, got {np.shape(blk)}")

    beta_hat = np.empty((N, n, n))
    alpha = np.empty((max(N - 1, 0), n, n))
    idx = np.arange(n)
    pivot = np.asarray(D[0], dtype=float)
    for k in range(N):
        try:
            beta = cholesky(pivot, lower=False, check_finite=True)
        except (LinAlgError, ValueError) as e:
            raise FactorizationError(f"block {k} is not positive definite: {e}", block_index=k)
        if k < N - 1:
            alpha[k] = solve_triangular(beta, np.asarray(E[k], dtype=float), trans="T", lower=False)
            pivot = np.asarray(D[k + 1], dtype=float) - alpha[k].T @ alpha[k]
        diag = beta[idx, idx]
        if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise FactorizationError(f"block {k} has a non-positive pivot", block_index=k)
        beta[idx, idx] = 1.0 / diag
        beta_hat[k] = beta
    return BandedCholesky(beta_hat, alpha)


def solve_W(factor: BandedCholesky, w, out: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Solve W z = w with the banded factor.

    Forward pass solves W_c' y = w block by block, the backward pass solves
    W_c z = y from the last block up. A single working array is updated in
    place and divisions are replaced by products with the stored reciprocals.

    Args:
        factor: BandedCholesky of W
        w: Right-hand side of length N*n
        out: Optional caller-owned buffer receiving the solution

    Raises:
        InvalidInputError: If w has the wrong length
    """
    n, N = factor.n, factor.N
    w = np.asarray(w, dtype=float)
    if w.shape != (n * N,):
        raise InvalidInputError(f"right-hand side has shape {w.shape}, expected ({n * N},)")
    z = out if out is not None else np.empty(n * N)
    if z is not w:
        z[:] = w
    bh = factor.beta_hat
    al = factor.alpha

    # Forward substitution with W_c'
    for k in range(N):
        o = k * n
        if k > 0:
            z[o:o + n] -= al[k - 1].T @ z[o - n:o]
        b = bh[k]
        for j in range(n):
            if j:
                z[o + j] -= b[:j, j] @ z[o:o + j]
            z[o + j] *= b[j, j]

    # Backward substitution with W_c
    for k in range(N - 1, -1, -1):
        o = k * n
        if k < N - 1:
            z[o:o + n] -= al[k] @ z[o + n:o + 2 * n]
        b = bh[k]
        for j in range(n - 1, -1, -1):
            if j < n - 1:
                z[o + j] -= b[j, j + 1:] @ z[o + j + 1:o + n]
            z[o + j] *= b[j, j]
    return z


# =============================================================================
# Equality-constrained QP
# =============================================================================


def _block_inverse(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        if np.any(H <= 0):
            raise InvalidInputError("diagonal Hessian block must be positive")
        return 1.0 / H
    if np.count_nonzero(H - np.diag(np.diag(H))) == 0:
        d = np.diag(H)
        if np.any(d <= 0):
            raise InvalidInputError("diagonal Hessian block must be positive")
        return 1.0 / d
    try:
        L = cholesky(H, lower=True)
    except LinAlgError as e:
        raise InvalidInputError(f"Hessian block is not positive definite: {e}")
    Linv = solve_triangular(L, np.eye(H.shape[0]), lower=True)
    return Linv.T @ Linv


def _apply_block(Hinv: np.ndarray, v: np.ndarray) -> np.ndarray:
    return Hinv * v if Hinv.ndim == 1 else Hinv @ v


class BandedQpStructure:
    """
    Block-diagonal H with a banded equality matrix G.

    Row block i touches z-block i through Gd[i] and z-block i+1 through
    Gs[i] (None when absent). All row blocks share the size n, so
    W = G H^{-1} G' is block tridiagonal with n x n blocks.

    Repeated blocks may be passed as the same array object; nothing is copied.
    """

    def __init__(
        self,
        H_blocks: Sequence[np.ndarray],
        Gd: Sequence[np.ndarray],
        Gs: Sequence[Optional[np.ndarray]],
    ):
        if len(Gd) != len(Gs):
            raise InvalidInputError("Gd and Gs need one entry per row block")
        if len(Gd) > len(H_blocks):
            raise InvalidInputError("more row blocks than z-blocks")
        self.H_blocks: List[np.ndarray] = list(H_blocks)
        self.Gd: List[np.ndarray] = [np.asarray(g, dtype=float) for g in Gd]
        self.Gs: List[Optional[np.ndarray]] = [None if g is None else np.asarray(g, dtype=float) for g in Gs]

        sizes = [np.shape(h)[0] for h in self.H_blocks]
        self.z_offsets = np.concatenate(([0], np.cumsum(sizes))).astype(int)
        self.n_z = int(self.z_offsets[-1])
        self.n_row = int(self.Gd[0].shape[0]) if self.Gd else 0
        self.m_z = self.n_row * len(self.Gd)

        for i, g in enumerate(self.Gd):
            if g.shape != (self.n_row, sizes[i]):
                raise InvalidInputError(f"Gd[{i}] has shape {g.shape}, expected ({self.n_row}, {sizes[i]})")
            s = self.Gs[i]
            if s is not None:
                if i + 1 >= len(sizes) or s.shape != (self.n_row, sizes[i + 1]):
                    raise InvalidInputError(f"Gs[{i}] has shape {s.shape} incompatible with z-block {i + 1}")

    @property
    def n_blocks(self) -> int:
        return len(self.H_blocks)

    @property
    def n_rows(self) -> int:
        return len(self.Gd)

    def block(self, v: np.ndarray, i: int) -> np.ndarray:
        return v[self.z_offsets[i]:self.z_offsets[i + 1]]

    def G_mul(self, z: np.ndarray) -> np.ndarray:
        """G z using only the stored blocks."""
        n = self.n_row
        out = np.empty(self.m_z)
        for i, g in enumerate(self.Gd):
            r = g @ self.block(z, i)
            if self.Gs[i] is not None:
                r = r + self.Gs[i] @ self.block(z, i + 1)
            out[i * n:(i + 1) * n] = r
        return out

    def GT_mul(self, mu: np.ndarray) -> np.ndarray:
        """G' mu using only the stored blocks."""
        n = self.n_row
        out = np.zeros(self.n_z)
        for i, g in enumerate(self.Gd):
            m_i = mu[i * n:(i + 1) * n]
            out[self.z_offsets[i]:self.z_offsets[i + 1]] += g.T @ m_i
            if self.Gs[i] is not None:
                out[self.z_offsets[i + 1]:self.z_offsets[i + 2]] += self.Gs[i].T @ m_i
        return out

    def H_mul(self, z: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_z)
        for i, h in enumerate(self.H_blocks):
            h = np.asarray(h)
            sl = slice(self.z_offsets[i], self.z_offsets[i + 1])
            out[sl] = h * z[sl] if h.ndim == 1 else h @ z[sl]
        return out

    def to_dense(self):
        """Dense (H, G) for oracles and diagnostics."""
        H = np.zeros((self.n_z, self.n_z))
        G = np.zeros((self.m_z, self.n_z))
        for i, h in enumerate(self.H_blocks):
            h = np.asarray(h, dtype=float)
            sl = slice(self.z_offsets[i], self.z_offsets[i + 1])
            H[sl, sl] = np.diag(h) if h.ndim == 1 else h
        n = self.n_row
        for i, g in enumerate(self.Gd):
            rows = slice(i * n, (i + 1) * n)
            G[rows, self.z_offsets[i]:self.z_offsets[i + 1]] = g
            if self.Gs[i] is not None:
                G[rows, self.z_offsets[i + 1]:self.z_offsets[i + 2]] = self.Gs[i]
        return H, G


class EqQpData:
    """
    Offline data of min 1/2 z'Hz + q'z s.t. Gz = b: H^{-1} blocks and the banded factor of W.
    """

    def __init__(self, structure: BandedQpStructure):
        self.structure = structure
        cache = {}
        self.Hinv: List[np.ndarray] = []
        for h in structure.H_blocks:
            key = id(h)
            if key not in cache:
                cache[key] = _block_inverse(h)
            self.Hinv.append(cache[key])
        D, E = self._w_blocks()
        self.W_factor = banded_chol_factor(D, E)

    def _gh(self, g: np.ndarray, i: int) -> np.ndarray:
        Hi = self.Hinv[i]
        return g * Hi if Hi.ndim == 1 else g @ Hi

    def _w_blocks(self):
        s = self.structure
        D, E = [], []
        for i, g in enumerate(s.Gd):
            Dii = self._gh(g, i) @ g.T
            if s.Gs[i] is not None:
                Dii = Dii + self._gh(s.Gs[i], i + 1) @ s.Gs[i].T
            D.append(0.5 * (Dii + Dii.T))
            if i + 1 < s.n_rows:
                if s.Gs[i] is None:
                    E.append(np.zeros((s.n_row, s.n_row)))
                else:
                    E.append(self._gh(s.Gs[i], i + 1) @ s.Gd[i + 1].T)
        return D, E

    def Hinv_mul(self, v: np.ndarray) -> np.ndarray:
        s = self.structure
        out = np.empty(s.n_z)
        for i, Hi in enumerate(self.Hinv):
            sl = slice(s.z_offsets[i], s.z_offsets[i + 1])
            out[sl] = _apply_block(Hi, v[sl])
        return out

    def W_mul(self, mu: np.ndarray) -> np.ndarray:
        """W mu = G H^{-1} G' mu."""
        s = self.structure
        return s.G_mul(self.Hinv_mul(s.GT_mul(mu)))


class EqQpSolution(NamedTuple):
    z: np.ndarray
    mu: np.ndarray


def solve_eqQP(data: EqQpData, q, b) -> EqQpSolution:
    """
    Explicit solution of min 1/2 z'Hz + q'z s.t. Gz = b.

    mu solves W mu = -(G H^{-1} q + b); z = -H^{-1}(G' mu + q).

    Raises:
        InvalidInputError: On dimension mismatch
    """
    s = data.structure
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    if q.shape != (s.n_z,) or b.shape != (s.m_z,):
        raise InvalidInputError(
            f"q/b have shapes {q.shape}/{b.shape}, expected ({s.n_z},)/({s.m_z},)"
        )
    w = -(s.G_mul(data.Hinv_mul(q)) + b)
    mu = solve_W(data.W_factor, w, out=w)
    z = -data.Hinv_mul(s.GT_mul(mu) + q)
    return EqQpSolution(z, mu)


# =============================================================================
# Box-constrained QP
# =============================================================================


def solve_boxQP(q, Hdiag_inv, lo, hi) -> np.ndarray:
    """
    min 1/2 z'Hz + q'z s.t. lo <= z <= hi for diagonal H.

    Args:
        q: Linear term
        Hdiag_inv: Reciprocals of diag(H), or a scalar (e.g. 1/rho)
        lo, hi: Bounds with lo <= hi

    Raises:
        InvalidInputError: If some lo_j > hi_j
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise InvalidInputError("box bounds must satisfy lo <= hi")
    return np.maximum(np.minimum(-np.asarray(Hdiag_inv) * q, hi), lo)


# =============================================================================
# Ellipsoid projection
# =============================================================================


class Ellipsoid:
    """
    E(P, c, r) = {x : (x - c)' P (x - c) <= r^2}.

    P_half is the symmetric square root of P and P_neg_half its inverse,
    both from an eigendecomposition computed once.
    """

    def __init__(self, P, c, r: float, _roots: Optional[tuple] = None):
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise InvalidInputError(f"P must be square, got shape {P.shape}")
        c = as_vector(c, P.shape[0], "c")
        if not r > 0:
            raise InvalidInputError(f"ellipsoid radius must be positive, got {r}")
        if _roots is None:
            if not np.allclose(P, P.T, atol=1e-12 * max(1.0, float(np.max(np.abs(P))))):
                raise InvalidInputError("P must be symmetric")
            evals, evecs = eigh(0.5 * (P + P.T))
            if evals[0] <= 1e-12 * evals[-1] or evals[-1] <= 0:
                raise InvalidInputError("P must be positive definite")
            root = np.sqrt(evals)
            _roots = ((evecs * root) @ evecs.T, (evecs / root) @ evecs.T)
        self.P = P
        self.P_half, self.P_neg_half = _roots
        self.c = c
        self.r = float(r)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def with_center_radius(self, c=None, r: Optional[float] = None) -> "Ellipsoid":
        """Same shape matrix with a new center and/or radius; no refactorization."""
        return Ellipsoid(
            self.P,
            self.c if c is None else c,
            self.r if r is None else r,
            _roots=(self.P_half, self.P_neg_half),
        )

    def p_norm(self, v: np.ndarray) -> float:
        """||v||_P."""
        return math.sqrt(max(float(v @ (self.P @ v)), 0.0))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        d = x - self.c
        return float(d @ (self.P @ d)) <= self.r * self.r + tol


def ellipsoid_project(ell: Ellipsoid, a) -> np.ndarray:
    """
    P-weighted projection argmin_{v in E(P,c,r)} ||v - a||_P.

    Returns a when it lies inside, otherwise c + r (a - c) / ||a - c||_P.
    """
    a = np.asarray(a, dtype=float)
    d = a - ell.c
    dist = ell.p_norm(d)
    if dist <= ell.r:
        return a.copy()
    return ell.c + (ell.r / dist) * d
