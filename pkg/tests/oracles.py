"""
Dense reference solvers used as test oracles.

They are exponential or cubic in the problem size and only meant for the
tiny instances of the test-suite.
"""

import itertools
from typing import Optional, Tuple

import numpy as np


def dense_kkt(H: np.ndarray, q: np.ndarray, G: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Solve min 1/2 z'Hz + q'z s.t. Gz = b through the full KKT system."""
    n, m = H.shape[0], G.shape[0]
    K = np.block([[H, G.T], [G, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.concatenate([-q, b]))
    return sol[:n], sol[n:]


def active_set_qp(
    H: np.ndarray,
    q: np.ndarray,
    G: Optional[np.ndarray],
    b: Optional[np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    tol: float = 1e-9,
) -> np.ndarray:
    """
    Minimize a strictly convex QP with equalities and a box by enumerating
    every lower/free/upper pattern and keeping the best feasible candidate.
    """
    n = H.shape[0]
    G = np.zeros((0, n)) if G is None else np.atleast_2d(G)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    best, best_val = None, np.inf
    choices = [tuple(p for p in (-1, 0, 1) if p == 0 or np.isfinite(lo[i] if p < 0 else hi[i])) for i in range(n)]
    for pattern in itertools.product(*choices):
        fixed = [i for i, p in enumerate(pattern) if p != 0]
        rows = [G]
        rhs = [b]
        for i in fixed:
            e = np.zeros((1, n))
            e[0, i] = 1.0
            rows.append(e)
            rhs.append([lo[i] if pattern[i] < 0 else hi[i]])
        A = np.vstack(rows)
        c = np.concatenate([np.atleast_1d(r) for r in rhs]) if rhs else np.zeros(0)
        if A.shape[0] > n:
            continue
        m = A.shape[0]
        K = np.block([[H, A.T], [A, np.zeros((m, m))]])
        try:
            sol = np.linalg.solve(K, np.concatenate([-q, c]))
        except np.linalg.LinAlgError:
            continue
        z = sol[:n]
        if np.any(z < lo - tol) or np.any(z > hi + tol):
            continue
        if G.shape[0] and np.max(np.abs(G @ z - b)) > 1e-7:
            continue
        val = 0.5 * z @ H @ z + q @ z
        if val < best_val:
            best, best_val = z, val
    if best is None:
        raise ValueError("oracle found no feasible candidate")
    return best


def random_banded_blocks(rng: np.random.Generator, N: int, nz: int, nrow: int):
    """Random diagonal H blocks and a chain-structured G with N row blocks over N z-blocks."""
    H = [rng.uniform(0.5, 2.0, nz) for _ in range(N)]
    Gd = [rng.standard_normal((nrow, nz)) for _ in range(N)]
    Gs = [rng.standard_normal((nrow, nz)) for _ in range(N - 1)] + [None]
    return H, Gd, Gs


def mpct_oracle(model, weights, x_t, x_r, u_r) -> dict:
    """
    Dense MPCT in the original variables (x_0..x_{N-1}, u_0..u_{N-1}, x_s, u_s)
    solved by active_set_qp. Returns u_0, x_s and u_s.
    """
    A, B = model.A, model.B
    n, m, N = model.n, model.m, weights.N
    nv = N * n + N * m + n + m
    ix = lambda i: slice(i * n, (i + 1) * n)
    iu = lambda i: slice(N * n + i * m, N * n + (i + 1) * m)
    xs = slice(N * (n + m), N * (n + m) + n)
    us = slice(N * (n + m) + n, nv)

    H = np.zeros((nv, nv))
    q = np.zeros(nv)
    for i in range(N):
        for sl, ss, W in ((ix(i), xs, weights.Q), (iu(i), us, weights.R)):
            H[sl, sl] += W
            H[ss, ss] += W
            H[sl, ss] -= W
            H[ss, sl] -= W
    H[xs, xs] += weights.T
    H[us, us] += weights.S
    q[xs] -= weights.T @ x_r
    q[us] -= weights.S @ u_r

    rows, rhs = [], []

    def eq(entries, value):
        row = np.zeros((n, nv))
        for sl, M in entries:
            row[:, sl] += M
        rows.append(row)
        rhs.append(value)

    I = np.eye(n)
    eq([(ix(0), I)], x_t)
    for i in range(N - 1):
        eq([(ix(i + 1), -I), (ix(i), A), (iu(i), B)], np.zeros(n))
    eq([(xs, -I), (ix(N - 1), A), (iu(N - 1), B)], np.zeros(n))
    eq([(xs, A - I), (us, B)], np.zeros(n))

    lo = np.full(nv, -np.inf)
    hi = np.full(nv, np.inf)
    for i in range(1, N):
        lo[ix(i)], hi[ix(i)] = model.x_lo, model.x_hi
    for i in range(N):
        lo[iu(i)], hi[iu(i)] = model.u_lo, model.u_hi
    lo[xs], hi[xs] = model.x_lo + weights.eps_x, model.x_hi - weights.eps_x
    lo[us], hi[us] = model.u_lo + weights.eps_u, model.u_hi - weights.eps_u
    z = active_set_qp(H, q, np.vstack(rows), np.concatenate(rhs), lo, hi)
    return {"u0": z[iu(0)], "x_s": z[xs], "u_s": z[us]}


def ellipsoid_qp(H, q, G, b, lo, hi, P, c, r) -> np.ndarray:
    """
    min 1/2 z'Hz + q'z s.t. Gz = b, lo <= z <= hi and the trailing block
    of z in E(P, c, r), by SLSQP to tight tolerances.
    """
    from scipy.optimize import minimize

    k = P.shape[0]
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(bb) else bb) for a, bb in zip(lo, hi)]
    cons = [
        {"type": "eq", "fun": lambda z: G @ z - b, "jac": lambda z: G},
        {
            "type": "ineq",
            "fun": lambda z: r * r - (z[-k:] - c) @ P @ (z[-k:] - c),
            "jac": lambda z: np.concatenate([np.zeros(z.size - k), -2.0 * P @ (z[-k:] - c)]),
        },
    ]
    res = minimize(
        lambda z: 0.5 * z @ H @ z + q @ z,
        np.zeros(H.shape[0]),
        jac=lambda z: H @ z + q,
        bounds=bounds,
        constraints=cons,
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    return res.x
