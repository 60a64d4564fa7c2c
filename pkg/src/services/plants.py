"""
Test-bench plants and the model pipeline that turns them into MPC models.

This module provides:
- chemical_plant_rhs: two reactors and a separator (12 states, 6 inputs)
- ball_plate_rhs: ball on a tilting plate (8 states, 2 inputs)
- oscillating_masses_model: three masses joined by springs (linear)
- linearize / discretize_zoh / scale_model: continuous plant -> scaled
  discrete LtiModel
- chemical_operating_point: steady state refined from the tabulated point
- academic_model, controllability_index
- bench_plant / bench_model / bench_reference: the three benches by name

Scaled incremental units are x = N_x (chi - chi_o), u = N_u (v - v_o).
"""

import math
from functools import lru_cache, partial
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import expm
from scipy.optimize import least_squares, root

from src.core.config import settings
from src.core.exceptions import ConfigurationError, EvaluationError, InvalidInputError
from src.core.logging import get_logger
from src.core.numerics import as_vector
from src.schemas.control import DiscreteLtiModel, LtiModel, OperatingPoint

logger = get_logger(__name__)


class NonlinearPlant(BaseModel):
    """Continuous-time plant d chi / dt = rhs(chi, v) with engineering-unit bounds."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x_lo: np.ndarray
    x_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    sample_time: float = Field(gt=0, description="Sampling period used by the benches")
    params: Dict[str, float] = Field(default_factory=dict)


# =============================================================================
# Chemical plant
# =============================================================================


class ChemicalPlantParams(BaseModel):
    """Physical constants of the double reactor and separator."""

    model_config = ConfigDict(frozen=True)

    A1: float = 1.0
    A2: float = 1.0
    A3: float = 1.0
    rho: float = Field(default=1100.0, description="Density [kg/m^3]")
    Cp: float = Field(default=4.0, description="Specific heat [kJ/kg K]")
    kv1: float = 50.0
    kv2: float = 50.0
    kv3: float = 30.0
    T0: float = Field(default=313.0, description="Feed temperature [K]")
    kA: float = 1e-5
    kB: float = 5e-6
    EA_R: float = Field(default=-2840.0, description="Activation energy over R [K]")
    EB_R: float = -2077.0
    dHA: float = Field(default=-100.0, description="Reaction enthalpy [kJ/kg]")
    dHB: float = -39.0
    alpha_A: float = 3.5
    alpha_B: float = 1.1
    alpha_C: float = 0.5
    alpha_D: float = 0.001
    cA0: float = 1.0
    cB0: float = 0.0


CHEMICAL_STATE_NAMES = ("h1", "cA1", "cB1", "T1", "h2", "cA2", "cB2", "T2", "h3", "cA3", "cB3", "T3")
CHEMICAL_INPUT_NAMES = ("Q1", "Q2", "Q3", "Ff1", "Ff2", "FR")

# Tabulated operating state; refined by chemical_operating_point().
CHEMICAL_TABLE_STATE = np.array([0.7, 0.4155, 0.5480, 329.0, 0.9, 0.2581, 0.6755, 333.0, 1.33, 0.2282, 0.7, 323.0])

# Diagonals of N_x and N_u.
CHEMICAL_SCALING = (
    np.array([1, 1, 1, 0.1, 1, 1, 1, 0.1, 1, 1, 1, 0.1]),
    np.array([0.001, 0.001, 0.001, 0.1, 0.1, 0.1]),
)


def chemical_plant_rhs(chi, v, params: Optional[ChemicalPlantParams] = None) -> np.ndarray:
    """
    State derivative of the chemical plant.

    chi = (h1, cA1, cB1, T1, h2, cA2, cB2, T2, h3, cA3, cB3, T3),
    v = (Q1, Q2, Q3, Ff1, Ff2, FR). The recycle has the separator
    temperature, and the heat terms divide by the liquid height.

    Raises:
        EvaluationError: If some liquid height is not positive
    """
    p = params or ChemicalPlantParams()
    h1, cA1, cB1, T1, h2, cA2, cB2, T2, h3, cA3, cB3, T3 = np.asarray(chi, dtype=float)
    Q1, Q2, Q3, Ff1, Ff2, FR = np.asarray(v, dtype=float)
    if min(h1, h2, h3) <= 0:
        raise EvaluationError(f"liquid heights must be positive, got {(h1, h2, h3)}")

    F1, F2, F3 = p.kv1 * h1, p.kv2 * h2, p.kv3 * h3
    FD = p.alpha_D * FR
    cC3 = 1.0 - cA3 - cB3
    c3 = p.alpha_A * cA3 + p.alpha_B * cB3 + p.alpha_C * cC3
    cAR = p.alpha_A * cA3 / c3
    cBR = p.alpha_B * cB3 / c3
    TR = T3
    kA1 = p.kA * math.exp(-p.EA_R / T1)
    kB1 = p.kB * math.exp(-p.EB_R / T1)
    kA2 = p.kA * math.exp(-p.EA_R / T2)
    kB2 = p.kB * math.exp(-p.EB_R / T2)
    m1 = p.rho * p.A1 * h1
    m2 = p.rho * p.A2 * h2
    m3 = p.rho * p.A3 * h3

    return np.array([
        (Ff1 + FR - F1) / (p.rho * p.A1),
        (Ff1 * (p.cA0 - cA1) + FR * (cAR - cA1)) / m1 - kA1 * cA1,
        (Ff1 * (p.cB0 - cB1) + FR * (cBR - cB1)) / m1 - kB1 * cB1 + kA1 * cA1,
        (Ff1 * (p.T0 - T1) + FR * (TR - T1)) / m1 + Q1 / (m1 * p.Cp)
        - (kA1 * cA1 * p.dHA + kB1 * cB1 * p.dHB) / p.Cp,
        (Ff2 + F1 - F2) / (p.rho * p.A2),
        (Ff2 * (p.cA0 - cA2) + F1 * (cA1 - cA2)) / m2 - kA2 * cA2,
        (Ff2 * (p.cB0 - cB2) + F1 * (cB1 - cB2)) / m2 - kB2 * cB2 + kA2 * cA2,
        (Ff2 * (p.T0 - T2) + F1 * (T1 - T2)) / m2 + Q2 / (m2 * p.Cp)
        - (kA2 * cA2 * p.dHA + kB2 * cB2 * p.dHB) / p.Cp,
        (F2 - FD - FR - F3) / (p.rho * p.A3),
        (F2 * (cA2 - cA3) - (FD + FR) * (cAR - cA3)) / m3,
        (F2 * (cB2 - cB3) - (FD + FR) * (cBR - cB3)) / m3,
        F2 * (T2 - T3) / m3 + Q3 / (m3 * p.Cp),
    ])


def chemical_plant(params: Optional[ChemicalPlantParams] = None) -> NonlinearPlant:
    p = params or ChemicalPlantParams()
    return NonlinearPlant(
        name="chemical",
        n=12,
        m=6,
        rhs=partial(chemical_plant_rhs, params=p),
        x_lo=np.array([0, 0, 0, 320, 0, 0, 0, 320, 0, 0, 0, 320], dtype=float),
        x_hi=np.array([2, 1, 1, 348, 2, 1, 1, 348, 2, 1, 1, 338], dtype=float),
        u_lo=np.array([-5000, -5000, -5000, 0, 0, 0], dtype=float),
        u_hi=np.array([5000, 5000, 5000, 50, 50, 50], dtype=float),
        sample_time=3.0,
        params=p.model_dump(),
    )


@lru_cache(maxsize=4)
def _chemical_operating_point(params: Optional[ChemicalPlantParams]) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    plant = chemical_plant(params)
    N_x = CHEMICAL_SCALING[0]
    guess = np.array([0.0, 0.0, 0.0, 30.0, 10.0, 5.0])

    fit = least_squares(
        lambda v: N_x * plant.rhs(CHEMICAL_TABLE_STATE, v),
        guess,
        bounds=(plant.u_lo, plant.u_hi),
        x_scale=np.array([1000.0, 1000.0, 1000.0, 10.0, 10.0, 10.0]),
    )
    if not fit.success:
        raise EvaluationError(f"operating input fit failed: {fit.message}")
    u_o = fit.x
    sol = root(lambda chi: plant.rhs(chi, u_o), CHEMICAL_TABLE_STATE, method="hybr")
    if not sol.success:
        raise EvaluationError(f"operating state refinement failed: {sol.message}")
    residual = float(np.max(np.abs(plant.rhs(sol.x, u_o))))
    logger.info(
        "chemical operating point refined (max |rhs| = %.2e, max |delta chi| = %.3g)",
        residual,
        float(np.max(np.abs(sol.x - CHEMICAL_TABLE_STATE))),
    )
    return tuple(sol.x), tuple(u_o)


def chemical_operating_point(params: Optional[ChemicalPlantParams] = None) -> OperatingPoint:
    """
    Steady state of the chemical plant near the tabulated operating point.

    The operating input is fitted by bounded least squares on the scaled
    derivatives at the tabulated state; the state is then refined by a root
    solve of rhs(chi, v_o) = 0 seeded at the table.

    Raises:
        EvaluationError: If either solve fails
    """
    chi, v = _chemical_operating_point(params)
    N_x, N_u = CHEMICAL_SCALING
    return OperatingPoint(x=np.array(chi), u=np.array(v), N_x=N_x, N_u=N_u)


# =============================================================================
# Ball and plate
# =============================================================================

BALL_MASS = 0.05
BALL_RADIUS = 0.01
GRAVITY = 9.81


def ball_plate_rhs(chi, v) -> np.ndarray:
    """
    chi = (p1, dp1, th1, dth1, p2, dp2, th2, dth2), v = (ddth1, ddth2).

    A solid ball (I_b = 2/5 m r^2) rolling without slipping, so the
    acceleration factor m / (m + I_b / r^2) is 5/7.
    """
    p1, dp1, th1, dth1, p2, dp2, th2, dth2 = np.asarray(chi, dtype=float)
    a1, a2 = np.asarray(v, dtype=float)
    I_b = 0.4 * BALL_MASS * BALL_RADIUS ** 2
    k = BALL_MASS / (BALL_MASS + I_b / BALL_RADIUS ** 2)
    return np.array([
        dp1,
        k * (p1 * dth1 ** 2 + p2 * dth1 * dth2 + GRAVITY * math.sin(th1)),
        dth1,
        a1,
        dp2,
        k * (p2 * dth2 ** 2 + p1 * dth1 * dth2 + GRAVITY * math.sin(th2)),
        dth2,
        a2,
    ])


def ball_plate() -> NonlinearPlant:
    inf = np.inf
    axis_hi = np.array([inf, 0.5, math.pi / 4, 0.4])
    return NonlinearPlant(
        name="ball_plate",
        n=8,
        m=2,
        rhs=ball_plate_rhs,
        x_lo=-np.tile(axis_hi, 2),
        x_hi=np.tile(axis_hi, 2),
        u_lo=np.full(2, -inf),
        u_hi=np.full(2, inf),
        sample_time=0.2,
        params={"m": BALL_MASS, "r": BALL_RADIUS, "g": GRAVITY},
    )


# =============================================================================
# Oscillating masses
# =============================================================================


def oscillating_masses_model(
    masses: Tuple[float, float, float] = (1.0, 0.5, 1.0),
    k: float = 2.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Continuous (A_c, B_c) of three masses in a spring chain.

    State (p1, p2, p3, v1, v2, v3); inputs are forces on the outer masses.
    """
    m = np.asarray(masses, dtype=float)
    K = k * np.array([[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]])
    A_c = np.zeros((6, 6))
    A_c[:3, 3:] = np.eye(3)
    A_c[3:, :3] = K / m[:, None]
    B_c = np.zeros((6, 2))
    B_c[3, 0] = 1.0 / m[0]
    B_c[5, 1] = 1.0 / m[2]
    return A_c, B_c


def oscillating_masses() -> NonlinearPlant:
    A_c, B_c = oscillating_masses_model()
    inf = np.inf
    return NonlinearPlant(
        name="oscillating",
        n=6,
        m=2,
        rhs=lambda chi, v: A_c @ np.asarray(chi, dtype=float) + B_c @ np.asarray(v, dtype=float),
        x_lo=np.array([-0.3, -0.3, -0.3, -inf, -inf, -inf]),
        x_hi=np.array([0.3, 0.3, 0.3, inf, inf, inf]),
        u_lo=np.full(2, -0.8),
        u_hi=np.full(2, 0.8),
        sample_time=0.2,
        params={"m1": 1.0, "m2": 0.5, "m3": 1.0, "k": 2.0},
    )


# =============================================================================
# Model pipeline
# =============================================================================


def linearize(plant: NonlinearPlant, op: OperatingPoint, h: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Central finite-difference Jacobians of the plant at the operating point.

    The step is h in scaled units, i.e. h / N_x[i] on state i and
    h / N_u[i] on input i.

    Raises:
        InvalidInputError: If h is not positive
        EvaluationError: If the right-hand side is not finite on the stencil
    """
    h = settings.fd_step if h is None else h
    if not h > 0:
        raise InvalidInputError(f"finite-difference step must be positive, got {h}")
    op.check()
    chi0 = as_vector(op.x, plant.n, "operating state")
    v0 = as_vector(op.u, plant.m, "operating input")

    def f(chi, v):
        out = np.asarray(plant.rhs(chi, v), dtype=float)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{plant.name} rhs is not finite near the operating point")
        return out

    A_c = np.empty((plant.n, plant.n))
    for i in range(plant.n):
        d = np.zeros(plant.n)
        d[i] = h / op.N_x[i]
        A_c[:, i] = (f(chi0 + d, v0) - f(chi0 - d, v0)) / (2.0 * d[i])
    B_c = np.empty((plant.n, plant.m))
    for i in range(plant.m):
        d = np.zeros(plant.m)
        d[i] = h / op.N_u[i]
        B_c[:, i] = (f(chi0, v0 + d) - f(chi0, v0 - d)) / (2.0 * d[i])
    return A_c, B_c


def discretize_zoh(A_c, B_c, Ts: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact zero-order-hold discretization.

    exp([[A_c, B_c], [0, 0]] Ts) = [[A, B], [0, I]].
    """
    if not Ts > 0:
        raise InvalidInputError(f"sample time must be positive, got {Ts}")
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_c = np.asarray(B_c, dtype=float).reshape(A_c.shape[0], -1)
    n, m = B_c.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    Phi = expm(M * Ts)
    return Phi[:n, :n], Phi[:n, n:]


def scale_model(
    A,
    B,
    op: OperatingPoint,
    x_lo,
    x_hi,
    u_lo,
    u_hi,
    sample_time: float,
) -> DiscreteLtiModel:
    """
    Model in scaled incremental units: N_x A N_x^-1, N_x B N_u^-1, bounds
    shifted by the operating point and scaled.

    Raises:
        InvalidInputError: On a zero or negative scaling entry
    """
    op.check()
    Nx, Nu = op.N_x, op.N_u
    A_s = (Nx[:, None] * np.asarray(A, dtype=float)) / Nx[None, :]
    B_s = (Nx[:, None] * np.asarray(B, dtype=float)) / Nu[None, :]
    model = DiscreteLtiModel(
        A=A_s,
        B=B_s,
        x_lo=op.scale_state(x_lo),
        x_hi=op.scale_state(x_hi),
        u_lo=op.scale_input(u_lo),
        u_hi=op.scale_input(u_hi),
        sample_time=sample_time,
        operating_point=op,
    )
    return model.check()


def plant_model(plant: NonlinearPlant, op: OperatingPoint, h: Optional[float] = None) -> DiscreteLtiModel:
    """linearize -> discretize_zoh -> scale_model."""
    A_c, B_c = linearize(plant, op, h)
    A, B = discretize_zoh(A_c, B_c, plant.sample_time)
    return scale_model(A, B, op, plant.x_lo, plant.x_hi, plant.u_lo, plant.u_hi, plant.sample_time)


# =============================================================================
# Benches by name
# =============================================================================

BENCH_NAMES = ("chemical", "ball_plate", "oscillating")

# References in engineering units.
BENCH_REFERENCES: Dict[str, Tuple[np.ndarray, np.ndarray]] = {
    "chemical": (
        np.array([0.7, 0.419, 0.545, 329.571, 0.9, 0.261, 0.673, 333.435, 1.333, 0.231, 0.698, 337.602]),
        np.array([0.0, 0.0, 750.0, 30.0, 10.0, 5.0]),
    ),
    "ball_plate": (np.array([1.8, 0, 0, 0, 1.4, 0, 0, 0], dtype=float), np.zeros(2)),
    "oscillating": (np.array([0.25, 0.25, 0.25, 0, 0, 0], dtype=float), np.array([0.5, 0.5])),
}


def bench_plant(name: str) -> Tuple[NonlinearPlant, OperatingPoint]:
    """
    Plant and operating point of a bench.

    Raises:
        InvalidInputError: For an unknown bench name
    """
    if name == "chemical":
        return chemical_plant(), chemical_operating_point()
    if name == "ball_plate":
        return ball_plate(), OperatingPoint(
            x=np.zeros(8), u=np.zeros(2), N_x=[0.1, 1, 1, 1, 0.1, 1, 1, 1], N_u=[1.0, 1.0]
        )
    if name == "oscillating":
        return oscillating_masses(), OperatingPoint(
            x=np.zeros(6), u=np.zeros(2), N_x=[10, 10, 10, 1, 1, 1], N_u=[1.0, 1.0]
        )
    raise InvalidInputError(f"unknown bench {name!r}; expected one of {BENCH_NAMES}")


def bench_model(name: str, scaled: bool = True) -> DiscreteLtiModel:
    """
    Discrete prediction model of a bench.

    With scaled=False the bench scalings are replaced by identities
    (incremental engineering units).
    """
    plant, op = bench_plant(name)
    if not scaled:
        op = OperatingPoint.unscaled(op.x, op.u)
    return plant_model(plant, op)


def bench_reference(name: str, model: DiscreteLtiModel) -> Tuple[np.ndarray, np.ndarray]:
    """The bench reference in the model's scaled units."""
    if name not in BENCH_REFERENCES:
        raise InvalidInputError(f"unknown bench {name!r}; expected one of {BENCH_NAMES}")
    chi_r, v_r = BENCH_REFERENCES[name]
    op = model.operating_point
    return op.scale_state(chi_r), op.scale_input(v_r)


# =============================================================================
# Small models
# =============================================================================


def academic_model() -> LtiModel:
    """Second-order example with a coupled output/input band."""
    inf = np.inf
    return LtiModel(
        A=[[0.9, 0.8], [0.0, 1.0]],
        B=[[0.8], [1.0]],
        x_lo=[-10.0, -inf],
        x_hi=[10.0, inf],
        u_lo=[-0.5],
        u_hi=[0.5],
        E=[[1.0, 0.0], [0.0, 0.0]],
        F=[[0.0], [1.0]],
        y_lo=[-10.0, -0.5],
        y_hi=[10.0, 0.5],
    ).check()


def controllability_index(A, B) -> int:
    """
    Smallest j with rank [B, AB, ..., A^{j-1} B] = n.

    Raises:
        ConfigurationError: If (A, B) is not controllable
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    blocks = [B]
    for j in range(1, n + 1):
        if np.linalg.matrix_rank(np.hstack(blocks)) == n:
            return j
        blocks.append(A @ blocks[-1])
    raise ConfigurationError("the pair (A, B) is not controllable")
