"""
Tests for the test-bench plants and the linearize / discretize / scale pipeline.
"""

import math

import numpy as np
import pytest

from src.core.exceptions import ConfigurationError, EvaluationError, InvalidInputError
from src.schemas.control import OperatingPoint
from src.services.plants import (
    BENCH_NAMES,
    CHEMICAL_TABLE_STATE,
    GRAVITY,
    ChemicalPlantParams,
    NonlinearPlant,
    academic_model,
    ball_plate,
    ball_plate_rhs,
    bench_model,
    bench_plant,
    bench_reference,
    chemical_operating_point,
    chemical_plant,
    chemical_plant_rhs,
    controllability_index,
    discretize_zoh,
    linearize,
    oscillating_masses,
    oscillating_masses_model,
    scale_model,
)

CHEMICAL_INPUT = np.array([0.0, 0.0, 0.0, 30.0, 10.0, 5.0])


class TestBallPlate:
    def test_origin_is_an_equilibrium(self):
        assert np.allclose(ball_plate_rhs(np.zeros(8), np.zeros(2)), 0.0)

    def test_rolling_factor(self):
        chi = np.zeros(8)
        chi[2] = 0.1
        d = ball_plate_rhs(chi, np.zeros(2))
        assert d[1] == pytest.approx(5.0 / 7.0 * GRAVITY * math.sin(0.1))
        assert d[5] == 0.0

    def test_inputs_drive_the_angular_rates(self):
        d = ball_plate_rhs(np.zeros(8), [0.3, -0.2])
        assert d[3] == pytest.approx(0.3)
        assert d[7] == pytest.approx(-0.2)

    def test_small_angle_linearization(self):
        A_c, B_c = linearize(ball_plate(), OperatingPoint.unscaled(np.zeros(8), np.zeros(2)))
        expected = np.zeros((8, 8))
        for k in (0, 4):
            expected[k, k + 1] = 1.0
            expected[k + 1, k + 2] = 5.0 / 7.0 * GRAVITY
            expected[k + 2, k + 3] = 1.0
        assert np.allclose(A_c, expected, atol=1e-6)
        assert np.allclose(B_c[[3, 7]], np.eye(2), atol=1e-8)


class TestOscillatingMasses:
    def test_middle_mass_row(self):
        A_c, _ = oscillating_masses_model()
        assert np.allclose(A_c[4, :3], [4.0, -8.0, 4.0])
        assert np.allclose(A_c[:3, 3:], np.eye(3))

    def test_forces_act_on_the_outer_masses(self):
        _, B_c = oscillating_masses_model()
        assert B_c[3, 0] == 1.0 and B_c[5, 1] == 1.0
        assert np.count_nonzero(B_c) == 2

    def test_linearization_recovers_the_linear_model(self):
        A_c, B_c = oscillating_masses_model()
        _, op = bench_plant("oscillating")
        A_fd, B_fd = linearize(oscillating_masses(), op)
        assert np.allclose(A_fd, A_c, atol=1e-8)
        assert np.allclose(B_fd, B_c, atol=1e-8)


class TestChemicalPlant:
    def test_non_positive_height_raises(self):
        chi = CHEMICAL_TABLE_STATE.copy()
        chi[4] = 0.0
        with pytest.raises(EvaluationError):
            chemical_plant_rhs(chi, CHEMICAL_INPUT)

    def test_heat_input_enters_linearly(self):
        p = ChemicalPlantParams()
        base = chemical_plant_rhs(CHEMICAL_TABLE_STATE, CHEMICAL_INPUT)
        heated = chemical_plant_rhs(CHEMICAL_TABLE_STATE, CHEMICAL_INPUT + [1000.0, 0, 0, 0, 0, 0])
        h1 = CHEMICAL_TABLE_STATE[0]
        assert heated[3] - base[3] == pytest.approx(1000.0 / (p.rho * p.A1 * h1 * p.Cp))
        assert np.allclose(np.delete(heated - base, 3), 0.0)

    def test_level_balance_of_the_first_reactor(self):
        p = ChemicalPlantParams()
        d = chemical_plant_rhs(CHEMICAL_TABLE_STATE, CHEMICAL_INPUT)
        F1 = p.kv1 * CHEMICAL_TABLE_STATE[0]
        assert d[0] == pytest.approx((30.0 + 5.0 - F1) / (p.rho * p.A1))

    def test_plant_carries_its_parameters(self):
        plant = chemical_plant(ChemicalPlantParams(T0=300.0))
        assert plant.params["T0"] == 300.0
        assert (plant.n, plant.m, plant.sample_time) == (12, 6, 3.0)

    def test_operating_point_is_a_steady_state(self):
        op = chemical_operating_point()
        assert np.max(np.abs(chemical_plant_rhs(op.x, op.u))) <= 1e-6
        assert np.all(op.x[[0, 4, 8]] > 0)


class TestPipeline:
    def test_zoh_of_a_pure_integrator(self):
        A, B = discretize_zoh(np.zeros((2, 2)), [[1.0], [2.0]], 0.5)
        assert np.allclose(A, np.eye(2))
        assert np.allclose(B, [[0.5], [1.0]])

    def test_zoh_scalar_closed_form(self):
        a, b, Ts = -0.7, 2.0, 0.3
        A, B = discretize_zoh([[a]], [[b]], Ts)
        assert A[0, 0] == pytest.approx(math.exp(a * Ts))
        assert B[0, 0] == pytest.approx((math.exp(a * Ts) - 1.0) / a * b)

    def test_zoh_needs_a_positive_sample_time(self):
        with pytest.raises(InvalidInputError):
            discretize_zoh([[0.0]], [[1.0]], 0.0)

    def test_unit_scaling_keeps_the_model(self):
        A, B = np.array([[1.0, 0.1], [0.0, 1.0]]), np.array([[0.0], [0.1]])
        op = OperatingPoint.unscaled(np.zeros(2), np.zeros(1))
        model = scale_model(A, B, op, [-1, -2], [1, 2], [-3], [3], 0.1)
        assert np.allclose(model.A, A) and np.allclose(model.B, B)
        assert np.allclose(model.x_hi, [1, 2])

    def test_scaling_is_a_similarity(self):
        A, B = np.array([[0.9, 0.4], [-0.2, 1.1]]), np.array([[1.0], [0.5]])
        op = OperatingPoint(x=[1.0, 2.0], u=[0.5], N_x=[2.0, 0.5], N_u=[4.0])
        model = scale_model(A, B, op, [0, 0], [2, 4], [0], [1], 0.1)
        assert np.allclose(np.sort_complex(np.linalg.eigvals(model.A)), np.sort_complex(np.linalg.eigvals(A)))
        assert np.allclose(model.B, [[0.5], [0.0625]])
        assert np.allclose(model.x_lo, [-2.0, -1.0])
        assert np.allclose(model.u_hi, [2.0])

    def test_non_positive_scaling_is_rejected(self):
        op = OperatingPoint(x=[0.0], u=[0.0], N_x=[0.0], N_u=[1.0])
        with pytest.raises(InvalidInputError):
            scale_model([[1.0]], [[1.0]], op, [-1], [1], [-1], [1], 0.1)

    def test_step_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            linearize(oscillating_masses(), OperatingPoint.unscaled(np.zeros(6), np.zeros(2)), h=0.0)

    def test_non_finite_rhs_raises(self):
        plant = NonlinearPlant(
            name="broken", n=1, m=1, rhs=lambda chi, v: np.array([np.nan]),
            x_lo=-np.ones(1), x_hi=np.ones(1), u_lo=-np.ones(1), u_hi=np.ones(1), sample_time=1.0,
        )
        with pytest.raises(EvaluationError):
            linearize(plant, OperatingPoint.unscaled([0.0], [0.0]))


class TestBenches:
    def test_unknown_bench(self):
        with pytest.raises(InvalidInputError):
            bench_plant("pendulum")

    def test_oscillating_model_in_scaled_units(self):
        model = bench_model("oscillating")
        assert (model.n, model.m) == (6, 2)
        assert np.allclose(model.x_hi[:3], 3.0)
        x_r, u_r = bench_reference("oscillating", model)
        assert np.allclose(x_r, [2.5, 2.5, 2.5, 0, 0, 0])
        assert np.allclose(u_r, [0.5, 0.5])

    def test_unscaled_ball_plate_keeps_engineering_bounds(self):
        model = bench_model("ball_plate", scaled=False)
        assert model.x_hi[1] == pytest.approx(0.5)
        assert model.x_hi[2] == pytest.approx(math.pi / 4)
        assert np.all(np.isinf(model.u_hi))

    @pytest.mark.parametrize("name", [n for n in BENCH_NAMES if n != "chemical"])
    def test_reference_is_a_steady_state(self, name):
        model = bench_model(name)
        x_r, u_r = bench_reference(name, model)
        assert np.allclose(model.A @ x_r + model.B @ u_r, x_r, atol=1e-8)


class TestSmallModels:
    def test_academic_model(self):
        model = academic_model()
        assert model.has_outputs
        assert controllability_index(model.A, model.B) == 2

    def test_uncontrollable_pair(self):
        with pytest.raises(ConfigurationError):
            controllability_index(np.eye(2), [[1.0], [0.0]])

    def test_single_input_chain(self):
        A = np.diag(np.ones(2), 1)
        B = np.array([[0.0], [0.0], [1.0]])
        assert controllability_index(A, B) == 3
