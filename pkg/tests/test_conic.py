"""
Tests for the second-order cone projection and the conic ADMM.
"""

import numpy as np
import pytest

from src.core.exceptions import InvalidInputError, MaxIterationsError
from src.schemas.solvers import AdmmResult
from src.services.conic import ConeProgram, conic_admm, soc_project


def _in_cone(s, t, tol=1e-12) -> bool:
    return np.linalg.norm(s) <= t + tol


class TestSocProject:
    def test_point_inside_is_unchanged(self):
        s, t = soc_project([0.3, -0.4], 1.0)
        assert np.allclose(s, [0.3, -0.4])
        assert t == 1.0

    def test_polar_cone_maps_to_origin(self):
        s, t = soc_project([0.3, 0.4], -2.0)
        assert np.allclose(s, 0.0)
        assert t == 0.0

    def test_closed_form_on_the_boundary_case(self):
        s, t = soc_project([3.0, 4.0], 1.0)
        assert np.allclose(s, [1.8, 2.4])
        assert t == pytest.approx(3.0)

    def test_projection_is_idempotent(self, rng):
        for _ in range(20):
            s, t = soc_project(rng.normal(size=2), rng.normal())
            s2, t2 = soc_project(s, t)
            assert np.allclose(s, s2)
            assert t == pytest.approx(t2)

    def test_nearest_point_among_cone_samples(self, rng):
        point = np.array([2.0, -1.0, 0.5])
        s, t = soc_project(point[:2], point[2])
        proj = np.append(s, t)
        best = np.linalg.norm(point - proj)
        for _ in range(500):
            cand = rng.normal(size=3) * 3
            cs, ct = cand[:2], np.linalg.norm(cand[:2]) + abs(cand[2])
            assert _in_cone(cs, ct)
            assert np.linalg.norm(point - np.append(cs, ct)) >= best - 1e-12


class TestConeProgram:
    def test_row_count_must_match_the_cone_product(self):
        with pytest.raises(InvalidInputError):
            ConeProgram(np.eye(2), np.zeros(2), np.eye(2), 0, [], [0.0], [1.0], [0.0])

    def test_box_bounds_must_be_ordered(self):
        with pytest.raises(InvalidInputError):
            ConeProgram(np.eye(1), [0.0], [[1.0]], 0, [], [1.0], [0.0], [])

    def test_with_vectors_shares_the_factorization(self):
        prog = ConeProgram(np.eye(2), np.zeros(2), np.eye(2), 0, [], [-1.0, -1.0], [1.0, 1.0], [])
        prog.kkt(1.0, 1e-6)
        other = prog.with_vectors(q=[1.0, 2.0])
        assert other.kkt(1.0, 1e-6) is prog.kkt(1.0, 1e-6)
        assert np.allclose(other.q, [1.0, 2.0])

    def test_cone_violation(self):
        prog = ConeProgram(np.eye(3), np.zeros(3), np.eye(3), 0, [], [], [], [0.5])
        assert prog.cone_violation(np.array([0.3, 0.4, 1.0])) == 0.0
        assert prog.cone_violation(np.array([3.0, 4.0, 1.0])) == pytest.approx(3.5)


class TestConicAdmm:
    def test_projection_onto_shifted_cone(self):
        a = np.array([3.0, 4.0, 1.0])
        shift = 2.0
        prog = ConeProgram(np.eye(3), -a, np.eye(3), 0, [], [], [], [shift])
        res = conic_admm(prog, eps_p=1e-9, eps_d=1e-9, max_iterations=50_000)
        s, t = soc_project(a[:2], a[2] + shift)
        assert np.allclose(res.z, np.append(s, t - shift), atol=1e-5)
        assert prog.cone_violation(res.z) <= 1e-6

    def test_box_qp(self):
        # min (x1 - 3)^2 + (x2 + 1)^2 on [-1, 1]^2
        prog = ConeProgram(2 * np.eye(2), [-6.0, 2.0], np.eye(2), 0, [], [-1.0, -1.0], [1.0, 1.0], [])
        res = conic_admm(prog, eps_p=1e-9, eps_d=1e-9, max_iterations=50_000)
        assert np.allclose(res.z, [1.0, -1.0], atol=1e-5)

    def test_equality_row(self):
        prog = ConeProgram(2 * np.eye(2), np.zeros(2), [[1.0, 1.0]], 1, [2.0], [], [], [])
        res = conic_admm(prog, eps_p=1e-9, eps_d=1e-9, max_iterations=50_000)
        assert np.allclose(res.z, [1.0, 1.0], atol=1e-6)
        assert res.r_p <= 1e-9 and res.r_d <= 1e-9

    def test_cap_raises_with_last_iterate(self):
        prog = ConeProgram(2 * np.eye(2), [-6.0, 2.0], np.eye(2), 0, [], [-1.0, -1.0], [1.0, 1.0], [])
        with pytest.raises(MaxIterationsError) as exc:
            conic_admm(prog, eps_p=1e-12, eps_d=1e-12, max_iterations=2)
        assert isinstance(exc.value.best_iterate, AdmmResult)
        assert exc.value.best_iterate.iterations == 2

    def test_warm_start_from_the_solution_exits_immediately(self):
        prog = ConeProgram(2 * np.eye(2), [-6.0, 2.0], np.eye(2), 0, [], [-1.0, -1.0], [1.0, 1.0], [])
        res = conic_admm(prog, eps_p=1e-9, eps_d=1e-9, max_iterations=50_000)
        again = conic_admm(prog, res.z, res.v, res.lam, eps_p=1e-8, eps_d=1e-8)
        assert again.iterations <= 2

    @pytest.mark.parametrize("kwargs", [{"eps_p": 0.0}, {"eps_d": -1.0}, {"rho": 0.0}, {"sigma": -1e-6}])
    def test_invalid_parameters(self, kwargs):
        prog = ConeProgram(np.eye(1), [0.0], [[1.0]], 0, [], [-1.0], [1.0], [])
        with pytest.raises(InvalidInputError):
            conic_admm(prog, **kwargs)
