"""
Tests for the benchmark instance generators.
"""

import numpy as np
import pytest

from src.core.exceptions import InvalidInputError
from src.services.generators import (
    EXAMPLE31_F_STAR,
    EXAMPLE31_Z_STAR,
    gen_lasso,
    gen_random_qp,
    instance_seeds,
)


def _hessian(inst) -> np.ndarray:
    n = inst.problem.dim
    g0 = inst.problem.grad_h(np.zeros(n))
    return np.column_stack([inst.problem.grad_h(e) - g0 for e in np.eye(n)])


class TestExample31:
    def test_optimum(self, ex31):
        assert ex31.problem.eval_f(EXAMPLE31_Z_STAR) == pytest.approx(EXAMPLE31_F_STAR)
        assert np.allclose(ex31.problem.grad_h(EXAMPLE31_Z_STAR), 0.0)

    def test_start_and_condition(self, ex31):
        assert np.allclose(ex31.z0, [-2.0, -5.0])
        assert ex31.cond == 2.0


class TestLasso:
    def test_same_seed_same_instance(self, rng):
        a, b = gen_lasso(20, 40, 0.1, 5), gen_lasso(20, 40, 0.1, 5)
        z = rng.normal(size=40)
        assert a.problem.eval_f(z) == b.problem.eval_f(z)
        assert np.isnan(a.cond)
        assert np.all(a.z0 == 0.0)

    def test_different_seeds_differ(self, rng):
        z = rng.normal(size=40)
        assert gen_lasso(20, 40, 0.1, 5).problem.eval_f(z) != gen_lasso(20, 40, 0.1, 6).problem.eval_f(z)

    @pytest.mark.parametrize("N, n_z, alpha", [(40, 40, 0.1), (0, 10, 0.1), (5, 10, 0.0)])
    def test_invalid_sizes(self, N, n_z, alpha):
        with pytest.raises(InvalidInputError):
            gen_lasso(N, n_z, alpha, 1)


class TestRandomQp:
    def test_smallest_eigenvalue_is_alpha(self):
        inst = gen_random_qp(20, 2.5, 3.0, seed=9)
        H = _hessian(inst)
        evals = np.linalg.eigvalsh(0.5 * (H + H.T))
        assert evals[0] == pytest.approx(2.5, rel=1e-8)
        assert inst.cond == pytest.approx(evals[-1] / evals[0], rel=1e-8)

    def test_linear_term_range(self):
        inst = gen_random_qp(50, 1.0, 4.0, seed=2)
        q = inst.problem.grad_h(np.zeros(50))
        assert np.all(q > 0) and np.all(q <= 4.0)

    def test_published_condition_band(self):
        conds = [gen_random_qp(200, 10.0, 20.0, s).cond for s in instance_seeds(17, 3)]
        assert all(36.0 <= c <= 44.0 for c in conds)

    def test_invalid_parameters(self):
        with pytest.raises(InvalidInputError):
            gen_random_qp(10, 0.0, 1.0, 1)
        with pytest.raises(InvalidInputError):
            gen_random_qp(10, 1.0, 1.0, 1, m_rows=0)


class TestSeeds:
    def test_children_are_reproducible_and_distinct(self):
        a, b = instance_seeds(3, 4), instance_seeds(3, 4)
        states = [s.generate_state(2).tolist() for s in a]
        assert states == [s.generate_state(2).tolist() for s in b]
        assert len({tuple(s) for s in states}) == 4
