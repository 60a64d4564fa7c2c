"""
Tests for the structured QP solvers against the active-set oracle.
"""

import numpy as np
import pytest

from src.core.exceptions import ConfigurationError, InvalidInputError, MaxIterationsError
from src.schemas.solvers import RestartConfig, RestartScheme
from src.services.qp_solvers import (
    StructuredQp,
    admm_qp,
    dual_fista_qp,
    dual_primal,
    dual_problem,
)
from src.services.restart import restart_solve
from tests.oracles import active_set_qp, random_banded_blocks


def _tiny_qp() -> StructuredQp:
    return StructuredQp(
        H_blocks=[np.array([1.0, 2.0, 0.5])],
        Gd=[np.array([[1.0, 1.0, 1.0]])],
        Gs=[None],
        q=[-2.0, 0.5, 0.0],
        b=[1.0],
        lo=0.0,
        hi=0.6,
    )


def _chain_qp(seed: int, N: int = 3, nz: int = 2) -> StructuredQp:
    rng = np.random.default_rng(seed)
    H, Gd, Gs = random_banded_blocks(rng, N, nz, 1)
    qp = StructuredQp(H, Gd, Gs, np.zeros(N * nz), np.zeros(N), -1.0, 1.0)
    z_feas = rng.uniform(-0.5, 0.5, N * nz)
    return qp.with_vectors(q=3.0 * rng.standard_normal(N * nz), b=qp.structure.G_mul(z_feas))


def _oracle(qp: StructuredQp) -> np.ndarray:
    H, G = qp.structure.to_dense()
    return active_set_qp(H, qp.q, G, qp.b, qp.lo, qp.hi)


class TestStructuredQp:
    def test_cache_is_shared(self):
        qp = _tiny_qp()
        other = qp.with_vectors(q=[0.0, 0.0, 0.0])
        assert other.eq_data(0.0) is qp.eq_data(0.0)
        assert qp.eq_data(2.0) is not qp.eq_data(0.0)

    def test_dense_hessian_rejected_by_dual_method(self):
        qp = StructuredQp([np.array([[2.0, 1.0], [1.0, 2.0]])], [np.ones((1, 2))], [None], [0.0, 0.0], [1.0], -5.0, 5.0)
        with pytest.raises(ConfigurationError):
            dual_fista_qp(qp, [0.0], 1e-6)

    def test_empty_box(self):
        with pytest.raises(ConfigurationError):
            StructuredQp([np.ones(2)], [np.ones((1, 2))], [None], [0.0, 0.0], [1.0], 1.0, 0.0)


class TestDualFista:
    def test_tiny_qp_matches_oracle(self):
        qp = _tiny_qp()
        res = dual_fista_qp(qp, [0.0], 1e-9)
        assert res.residual <= 1e-9
        assert np.allclose(res.z, _oracle(qp), atol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_chain_qp_matches_oracle(self, seed):
        qp = _chain_qp(seed)
        res = dual_fista_qp(qp, np.zeros(qp.m_z), 1e-9)
        assert np.allclose(res.z, _oracle(qp), atol=1e-4)

    def test_cap(self):
        with pytest.raises(MaxIterationsError):
            dual_fista_qp(_chain_qp(0), np.zeros(3), 1e-300, max_iterations=2)

    def test_rejects_bad_tolerance(self):
        with pytest.raises(InvalidInputError):
            dual_fista_qp(_tiny_qp(), [0.0], 0.0)


class TestAdmmQp:
    def test_tiny_qp_matches_oracle(self):
        qp = _tiny_qp()
        res = admm_qp(qp, np.zeros(3), np.zeros(3), 1.0, 1e-9, 1e-9)
        assert res.r_p <= 1e-9 and res.r_d <= 1e-9
        assert np.allclose(res.v, _oracle(qp), atol=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_chain_qp_agrees_with_dual_fista(self, seed):
        qp = _chain_qp(seed)
        admm = admm_qp(qp, np.zeros(qp.n_z), np.zeros(qp.n_z), 2.0, 1e-8, 1e-8)
        dual = dual_fista_qp(qp, np.zeros(qp.m_z), 1e-8)
        assert np.max(np.abs(admm.v - dual.z)) <= 1e-4

    def test_callback_sees_every_iteration(self):
        seen = []
        res = admm_qp(_tiny_qp(), np.zeros(3), np.zeros(3), 1.0, 1e-6, 1e-6, callback=lambda k, z, v, lam: seen.append(k))
        assert seen == list(range(1, res.iterations + 1))

    def test_rejects_non_positive_rho(self):
        with pytest.raises(InvalidInputError):
            admm_qp(_tiny_qp(), np.zeros(3), np.zeros(3), 0.0, 1e-6, 1e-6)


class TestDualAsComposite:
    @pytest.mark.parametrize("scheme", [RestartScheme.ALG8_GRAD, RestartScheme.ALG7_OBJ])
    def test_restarted_dual_recovers_primal(self, scheme):
        qp = _chain_qp(7)
        problem, metric = dual_problem(qp)
        res = restart_solve(problem, metric, np.zeros(qp.m_z), RestartConfig(scheme=scheme, eps=1e-10))
        assert np.allclose(dual_primal(qp, res.r_out), _oracle(qp), atol=1e-4)

    def test_banded_metric_inverse(self, rng):
        qp = _chain_qp(1)
        _, metric = dual_problem(qp)
        v = rng.standard_normal(qp.m_z)
        assert np.allclose(metric.apply_inv(metric.apply(v)), v)
        W = metric.matrix()
        assert np.allclose(W, W.T)
