from __future__ import annotations

import math

import numpy as np
import pytest

from biquad import (ConstructionError, Domain, gauss_legendre, gram_matrix, l2,
                    orthonormalize, poly_space, reference_rule, sigma_of_rule,
                    w_general, w_invertible)
from biquad.objective import (SIGMA_PENALTY, general_context,
                              symmetric_context)
from biquad.rules import joint_orthonormal_basis


@pytest.fixture(scope="module")
def interval_ctx():
    joint, k = joint_orthonormal_basis(Domain.interval(), 4, l2(Domain.interval()))
    return symmetric_context(joint, k)


@pytest.fixture(scope="module")
def circle_ctx():
    joint, k = joint_orthonormal_basis(Domain.circle(), 2, l2(Domain.circle()))
    return symmetric_context(joint, k)


@pytest.fixture(scope="module")
def lobatto_ctx():
    joint, k = joint_orthonormal_basis(Domain.interval(), 2, l2(Domain.interval()))
    return general_context(joint, k, fixed_points=[[-1.0], [1.0]], n_free=2)


class TestWInvertible:
    def test_identity(self):
        w = w_invertible(np.eye(3), np.eye(3), np.eye(3))
        np.testing.assert_allclose(w, np.eye(3))

    def test_gauss_nodes_give_diagonal_weights(self):
        n = 5
        dom = Domain.interval()
        onb = orthonormalize(poly_space(dom, n - 1), l2(dom), gauss_legendre(12))
        rule = gauss_legendre(n)
        f = onb.eval_matrix(rule.nodes)
        w = w_invertible(f, f, np.eye(n))
        np.testing.assert_allclose(np.diag(w), rule.weights, atol=1e-10)
        assert np.max(np.abs(w - np.diag(np.diag(w)))) < 1e-10

    def test_random_exactness_oracle(self, rng):
        # brute-force oracle: high-order reference integration of f * g
        dom = Domain.interval()
        k = 3
        ref = reference_rule(dom, 20)
        onb = orthonormalize(poly_space(dom, k - 1), l2(dom), gauss_legendre(12))
        pts = np.sort(rng.uniform(-1, 1, k))[:, None]
        f = onb.eval_matrix(pts)
        w = w_invertible(f, f, np.eye(k))
        table = onb.eval_matrix(ref.nodes)
        for _ in range(100):
            a, b = rng.normal(size=k), rng.normal(size=k)
            exact = ref.integrate((table @ a) * (table @ b))
            got = (f @ a) @ w @ (f @ b)
            assert abs(got - exact) < 1e-11

    def test_singular_raises(self):
        f = np.array([[1.0, 2.0], [1.0, 2.0]])
        with pytest.raises(ConstructionError):
            w_invertible(f, f, np.eye(2))


class TestWGeneral:
    def test_zero_y_is_min_norm(self, lobatto_ctx, rng):
        pts = lobatto_ctx.assemble_points(rng.uniform(-1, 1, (2, 1)))
        f = lobatto_ctx.f0_basis().eval_matrix(pts)
        w = w_general(f, f, np.eye(3), np.zeros((4, 4)))
        expected = np.linalg.pinv(f).T @ np.linalg.pinv(f)
        np.testing.assert_allclose(w, expected, atol=1e-13)

    def test_invertible_case_independent_of_y(self, rng):
        dom = Domain.interval()
        onb = orthonormalize(poly_space(dom, 2), l2(dom), gauss_legendre(10))
        pts = np.sort(rng.uniform(-1, 1, 3))[:, None]
        f = onb.eval_matrix(pts)
        w0 = w_general(f, f, np.eye(3), np.zeros((3, 3)))
        for _ in range(5):
            w = w_general(f, f, np.eye(3), rng.normal(size=(3, 3)))
            assert np.max(np.abs(w - w0)) < 1e-11

    def test_constraint_residual_for_random_y(self, lobatto_ctx, rng):
        pts = lobatto_ctx.assemble_points(np.array([[-0.3], [0.45]]))
        f = lobatto_ctx.f0_basis().eval_matrix(pts)
        for _ in range(20):
            y = rng.normal(size=(4, 4))
            w = w_general(f, f, np.eye(3), y)
            residual = np.max(np.abs(f.T @ w @ f - np.eye(3)))
            assert residual <= 1e-10

    def test_rank_deficient_raises(self):
        f = np.ones((4, 3))
        with pytest.raises(ConstructionError):
            w_general(f, f, np.eye(3), np.zeros((4, 4)))


class TestSigmaSymmetric:
    def test_zero_at_gauss_nodes(self, interval_ctx):
        nodes = gauss_legendre(5).nodes
        sigma, f, gamma = interval_ctx.sigma_symmetric(nodes)
        assert sigma <= 1e-12
        assert f.shape == (5, 5) and gamma.shape == (5, 1)

    def test_circle_equispaced_is_one(self, circle_ctx):
        k = circle_ctx.k
        pts = (2 * math.pi * np.arange(k) / k)[:, None]
        sigma, _, _ = circle_ctx.sigma_symmetric(pts)
        assert sigma == pytest.approx(1.0, abs=1e-12)

    def test_circle_lower_bound(self, circle_ctx, rng):
        k = circle_ctx.k
        for _ in range(100):
            pts = np.concatenate([[0.0], rng.uniform(0, 2 * math.pi, k - 1)])
            sigma, _, _ = circle_ctx.sigma_symmetric(pts[:, None])
            assert sigma >= 1.0 - 1e-9

    def test_triangle_centroid_zeroes_linear_tail(self):
        joint, k = joint_orthonormal_basis(Domain.triangle(), 0, l2(Domain.triangle()))
        ctx = symmetric_context(joint, k)
        sigma, _, _ = ctx.sigma_symmetric(np.array([[-1 / 3, -1 / 3]]))
        assert sigma <= 1e-13

    def test_penalty_for_coincident_points(self, interval_ctx):
        pts = np.full((5, 1), 0.3)
        sigma, _, _ = interval_ctx.sigma_symmetric(pts)
        assert sigma >= SIGMA_PENALTY

    def test_batch_matches_serial(self, interval_ctx, rng):
        batch = rng.uniform(-1, 1, (15, 5, 1))
        vals = interval_ctx.sigma_symmetric_batch(batch)
        for i in range(15):
            assert vals[i] == pytest.approx(
                interval_ctx.sigma_symmetric(batch[i])[0], abs=1e-13)

    def test_surrogate_bounds_objective(self, interval_ctx, rng):
        # sum of squared singular values dominates the largest one squared
        z = rng.uniform(-1, 1, 5)
        s = interval_ctx.objective(z)
        assert interval_ctx.surrogate(z) >= s * s - 1e-12


class TestSigmaGeneral:
    def test_reduces_to_symmetric_when_square(self, rng):
        joint, k = joint_orthonormal_basis(Domain.interval(), 3, l2(Domain.interval()))
        sym = symmetric_context(joint, k)
        gen = general_context(joint, k, fixed_points=np.zeros((0, 1)), n_free=k)
        for _ in range(50):
            x = rng.uniform(-1, 1, (k, 1))
            y = rng.normal(size=(k, k))
            s1 = sym.sigma_symmetric(x)[0]
            s2 = gen.sigma_general(x, y)
            assert abs(s1 - s2) <= 1e-10 * max(1.0, s1)

    def test_lobatto_configuration_with_diagonal_y(self, lobatto_ctx):
        pts = np.array([[-1.0], [1.0], [-1 / math.sqrt(5)], [1 / math.sqrt(5)]])
        f = lobatto_ctx.f0_basis().eval_matrix(pts)
        w_target = np.diag([1 / 6, 1 / 6, 5 / 6, 5 / 6])
        y = w_target - np.linalg.pinv(f).T @ np.linalg.pinv(f)
        assert lobatto_ctx.sigma_general(pts, y) <= 1e-9

    def test_zero_y_lower_bound(self, lobatto_ctx, rng):
        pts = lobatto_ctx.assemble_points(rng.uniform(-1, 1, (2, 1)))
        f = lobatto_ctx.f0_basis().eval_matrix(pts)
        gamma = lobatto_ctx.g1_basis().eval_matrix(pts)
        base = np.linalg.svd(np.linalg.pinv(f) @ gamma, compute_uv=False)[0]
        got = lobatto_ctx.sigma_general(pts, np.zeros((4, 4)))
        assert got >= base - 1e-13


class TestContextInvariants:
    def test_complement_is_orthogonal(self, interval_ctx):
        ref = gauss_legendre(20)
        cross = np.asarray(gram_matrix(interval_ctx.f0_basis(),
                                       interval_ctx.g1_basis(),
                                       l2(Domain.interval()), ref))
        assert np.max(np.abs(cross)) < 1e-10

    def test_requires_orthonormal_joint(self):
        raw = poly_space(Domain.interval(), 3)
        with pytest.raises(ValueError):
            symmetric_context(raw, 3)

    def test_split_must_leave_tail(self, interval_ctx):
        with pytest.raises(ValueError):
            symmetric_context(interval_ctx.joint, interval_ctx.joint.size)


class TestSigmaOfRule:
    def test_matches_optimizer_objective(self, tri2_rule):
        stored = tri2_rule.provenance["optimizer_sigma"]
        assert sigma_of_rule(tri2_rule) == pytest.approx(stored, abs=1e-12)

    def test_gauss_rule_zero(self, interval_rule_p4):
        assert sigma_of_rule(interval_rule_p4) <= 1e-12

    def test_projection_error_bound_witness(self, tri2_rule, rng):
        # for g = g0 + g1 the coefficient error is bounded by sigma * |g1|
        rule = tri2_rule
        ref = reference_rule(rule.domain, 10)
        f0_t = rule.basis_f0.eval_matrix(ref.nodes)
        g1_t = rule.g1_basis.eval_matrix(ref.nodes)
        f0_p = rule.basis_f0.eval_matrix(rule.points_y)
        g1_p = rule.g1_basis.eval_matrix(rule.points_y)
        fproj = rule.basis_f0.eval_matrix(rule.points_x).T @ rule.weight_matrix
        for _ in range(200):
            a = rng.normal(size=rule.dimension)
            b = rng.normal(size=rule.g1_basis.size)
            approx = fproj @ (f0_p @ a + g1_p @ b)
            exact = a  # orthonormal basis: projection of g0 + g1 is a
            err = np.linalg.norm(approx - exact)
            assert err <= rule.sigma * np.linalg.norm(b) + 1e-10
