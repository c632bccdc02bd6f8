from __future__ import annotations

import math

import numpy as np
import pytest

from biquad import Domain, MappedDomain, OptConfig, reference_rule
from biquad.bench import (BenchReport, FunctionEnsemble, TableRow,
                          bisection_roots, equilateral_triangle_map,
                          lobatto_recovery, projection_error, reproduce_table,
                          sample, theorem_suite)


class TestEnsembles:
    def test_pprime_unit_norm(self):
        ens = FunctionEnsemble("pprime", Domain.triangle(), seed=1, degree=6)
        for f in sample(ens, 10):
            assert abs(np.linalg.norm(f.coefficients) - 1.0) <= 1e-12

    def test_rational_parameters_on_unit_circle(self):
        ens = FunctionEnsemble("c", Domain.triangle(), seed=2)
        g = sample(ens, 3)[0]
        a = g.params["a"]
        assert abs(np.hypot(*a) - 1.0) <= 1e-14

    def test_rational_formula(self):
        ens = FunctionEnsemble("c", Domain.triangle(), seed=2)
        g = sample(ens, 1)[0]
        a = g.params["a"]
        pts = np.array([[0.1, -0.4], [-0.5, 0.2]])
        expected = 1.0 / (1.0 + (a[0] * pts[:, 0] + a[1] * pts[:, 1]) ** 2)
        np.testing.assert_allclose(g(pts), expected, atol=1e-15)

    def test_oscillatory_formula(self):
        ens = FunctionEnsemble("tp", Domain.triangle(), seed=3)
        g = sample(ens, 1)[0]
        a, b, p = g.params["a"], g.params["b"], g.params["p"]
        pts = Domain.triangle().sample(np.random.default_rng(0), 20)
        expected = np.exp(pts @ a) * np.cos(4.0 * (pts @ b)) * p(pts)
        np.testing.assert_allclose(g(pts), expected, atol=1e-14)
        assert abs(np.linalg.norm(p.coefficients) - 1.0) <= 1e-12

    def test_sampling_is_deterministic(self):
        ens = FunctionEnsemble("pprime", Domain.square(), seed=9, degree=3)
        c1 = [f.coefficients for f in sample(ens, 4)]
        c2 = [f.coefficients for f in sample(ens, 4)]
        for a, b in zip(c1, c2):
            np.testing.assert_array_equal(a, b)

    def test_bad_kinds(self):
        with pytest.raises(ValueError):
            FunctionEnsemble("nope", Domain.triangle())
        with pytest.raises(ValueError):
            FunctionEnsemble("pprime", Domain.triangle())  # missing degree
        with pytest.raises(ValueError):
            FunctionEnsemble("c", Domain.interval())  # needs two dimensions
        with pytest.raises(ValueError):
            sample(FunctionEnsemble("c", Domain.triangle()), 0)


class TestProjectionError:
    def test_polynomial_ensemble_is_exact(self, tri2_rule):
        ens = FunctionEnsemble("pprime", Domain.triangle(), seed=5, degree=2)
        report = projection_error(tri2_rule, ens, 100)
        assert report.mean_relative_error <= 1e-12

    def test_nonpolynomial_errors_are_larger(self, tri2_rule):
        poly = projection_error(
            tri2_rule, FunctionEnsemble("pprime", Domain.triangle(), seed=5, degree=2), 50)
        rational = projection_error(
            tri2_rule, FunctionEnsemble("c", Domain.triangle(), seed=5), 50)
        oscillatory = projection_error(
            tri2_rule, FunctionEnsemble("tp", Domain.triangle(), seed=5), 50)
        assert poly.mean_relative_error < rational.mean_relative_error
        assert poly.mean_relative_error < oscillatory.mean_relative_error

    def test_deterministic_report(self, tri2_rule):
        ens = FunctionEnsemble("c", Domain.triangle(), seed=4)
        r1 = projection_error(tri2_rule, ens, 60)
        r2 = projection_error(tri2_rule, ens, 60)
        assert r1.mean_relative_error == r2.mean_relative_error

    def test_error_bound_consistency(self, tri2_rule, rng):
        # each degree-3 sample's error respects the sigma bound on its tail
        rule = tri2_rule
        ens = FunctionEnsemble("pprime", Domain.triangle(), seed=6, degree=3)
        ref = reference_rule(rule.domain, 12)
        b_f0 = rule.basis_f0.eval_matrix(ref.nodes)
        b_g1 = rule.g1_basis.eval_matrix(ref.nodes)
        wts = ref.weights
        from biquad import project
        for g in sample(ens, 40):
            vals = g(ref.nodes)
            exact_f0 = b_f0.T @ (wts * vals)
            tail = b_g1.T @ (wts * vals)
            approx = project(rule, g(rule.points_y))
            err = np.linalg.norm(approx - exact_f0)
            assert err <= rule.sigma * np.linalg.norm(tail) + 1e-9

    def test_domain_mismatch(self, tri2_rule):
        ens = FunctionEnsemble("c", Domain.square(), seed=1)
        with pytest.raises(ValueError):
            projection_error(tri2_rule, ens, 10)

    def test_ref_degree_too_low(self, tri2_rule):
        ens = FunctionEnsemble("c", Domain.triangle(), seed=1)
        with pytest.raises(ValueError):
            projection_error(tri2_rule, ens, 10, ref_degree=1)

    def test_report_serializes(self, tri2_rule):
        ens = FunctionEnsemble("c", Domain.triangle(), seed=4)
        report = projection_error(tri2_rule, ens, 10)
        d = report.to_dict()
        assert d["version"] == "biquad-report/1"
        assert d["count"] == 10


class TestReproduceTable:
    def test_interval_rows(self):
        from biquad import l2
        rows = reproduce_table(Domain.interval(), l2(Domain.interval()), 1,
                               OptConfig(n_starts=4, seed=0))
        assert [r.n for r in rows] == [0, 1]
        assert [r.k for r in rows] == [1, 2]
        assert all(r.ok and r.sigma <= 1e-10 for r in rows)
        assert "0 1 0.00000" in rows[0].format()

    def test_row_failure_recorded(self, monkeypatch):
        from biquad import bench, l2

        def boom(*args, **kwargs):
            raise RuntimeError("forced failure")

        monkeypatch.setattr(bench, "build_rule", boom)
        rows = reproduce_table(Domain.interval(), l2(Domain.interval()), 0,
                               OptConfig(n_starts=1))
        assert rows == [TableRow(n=0, k=1, sigma=None, kappa_inf=None, ok=False,
                                 error="forced failure")]
        assert "failed" in rows[0].format()


class TestTheoremSuite:
    def test_bisection_oracle(self):
        # derivative of the cubic Legendre polynomial vanishes at +-1/sqrt(5)
        roots = bisection_roots(lambda x: (15 * x * x - 3) / 2, -1, 1)
        np.testing.assert_allclose(roots, [-1 / math.sqrt(5), 1 / math.sqrt(5)],
                                   atol=1e-12)

    def test_lobatto_recovery_values(self):
        interior, weights, sigma = lobatto_recovery(OptConfig(n_starts=8, seed=1))
        np.testing.assert_allclose(interior, [-1 / math.sqrt(5), 1 / math.sqrt(5)],
                                   atol=1e-6)
        np.testing.assert_allclose(np.sort(weights), [1 / 6, 1 / 6, 5 / 6, 5 / 6],
                                   atol=1e-6)
        assert sigma <= 1e-8

    def test_full_suite_passes(self):
        checks = theorem_suite(OptConfig(n_starts=10, seed=0))
        names = [c.name for c in checks]
        assert names == ["gauss_recovery", "trapezoid_optimality",
                         "circle_lower_bound", "lobatto_recovery"]
        for c in checks:
            assert c.passed, f"{c.name}: {c.detail}"


class TestEquilateralMap:
    def test_unit_sides_centered(self):
        amap = equilateral_triangle_map()
        v = amap(np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0]]))
        sides = [np.linalg.norm(v[i] - v[j]) for i, j in [(0, 1), (0, 2), (1, 2)]]
        np.testing.assert_allclose(sides, 1.0, atol=1e-14)
        np.testing.assert_allclose(v.mean(axis=0), 0.0, atol=1e-14)

    def test_area_scaling(self):
        amap = equilateral_triangle_map()
        dom = MappedDomain(Domain.triangle(), amap)
        assert dom.measure == pytest.approx(math.sqrt(3) / 4, abs=1e-14)
