from __future__ import annotations

import hashlib
import json
import math

import numpy as np
import pytest

from biquad import (AffineMap, ConstructionError, Domain, OptConfig,
                    RuleFormatError, RuleIntegrityError, apply_rule,
                    build_rule, exactness_residual, gauss_legendre,
                    gram_matrix, h1, kappa_inf, l2, load_rule, project,
                    pushforward_h1, pushforward_l2, reference_rule, save_rule,
                    sigma_of_rule)
from biquad.rules import _emit, _rule_payload


@pytest.fixture(scope="module")
def h1_rule():
    return build_rule(Domain.interval(), 3, ip=h1(Domain.interval(), "exp"),
                      cfg=OptConfig(n_starts=4, seed=2))


def _rewrite_with_valid_checksum(path, mutate):
    """Round-trip a rule file through a mutation, keeping the checksum valid."""
    data = json.loads(open(path).read())
    data.pop("checksum")
    mutate(data)
    digest = hashlib.sha256(_emit(data).encode()).hexdigest()
    with open(path, "w") as fh:
        fh.write(_emit({"checksum": digest, **data}))


class TestBuildRule:
    def test_interval_rule_is_gaussian(self, interval_rule_p4):
        rule = interval_rule_p4
        gauss = gauss_legendre(5)
        np.testing.assert_allclose(np.sort(rule.points_x[:, 0]),
                                   np.sort(gauss.nodes[:, 0]), atol=1e-7)
        w = rule.weight_matrix
        np.testing.assert_allclose(np.sort(np.diag(w)), np.sort(gauss.weights),
                                   atol=1e-8)
        assert np.max(np.abs(w - np.diag(np.diag(w)))) < 1e-8
        assert rule.sigma <= 1e-10

    def test_exactness_residual(self, tri2_rule):
        assert exactness_residual(tri2_rule) <= 1e-9

    def test_sigma_metadata_consistent(self, tri2_rule):
        assert tri2_rule.sigma == pytest.approx(sigma_of_rule(tri2_rule), abs=1e-12)
        assert tri2_rule.sigma >= 0
        assert tri2_rule.kappa_inf >= 1.0

    def test_exactness_on_random_pairs(self, tri2_rule, rng):
        rule = tri2_rule
        ref = reference_rule(rule.domain, 10)
        table = rule.basis_f0.eval_matrix(ref.nodes)
        fx = rule.basis_f0.eval_matrix(rule.points_x)
        gy = rule.basis_f0.eval_matrix(rule.points_y)
        for _ in range(200):
            a, b = rng.normal(size=6), rng.normal(size=6)
            exact = ref.integrate((table @ a) * (table @ b))
            got = apply_rule(rule, fx @ a, gy @ b)
            assert abs(got - exact) <= 1e-10 * (1 + abs(exact))

    def test_h1_rule_has_split(self, h1_rule):
        w0, w1 = h1_rule.w_split
        np.testing.assert_allclose(w0 + w1, h1_rule.weight_matrix, atol=1e-13)
        assert h1_rule.sigma <= 1e-9

    def test_h1_apply_matches_gram_oracle(self, h1_rule, rng):
        # derivative-free Sobolev product: compare against the Gram matrix
        # assembled with a high-order rule and analytic derivative tables
        rule = h1_rule
        ref = gauss_legendre(40)
        gram = np.asarray(gram_matrix(rule.basis_f0, rule.basis_f0, rule.ip, ref))
        fx = rule.basis_f0.eval_matrix(rule.points_x)
        for _ in range(50):
            a, b = rng.normal(size=4), rng.normal(size=4)
            got = apply_rule(rule, fx @ a, fx @ b)
            assert abs(got - a @ gram @ b) <= 1e-9 * (1 + abs(a @ gram @ b))

    def test_ip_domain_mismatch(self):
        with pytest.raises(ValueError):
            build_rule(Domain.square(), 1, ip=l2(Domain.disk()))

    def test_provenance(self, tri2_rule):
        prov = tri2_rule.provenance
        assert prov["seed"] == 7
        assert len(prov["config_hash"]) == 16
        assert prov["points_outside_domain"] == 0


class TestApplyProject:
    def test_identity_weight_matrix(self):
        rule = _toy_rule(weight=np.eye(2))
        assert apply_rule(rule, [1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_length_mismatch(self, tri2_rule):
        with pytest.raises(ValueError):
            apply_rule(tri2_rule, np.ones(5), np.ones(6))
        with pytest.raises(ValueError):
            project(tri2_rule, np.ones(7))

    def test_project_recovers_coefficients(self, tri2_rule, rng):
        coeffs = rng.normal(size=6)
        vals = tri2_rule.basis_f0.eval_matrix(tri2_rule.points_y) @ coeffs
        np.testing.assert_allclose(project(tri2_rule, vals), coeffs, atol=1e-11)

    def test_projection_idempotent(self, tri2_rule, rng):
        g_vals = rng.normal(size=6)
        c1 = project(tri2_rule, g_vals)
        rebuilt = tri2_rule.basis_f0.eval_matrix(tri2_rule.points_y) @ c1
        c2 = project(tri2_rule, rebuilt)
        np.testing.assert_allclose(c1, c2, atol=1e-11)

    def test_roundoff_amplification_bound(self, tri2_rule, rng):
        rule = tri2_rule
        g = rng.normal(size=6)
        base = project(rule, g)
        eps = 1e-8
        delta = eps * np.abs(g) * rng.choice([-1.0, 1.0], size=6)
        perturbed = project(rule, g + delta)
        lhs = np.linalg.norm(perturbed - base, np.inf) / np.linalg.norm(base, np.inf)
        rhs = rule.kappa_inf * np.linalg.norm(delta, np.inf) / np.linalg.norm(g, np.inf)
        assert lhs <= rhs * (1 + 1e-9)


class TestKappa:
    def test_identity_projection_matrix(self):
        from biquad.rules import kappa_inf_value
        assert kappa_inf_value(np.eye(4)) == 1.0

    def test_one_point_rule(self):
        rule = build_rule(Domain.triangle(), 0, cfg=OptConfig(n_starts=2, seed=0))
        assert rule.kappa_inf == pytest.approx(1.0, abs=1e-12)

    def test_stored_value_matches_recompute(self, tri2_rule):
        assert kappa_inf(tri2_rule) == pytest.approx(tri2_rule.kappa_inf, rel=1e-12)

    def test_non_square_unsupported(self):
        from biquad.rules import kappa_inf_value
        with pytest.raises(ValueError):
            kappa_inf_value(np.ones((3, 2)))


def _toy_rule(weight: np.ndarray):
    """Hand-assembled two-point rule for contract tests (no exactness claim)."""
    from biquad import orthonormalize, poly_space
    from biquad.rules import BilinearRule
    dom = Domain.interval()
    onb = orthonormalize(poly_space(dom, 1), l2(dom), gauss_legendre(6))
    pts = np.array([[-0.5], [0.5]])
    return BilinearRule(domain=dom, ip=l2(dom), degree=1, points_x=pts,
                        points_y=pts.copy(), weight_matrix=weight,
                        basis_f0=onb, sigma=0.0, kappa_inf=None)


class TestPushforwardL2:
    def test_identity_map(self, tri2_rule):
        out = pushforward_l2(tri2_rule, AffineMap.identity(2))
        np.testing.assert_allclose(out.points_x, tri2_rule.points_x)
        np.testing.assert_allclose(out.weight_matrix, tri2_rule.weight_matrix)
        assert out.sigma == tri2_rule.sigma

    def test_interval_scaling(self, interval_rule_p4):
        amap = AffineMap.scaling(2.0, 1)
        out = pushforward_l2(interval_rule_p4, amap)
        ones_x = np.ones(out.n_points)
        total = apply_rule(out, ones_x, ones_x)
        base = apply_rule(interval_rule_p4, ones_x, ones_x)
        assert total == pytest.approx(2.0 * base, abs=1e-12)
        assert total == pytest.approx(4.0, abs=1e-12)

    def test_equilateral_exactness(self, tri2_rule, rng):
        from biquad.bench import equilateral_triangle_map
        out = pushforward_l2(tri2_rule, equilateral_triangle_map())
        ref = reference_rule(out.domain, 10)
        table = out.basis_f0.eval_matrix(ref.nodes)
        fx = out.basis_f0.eval_matrix(out.points_x)
        for _ in range(50):
            a, b = rng.normal(size=6), rng.normal(size=6)
            exact = ref.integrate((table @ a) * (table @ b))
            got = apply_rule(out, fx @ a, fx @ b)
            assert abs(got - exact) <= 1e-11 * (1 + abs(exact))

    def test_requires_l2(self, h1_rule):
        with pytest.raises(ValueError):
            pushforward_l2(h1_rule, AffineMap.scaling(2.0, 1))


class TestPushforwardH1:
    def test_identity(self, h1_rule):
        out = pushforward_h1(h1_rule, AffineMap.identity(1))
        np.testing.assert_allclose(out.weight_matrix, h1_rule.weight_matrix,
                                   atol=1e-13)

    def test_reflection_preserves_exactness(self, h1_rule):
        out = pushforward_h1(h1_rule, AffineMap(np.array([[-1.0]]), np.array([0.0])))
        assert out.provenance["pushforward"]["validation_residual"] <= 1e-10

    def test_scaling_validated_against_image_gram(self, h1_rule, rng):
        amap = AffineMap(np.array([[2.0]]), np.array([0.5]))
        out = pushforward_h1(h1_rule, amap)
        assert out.provenance["pushforward"]["validation_residual"] <= 1e-10
        # oracle: integrate the image inner product directly
        ref = gauss_legendre(40, (amap(np.array([[-1.0]]))[0, 0],
                                  amap(np.array([[1.0]]))[0, 0]))
        gram = np.asarray(gram_matrix(out.basis_f0, out.basis_f0, out.ip, ref))
        fx = out.basis_f0.eval_matrix(out.points_x)
        for _ in range(20):
            a, b = rng.normal(size=4), rng.normal(size=4)
            got = apply_rule(out, fx @ a, fx @ b)
            exact = a @ gram @ b
            assert abs(got - exact) <= 1e-9 * (1 + abs(exact))

    def test_requires_similarity(self, tri2_rule):
        with pytest.raises(ValueError):
            pushforward_h1(tri2_rule, AffineMap.identity(2))

    def test_requires_split(self, interval_rule_p4):
        with pytest.raises(ValueError):
            pushforward_h1(interval_rule_p4, AffineMap.scaling(2.0, 1))


class TestSerialization:
    def test_round_trip_bit_exact(self, tri2_rule, tmp_path):
        p1, p2 = tmp_path / "a.rule", tmp_path / "b.rule"
        save_rule(tri2_rule, p1)
        loaded = load_rule(p1)
        save_rule(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_rule_equivalent(self, tri2_rule, tmp_path, rng):
        path = tmp_path / "t.rule"
        save_rule(tri2_rule, path)
        loaded = load_rule(path)
        np.testing.assert_array_equal(loaded.points_x, tri2_rule.points_x)
        np.testing.assert_array_equal(loaded.weight_matrix, tri2_rule.weight_matrix)
        assert loaded.sigma == tri2_rule.sigma
        g = rng.normal(size=6)
        np.testing.assert_allclose(project(loaded, g), project(tri2_rule, g),
                                   atol=1e-13)

    def test_h1_round_trip(self, h1_rule, tmp_path):
        path = tmp_path / "h.rule"
        save_rule(h1_rule, path)
        loaded = load_rule(path)
        np.testing.assert_array_equal(loaded.w_split[0], h1_rule.w_split[0])

    def test_mapped_rule_round_trip(self, tri2_rule, tmp_path):
        from biquad.bench import equilateral_triangle_map
        out = pushforward_l2(tri2_rule, equilateral_triangle_map())
        path = tmp_path / "eq.rule"
        save_rule(out, path)
        loaded = load_rule(path)
        np.testing.assert_array_equal(loaded.points_x, out.points_x)
        assert exactness_residual(loaded) <= 1e-9

    def test_version_field_required(self, tri2_rule, tmp_path):
        path = tmp_path / "v.rule"
        save_rule(tri2_rule, path)
        _rewrite_with_valid_checksum(path, lambda d: d.update(version="biquad-rule/9"))
        with pytest.raises(RuleFormatError):
            load_rule(path)

    def test_checksum_detects_edits(self, tri2_rule, tmp_path):
        path = tmp_path / "c.rule"
        save_rule(tri2_rule, path)
        text = path.read_text().replace("0.3", "0.4", 1)
        path.write_text(text)
        with pytest.raises(RuleFormatError):
            load_rule(path)

    def test_corrupted_weight_fails_exactness(self, tri2_rule, tmp_path):
        path = tmp_path / "w.rule"
        save_rule(tri2_rule, path)

        def corrupt(d):
            d["w"][0][0] += 1e-3

        _rewrite_with_valid_checksum(path, corrupt)
        with pytest.raises(RuleIntegrityError, match="residual"):
            load_rule(path)

    def test_corrupted_point_fails_exactness(self, tri2_rule, tmp_path):
        path = tmp_path / "p.rule"
        save_rule(tri2_rule, path)

        def corrupt(d):
            d["points_x"][0][0] += 1e-3

        _rewrite_with_valid_checksum(path, corrupt)
        with pytest.raises(RuleIntegrityError):
            load_rule(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "junk.rule"
        path.write_text("not a rule")
        with pytest.raises(RuleFormatError):
            load_rule(path)

    def test_floats_emitted_at_17_digits(self, tri2_rule, tmp_path):
        path = tmp_path / "f.rule"
        save_rule(tri2_rule, path)
        payload = json.loads(path.read_text())
        emitted = _emit(_rule_payload(tri2_rule))
        # parsing and re-emitting reproduces every float exactly
        assert _emit({k: v for k, v in payload.items() if k != "checksum"}) == emitted
