"""Bilinear quadrature rules: build, apply, project, transform, store.

A rule is a point set (or pair of point sets) and a weight matrix W with
f(x)* W g(y) equal to the chosen inner product for all f, g in the target
space.  Rules built here are symmetric and minimal-order: the number of
evaluation points equals the dimension of the space.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import __version__ as _pkg_version
from .basis import BasisSet, poly_space, space_dimension
from .domains import (CIRCLE, INTERVAL, AffineMap, Domain, MappedDomain,
                      domain_from_dict)
from .objective import (ObjectiveContext, sigma_of_rule, symmetric_context,
                        w_invertible)
from .optimizer import OptConfig, OptResult, minimize
from .refquad import (ClassicalRule, ConstructionError, GramMatrix,
                      InnerProductSpec, gauss_legendre, gram_matrix,
                      orthonormalize, reference_rule, trapezoid_trig)

RULE_FORMAT = "biquad-rule/1"

# number of reference nodes for Sobolev Gram assembly; the integrands are
# not polynomial for every coefficient choice, so this is a working-precision
# default rather than an exactness guarantee
H1_GRAM_POINTS = 40


class RuleFormatError(ValueError):
    """A rule file has the wrong version, structure, or checksum."""


class RuleIntegrityError(RuleFormatError):
    """A rule file parses but violates a numerical invariant."""


@dataclass(frozen=True, eq=False)
class BilinearRule:
    """An exact bilinear quadrature with its quality metrics and provenance."""

    domain: Domain | MappedDomain
    ip: InnerProductSpec
    degree: int
    points_x: np.ndarray
    points_y: np.ndarray
    weight_matrix: np.ndarray
    basis_f0: BasisSet
    g1_basis: BasisSet | None = None
    w_split: tuple[np.ndarray, np.ndarray] | None = None
    gram: np.ndarray | None = None
    sigma: float = 0.0
    kappa_inf: float | None = None
    provenance: dict | None = None

    @property
    def dimension(self) -> int:
        return self.basis_f0.size

    @property
    def n_points(self) -> int:
        return len(self.points_x)

    def gram_or_identity(self) -> np.ndarray:
        if self.gram is not None:
            return np.asarray(self.gram)
        return np.eye(self.dimension)


def config_hash(domain, degree: int, ip: InnerProductSpec, cfg: OptConfig) -> str:
    payload = {
        "domain": domain.to_dict(),
        "degree": degree,
        "ip": ip.to_dict(),
        "optimizer": cfg.to_dict(),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def construction_reference(domain, ip: InnerProductSpec, degree: int) -> ClassicalRule:
    """Reference integrator used for Gram assembly during construction.

    Polynomial inner products get a rule exact on products of the joint
    degree; Sobolev products use a fixed high-order Gauss rule.
    """
    base = domain.base if isinstance(domain, MappedDomain) else domain
    if ip.sobolev_order == 1:
        n_pts = max(H1_GRAM_POINTS, degree + 3)
        rule = gauss_legendre(n_pts, (base.a, base.b))
        if isinstance(domain, MappedDomain):
            rule = rule.mapped(domain.map)
        return rule
    if base.kind == CIRCLE:
        return trapezoid_trig(2 * (degree + 1) + 3)
    return reference_rule(domain, 2 * (degree + 1) + 2)


def joint_orthonormal_basis(domain, degree: int, ip: InnerProductSpec) -> tuple[BasisSet, int]:
    """Orthonormal graded basis through degree + 1 and the split index.

    The leading block spans the target space; the trailing block is the
    complement slice the rule is minimized against.
    """
    raw = poly_space(domain, degree + 1)
    ref = construction_reference(domain, ip, degree + 1)
    joint = orthonormalize(raw, ip, ref)
    base = domain.base if isinstance(domain, MappedDomain) else domain
    return joint, space_dimension(base, degree)


def kappa_inf_value(projection: np.ndarray) -> float:
    """Infinity-norm condition number of the square projection matrix F* W."""
    proj = np.asarray(projection, dtype=float)
    if proj.shape[0] != proj.shape[1]:
        raise ValueError("condition number is only reported for square "
                         "projection matrices")
    return float(np.linalg.norm(proj, np.inf)
                 * np.linalg.norm(np.linalg.inv(proj), np.inf))


def kappa_inf(rule: BilinearRule) -> float:
    f = rule.basis_f0.eval_matrix(rule.points_x)
    return kappa_inf_value(f.T @ rule.weight_matrix)


def exactness_residual(rule: BilinearRule) -> float:
    """max |F(x)* W G(y) - M| over all entries."""
    f = rule.basis_f0.eval_matrix(rule.points_x)
    g = rule.basis_f0.eval_matrix(rule.points_y)
    m = rule.gram_or_identity()
    return float(np.max(np.abs(f.T @ rule.weight_matrix @ g - m)))


def build_rule(domain, degree: int, ip: InnerProductSpec | None = None,
               cfg: OptConfig | None = None) -> BilinearRule:
    """Construct a symmetric minimal bilinear rule on the given space.

    Orthonormalizes the graded basis one degree past the target, minimizes
    the leakage objective over point sets, solves the exactness constraint
    for W, and attaches quality metrics.  For Sobolev products the weight
    matrix is split into its plain-L2 part and the derivative remainder so
    the rule can later be rescaled under similarity maps.
    """
    ip = ip if ip is not None else InnerProductSpec(domain)
    cfg = cfg if cfg is not None else OptConfig()
    if ip.domain != domain:
        raise ValueError("inner product is declared on a different domain")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    joint, k = joint_orthonormal_basis(domain, degree, ip)
    ctx = symmetric_context(joint, k)
    result = minimize(ctx, cfg)
    points = result.best_x
    f0 = ctx.f0_basis()
    g1 = ctx.g1_basis()
    f = f0.eval_matrix(points)
    try:
        w = w_invertible(f, f, np.eye(k))
    except ConstructionError as exc:
        raise ConstructionError(
            f"optimizer returned a singular point set for degree {degree}: {exc}") from exc
    w_split = None
    if ip.sobolev_order == 1:
        ref = construction_reference(domain, ip, degree)
        m_l2 = np.asarray(gram_matrix(f0, f0, InnerProductSpec(domain), ref))
        w0 = w_invertible(f, f, m_l2)
        w_split = (w0, w - w0)
    prov = {
        "seed": cfg.seed,
        "config_hash": config_hash(domain, degree, ip, cfg),
        "package": f"biquad {_pkg_version}",
        "starts_run": int(len(result.history)),
        "optimizer_sigma": float(result.best_sigma),
        "points_outside_domain": int(result.outside_domain),
    }
    rule = BilinearRule(domain=domain, ip=ip, degree=degree,
                        points_x=points, points_y=points.copy(),
                        weight_matrix=w, basis_f0=f0, g1_basis=g1,
                        w_split=w_split, gram=None,
                        sigma=0.0, kappa_inf=None, provenance=prov)
    sigma = sigma_of_rule(rule)
    rule = replace(rule, sigma=sigma, kappa_inf=kappa_inf(rule))
    return rule


def apply_rule(rule: BilinearRule, f_vals, g_vals) -> float:
    """Evaluate the bilinear form from samples: f(x)* W g(y)."""
    fv = np.asarray(f_vals, dtype=float).reshape(-1)
    gv = np.asarray(g_vals, dtype=float).reshape(-1)
    if len(fv) != rule.weight_matrix.shape[0] or len(gv) != rule.weight_matrix.shape[1]:
        raise ValueError(
            f"value counts ({len(fv)}, {len(gv)}) do not match rule order "
            f"{rule.weight_matrix.shape}")
    return float(fv @ rule.weight_matrix @ gv)


def project(rule: BilinearRule, g_vals) -> np.ndarray:
    """Coefficients of the approximate orthogonal projection of g.

    Returns F(x)* W g(y), the coefficient vector in the rule's basis.
    """
    gv = np.asarray(g_vals, dtype=float).reshape(-1)
    if len(gv) != rule.weight_matrix.shape[1]:
        raise ValueError(f"expected {rule.weight_matrix.shape[1]} values, got {len(gv)}")
    f = rule.basis_f0.eval_matrix(rule.points_x)
    return f.T @ (rule.weight_matrix @ gv)


# ---------------------------------------------------------------------------
# change of variables

def pushforward_l2(rule: BilinearRule, amap: AffineMap) -> BilinearRule:
    """Transport an L2 rule to the image of its domain under an affine map.

    Basis functions move as |det|^(-1/2) f o inverse(map), which preserves
    orthonormality, and the weight matrix is rescaled so exactness holds on
    the transported space.  The result is validated against a Gram matrix
    freshly integrated on the image domain.
    """
    if rule.ip.sobolev_order != 0:
        raise ValueError("pushforward_l2 applies to L2 rules only")
    det = abs(amap.det)
    prescale = det ** -0.5
    new_domain = (MappedDomain(rule.domain.base, amap.compose(rule.domain.map))
                  if isinstance(rule.domain, MappedDomain)
                  else MappedDomain(rule.domain, amap))
    f0 = rule.basis_f0.pushforward(amap, prescale)
    g1 = rule.g1_basis.pushforward(amap, prescale) if rule.g1_basis is not None else None
    new_ip = InnerProductSpec(new_domain, 0, rule.ip.weight)
    new = replace(rule, domain=new_domain, ip=new_ip,
                  points_x=amap(rule.points_x), points_y=amap(rule.points_y),
                  weight_matrix=rule.weight_matrix * det,
                  basis_f0=f0, g1_basis=g1, w_split=None)
    residual = _image_gram_residual(new)
    if residual > 1e-9:
        raise ConstructionError(f"pushforward failed validation: residual {residual:.2e}")
    prov = dict(rule.provenance or {})
    prov["pushforward"] = {"map": amap.to_dict(), "kind": "l2",
                           "validation_residual": residual}
    return replace(new, provenance=prov)


def pushforward_h1(rule: BilinearRule, amap: AffineMap) -> BilinearRule:
    """Transport a Sobolev rule under a similarity map x -> s U x + b.

    The plain-L2 part of the weight matrix scales with |s| and the
    derivative part with 1/|s| (one-dimensional domains), which is the
    scaling that keeps the transported rule exact; exactness is confirmed
    against a freshly integrated Gram matrix on the image and the residual
    recorded in provenance.  The transported basis is no longer
    orthonormal, so the rule carries its image Gram matrix explicitly.
    """
    if rule.ip.sobolev_order != 1 or rule.w_split is None:
        raise ValueError("pushforward_h1 needs a Sobolev rule with a stored W split")
    scale = amap.similarity_scale()
    if scale is None:
        raise ValueError("pushforward_h1 supports similarity maps only")
    det = abs(amap.det)
    prescale = det ** -0.5
    w0, w1 = rule.w_split
    new_w0 = scale * w0
    new_w1 = w1 / scale
    new_domain = (MappedDomain(rule.domain.base, amap.compose(rule.domain.map))
                  if isinstance(rule.domain, MappedDomain)
                  else MappedDomain(rule.domain, amap))
    f0 = rule.basis_f0.pushforward(amap, prescale)
    new_ip = InnerProductSpec(new_domain, 1, rule.ip.weight)
    ref = construction_reference(new_domain, new_ip, rule.degree + 1)
    new_gram = np.asarray(gram_matrix(f0, f0, new_ip, ref))
    g1 = None
    if rule.g1_basis is not None:
        g1 = orthonormalize(rule.g1_basis.pushforward(amap, prescale), new_ip, ref)
    new = replace(rule, domain=new_domain, ip=new_ip,
                  points_x=amap(rule.points_x), points_y=amap(rule.points_y),
                  weight_matrix=new_w0 + new_w1, basis_f0=f0, g1_basis=g1,
                  w_split=(new_w0, new_w1), gram=new_gram)
    residual = exactness_residual(new)
    if residual > 1e-9 * max(1.0, float(np.max(np.abs(new_gram)))):
        raise ConstructionError(f"pushforward failed validation: residual {residual:.2e}")
    prov = dict(rule.provenance or {})
    prov["pushforward"] = {"map": amap.to_dict(), "kind": "h1",
                           "validation_residual": residual}
    new = replace(new, provenance=prov)
    return replace(new, sigma=sigma_of_rule(new), kappa_inf=kappa_inf(new))


def _image_gram_residual(rule: BilinearRule) -> float:
    """Exactness residual against a Gram matrix recomputed on the image domain."""
    ref = construction_reference(rule.domain, rule.ip, rule.degree)
    fresh = np.asarray(gram_matrix(rule.basis_f0, rule.basis_f0, rule.ip, ref))
    f = rule.basis_f0.eval_matrix(rule.points_x)
    g = rule.basis_f0.eval_matrix(rule.points_y)
    return float(np.max(np.abs(f.T @ rule.weight_matrix @ g - fresh)))


# ---------------------------------------------------------------------------
# serialization

def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("cannot serialize non-finite values")
    return format(float(x), ".17g")


def _emit(obj) -> str:
    """Canonical JSON: sorted keys, floats at 17 significant digits."""
    if isinstance(obj, dict):
        inner = ",".join(f"{json.dumps(k)}:{_emit(obj[k])}" for k in sorted(obj))
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_emit(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _rule_payload(rule: BilinearRule) -> dict:
    payload = {
        "version": RULE_FORMAT,
        "domain": rule.domain.to_dict(),
        "ip": rule.ip.to_dict(),
        "degree": rule.degree,
        "dimension": rule.dimension,
        "points_x": rule.points_x.tolist(),
        "points_y": rule.points_y.tolist(),
        "w": rule.weight_matrix.tolist(),
        "w0": rule.w_split[0].tolist() if rule.w_split else None,
        "w1": rule.w_split[1].tolist() if rule.w_split else None,
        "gram": rule.gram.tolist() if rule.gram is not None else None,
        "sigma": rule.sigma,
        "kappa_inf": rule.kappa_inf,
        "provenance": rule.provenance or {},
    }
    return payload


def save_rule(rule: BilinearRule, path) -> None:
    """Write the rule as versioned, checksummed text with exact round-trip."""
    payload = _rule_payload(rule)
    digest = hashlib.sha256(_emit(payload).encode()).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_emit({"checksum": digest, **payload}))
        fh.write("\n")


def _rebuild_bases(domain, ip: InnerProductSpec, degree: int):
    """Reconstruct the rule's bases deterministically from its metadata."""
    if isinstance(domain, MappedDomain):
        base = domain.base
        base_ip = InnerProductSpec(base, ip.sobolev_order, ip.weight)
        joint, k = joint_orthonormal_basis(base, degree, base_ip)
        prescale = abs(domain.map.det) ** -0.5
        f0 = joint.take(np.arange(k)).pushforward(domain.map, prescale)
        g1 = joint.take(np.arange(k, joint.size)).pushforward(domain.map, prescale)
        if ip.sobolev_order == 1:
            ref = construction_reference(domain, ip, degree + 1)
            g1 = orthonormalize(g1, ip, ref)
        return f0, g1
    joint, k = joint_orthonormal_basis(domain, degree, ip)
    return joint.take(np.arange(k)), joint.take(np.arange(k, joint.size))


LOAD_RESIDUAL_TOL = 1e-9


def load_rule(path) -> BilinearRule:
    """Read a rule file, verifying version, checksum, and exactness.

    The basis is rebuilt from the stored metadata (the construction is
    deterministic), after which the stored points and weight matrix must
    reproduce the Gram matrix within LOAD_RESIDUAL_TOL.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleFormatError(f"not a rule file: {exc}") from exc
    if not isinstance(data, dict) or data.get("version") != RULE_FORMAT:
        raise RuleFormatError(
            f"unsupported rule format {data.get('version')!r} (expected {RULE_FORMAT})")
    stored_sum = data.pop("checksum", None)
    digest = hashlib.sha256(_emit(data).encode()).hexdigest()
    if stored_sum != digest:
        raise RuleFormatError("checksum mismatch: file was modified or truncated")
    try:
        domain = domain_from_dict(data["domain"])
        ip = InnerProductSpec(domain, data["ip"]["sobolev_order"], data["ip"]["weight"])
        degree = int(data["degree"])
        points_x = np.array(data["points_x"], dtype=float).reshape(-1, domain.dim)
        points_y = np.array(data["points_y"], dtype=float).reshape(-1, domain.dim)
        w = np.array(data["w"], dtype=float)
        w_split = None
        if data.get("w0") is not None:
            w_split = (np.array(data["w0"], dtype=float), np.array(data["w1"], dtype=float))
        gram = np.array(data["gram"], dtype=float) if data.get("gram") is not None else None
        sigma = float(data["sigma"])
        kappa = data.get("kappa_inf")
        kappa = float(kappa) if kappa is not None else None
        prov = data.get("provenance") or {}
    except (KeyError, TypeError, ValueError) as exc:
        raise RuleFormatError(f"malformed rule file: {exc}") from exc
    if sigma < 0:
        raise RuleIntegrityError("stored sigma is negative")
    if kappa is not None and kappa < 1.0:
        raise RuleIntegrityError("stored condition number is below one")
    f0, g1 = _rebuild_bases(domain, ip, degree)
    rule = BilinearRule(domain=domain, ip=ip, degree=degree,
                        points_x=points_x, points_y=points_y,
                        weight_matrix=w, basis_f0=f0, g1_basis=g1,
                        w_split=w_split, gram=gram, sigma=sigma,
                        kappa_inf=kappa, provenance=prov)
    if w_split is not None:
        if np.max(np.abs(w_split[0] + w_split[1] - w)) > 1e-13 * max(1.0, float(np.max(np.abs(w)))):
            raise RuleIntegrityError("weight split does not sum to the weight matrix")
    residual = exactness_residual(rule)
    if residual > LOAD_RESIDUAL_TOL * max(1.0, float(np.max(np.abs(rule.gram_or_identity())))):
        raise RuleIntegrityError(
            f"exactness residual {residual:.3e} exceeds {LOAD_RESIDUAL_TOL:.0e}; "
            "rule data is corrupt")
    return rule
