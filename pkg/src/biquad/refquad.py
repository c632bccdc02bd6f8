"""Classical reference quadratures, Gram matrices, and orthonormalization.

These rules are the trusted integrators: everything else in the package is
validated against them.  Construction of each rule is checked internally on
a sample of monomials with known closed-form integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_triangular

from .basis import BasisSet
from .domains import (CIRCLE, DISK, INTERVAL, SQUARE, TRIANGLE, AffineMap,
                      Domain, MappedDomain)


class ConstructionError(RuntimeError):
    """A numerical construction failed its own validity checks."""


# registry of named H1 coefficient functions A(x); names are what rule files
# and the command line refer to
WEIGHT_FUNCTIONS = {
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "one_plus_x2": lambda x: 1.0 + np.asarray(x, dtype=float) ** 2,
    "exp": lambda x: np.exp(np.asarray(x, dtype=float)),
}


@dataclass(frozen=True, eq=False)
class InnerProductSpec:
    """L2 (sobolev_order 0) or weighted H1 (order 1) inner product on a domain.

    For H1 the coefficient A is looked up by name in WEIGHT_FUNCTIONS and,
    on a mapped domain, is evaluated in the reference coordinates of the
    base domain.
    """

    domain: Domain | MappedDomain
    sobolev_order: int = 0
    weight: str = "one"

    def __post_init__(self):
        if self.sobolev_order not in (0, 1):
            raise ValueError("sobolev_order must be 0 or 1")
        base = self.domain.base if isinstance(self.domain, MappedDomain) else self.domain
        if self.sobolev_order == 1 and base.kind != INTERVAL:
            raise ValueError("H1 inner products are supported on intervals only")
        if self.weight not in WEIGHT_FUNCTIONS:
            raise ValueError(f"unknown weight {self.weight!r}; "
                             f"known: {sorted(WEIGHT_FUNCTIONS)}")

    def weight_values(self, points: np.ndarray) -> np.ndarray:
        """A at the given (image-domain) points, shape (npoints,)."""
        pts = np.atleast_2d(points)
        if isinstance(self.domain, MappedDomain):
            pts = self.domain.map.inverse()(pts)
        return WEIGHT_FUNCTIONS[self.weight](pts[:, 0])

    @property
    def label(self) -> str:
        if self.sobolev_order == 0:
            return "l2"
        return f"h1[{self.weight}]"

    def to_dict(self) -> dict:
        return {"sobolev_order": self.sobolev_order, "weight": self.weight}

    def __eq__(self, other) -> bool:
        return (isinstance(other, InnerProductSpec)
                and self.domain == other.domain
                and self.sobolev_order == other.sobolev_order
                and self.weight == other.weight)


def l2(domain) -> InnerProductSpec:
    return InnerProductSpec(domain)


def h1(domain, weight: str = "one") -> InnerProductSpec:
    return InnerProductSpec(domain, sobolev_order=1, weight=weight)


@dataclass(frozen=True, eq=False)
class ClassicalRule:
    """Nodes and positive-measure weights of a classical quadrature."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: Domain | MappedDomain
    exact_on: str = ""

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        if nodes.shape[0] == 1 and nodes.shape[1] > 1 and self.domain.dim == 1:
            nodes = nodes.T
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("node and weight counts differ")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, f) -> float:
        """Integrate a callable (of points) or an array of node values."""
        vals = f(self.nodes) if callable(f) else np.asarray(f, dtype=float)
        return float(self.weights @ vals)

    def mapped(self, amap: AffineMap) -> "ClassicalRule":
        """Transport the rule to the image domain (weights pick up |det|)."""
        if isinstance(self.domain, MappedDomain):
            new_domain = MappedDomain(self.domain.base, amap.compose(self.domain.map))
        else:
            new_domain = MappedDomain(self.domain, amap)
        return ClassicalRule(nodes=amap(self.nodes), weights=self.weights * abs(amap.det),
                             domain=new_domain, exact_on=self.exact_on)


def gauss_legendre(n: int, interval: tuple[float, float] = (-1.0, 1.0)) -> ClassicalRule:
    """Gauss-Legendre rule: nodes from the symmetric tridiagonal eigenproblem.

    The n-point rule integrates polynomials of degree up to 2n - 1 exactly.
    """
    if n < 1:
        raise ValueError("need at least one node")
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("interval requires a < b")
    if n == 1:
        nodes = np.array([0.0])
        weights = np.array([2.0])
    else:
        k = np.arange(1.0, n)
        beta = k / np.sqrt(4.0 * k * k - 1.0)
        try:
            vals, vecs = eigh_tridiagonal(np.zeros(n), beta)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise ConstructionError(f"eigensolver failed for n={n}") from exc
        order = np.argsort(vals)
        nodes = vals[order]
        weights = 2.0 * vecs[0, order] ** 2
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    rule = ClassicalRule(nodes=(mid + half * nodes)[:, None], weights=half * weights,
                         domain=Domain.interval(a, b),
                         exact_on=f"polynomials of degree <= {2 * n - 1}")
    _check_rule(rule, [(0,)], rtol=1e-12)
    if np.any(rule.weights <= 0):
        raise ConstructionError("nonpositive Gauss weight")
    return rule


def trapezoid_trig(n: int) -> ClassicalRule:
    """Equispaced n-point rule on [0, 2*pi), exact for frequencies below n."""
    if n < 1:
        raise ValueError("need at least one node")
    j = np.arange(n)
    return ClassicalRule(nodes=(2.0 * math.pi * j / n)[:, None],
                         weights=np.full(n, 2.0 * math.pi / n),
                         domain=Domain.circle(),
                         exact_on=f"trigonometric polynomials of frequency <= {n - 1}")


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def monomial_integral(domain, powers) -> float:
    """Closed-form integral of a monomial over a reference domain.

    powers is (p,) for 1-D domains and (p, q) for 2-D ones; on the circle
    the single entry is a frequency f and the integrand is cos(f x).
    """
    kind = domain.kind
    if kind == INTERVAL:
        p = powers[0]
        return (domain.b ** (p + 1) - domain.a ** (p + 1)) / (p + 1)
    if kind == CIRCLE:
        return 2.0 * math.pi if powers[0] == 0 else 0.0
    p, q = powers
    if kind == SQUARE:
        ix = 2.0 / (p + 1) if p % 2 == 0 else 0.0
        iy = 2.0 / (q + 1) if q % 2 == 0 else 0.0
        return ix * iy
    if kind == DISK:
        if p % 2 or q % 2:
            return 0.0
        ang = 2.0 * math.pi * _double_factorial(p - 1) * _double_factorial(q - 1) \
            / _double_factorial(p + q)
        return ang / (p + q + 2)
    if kind == TRIANGLE:
        # substitute x = s - 1, y = t - 1 over the simplex s, t >= 0, s + t <= 2
        total = Fraction(0)
        for i in range(p + 1):
            for j in range(q + 1):
                c = (math.comb(p, i) * math.comb(q, j)
                     * (-1) ** (p - i + q - j))
                simplex = Fraction(2 ** (i + j + 2) * math.factorial(i) * math.factorial(j),
                                   math.factorial(i + j + 2))
                total += c * simplex
        return float(total)
    raise ValueError(f"no closed-form monomials for domain {kind!r}")


def _monomial_values(domain, powers, points: np.ndarray) -> np.ndarray:
    if domain.kind == CIRCLE:
        return np.cos(powers[0] * points[:, 0])
    if domain.dim == 1:
        return points[:, 0] ** powers[0]
    return points[:, 0] ** powers[0] * points[:, 1] ** powers[1]


def _check_rule(rule: ClassicalRule, power_list, rtol: float = 1e-12) -> None:
    base = rule.domain.base if isinstance(rule.domain, MappedDomain) else rule.domain
    for powers in power_list:
        exact = monomial_integral(base, powers)
        got = rule.integrate(_monomial_values(base, powers, rule.nodes))
        if abs(got - exact) > rtol * max(1.0, abs(exact)):
            raise ConstructionError(
                f"rule failed monomial validation at powers {powers}: {got} vs {exact}")


def _monomial_sample(degree: int, cap: int = 4) -> list[tuple[int, int]]:
    top = min(degree, cap)
    return [(p, q) for p in range(top + 1) for q in range(top + 1 - p)]


def reference_rule(domain, target_degree: int) -> ClassicalRule:
    """A rule exact on polynomials of total degree target_degree on the domain.

    Interval and square use (tensor) Gauss-Legendre; the triangle collapses a
    tensor rule through the degenerate square-to-triangle map with the
    Jacobian absorbed into the weights; the disk combines a radial Gauss rule
    (with Jacobian r) and an equispaced angular rule.  On the circle the
    degree is a frequency cap.
    """
    if target_degree < 0:
        raise ValueError("degree must be nonnegative")
    if isinstance(domain, MappedDomain):
        return reference_rule(domain.base, target_degree).mapped(domain.map)
    d = target_degree
    if domain.kind == INTERVAL:
        return gauss_legendre((d + 2) // 2, (domain.a, domain.b))
    if domain.kind == CIRCLE:
        return trapezoid_trig(d + 1)
    if domain.kind == SQUARE:
        g = gauss_legendre((d + 2) // 2)
        x = g.nodes[:, 0]
        nodes = np.array([(a, b) for a in x for b in x])
        weights = np.array([wa * wb for wa in g.weights for wb in g.weights])
        rule = ClassicalRule(nodes, weights, domain,
                             exact_on=f"polynomials of total degree <= {d}")
        _check_rule(rule, _monomial_sample(d))
        return rule
    if domain.kind == TRIANGLE:
        n1 = (d + 3) // 2  # Jacobian raises the collapsed degree by one
        g = gauss_legendre(n1)
        u, wu = g.nodes[:, 0], g.weights
        nodes, weights = [], []
        for ui, wi in zip(u, wu):
            for vj, wj in zip(u, wu):
                x = 0.5 * (1.0 + ui) * (1.0 - vj) - 1.0
                nodes.append((x, vj))
                weights.append(wi * wj * 0.5 * (1.0 - vj))
        rule = ClassicalRule(np.array(nodes), np.array(weights), domain,
                             exact_on=f"polynomials of total degree <= {d}")
        _check_rule(rule, _monomial_sample(d))
        return rule
    if domain.kind == DISK:
        nr = (d + 3) // 2  # radial integrand carries an extra factor r
        gr = gauss_legendre(nr, (0.0, 1.0))
        ntheta = d + 1
        r, wr = gr.nodes[:, 0], gr.weights
        theta = 2.0 * math.pi * np.arange(ntheta) / ntheta
        wtheta = 2.0 * math.pi / ntheta
        nodes = np.array([(ri * math.cos(t), ri * math.sin(t)) for ri in r for t in theta])
        weights = np.array([wi * ri * wtheta for ri, wi in zip(r, wr) for _ in theta])
        rule = ClassicalRule(nodes, weights, domain,
                             exact_on=f"polynomials of total degree <= {d}")
        _check_rule(rule, _monomial_sample(d))
        return rule
    raise ValueError(f"unsupported domain {domain.kind!r}")


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Matrix of pairwise inner products of two bases."""

    values: np.ndarray
    ip: InnerProductSpec

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def shape(self):
        return self.values.shape


def gram_matrix(basis_a: BasisSet, basis_b: BasisSet, ip: InnerProductSpec,
                ref: ClassicalRule) -> GramMatrix:
    """Assemble M[i, j] = <f_i, g_j> under ip using the reference rule.

    The caller supplies a rule exact (or accurate to working precision) on
    every product appearing in M.
    """
    fa = basis_a.eval_matrix(ref.nodes)
    fb = basis_b.eval_matrix(ref.nodes)
    m = fa.T @ (ref.weights[:, None] * fb)
    if ip.sobolev_order == 1:
        avals = ip.weight_values(ref.nodes)
        if np.any(avals <= 0):
            raise ConstructionError("H1 coefficient A is not positive at reference nodes")
        ga = basis_a.grad_matrix(ref.nodes)[:, :, 0]
        gb = basis_b.grad_matrix(ref.nodes)[:, :, 0]
        m = m + ga.T @ ((ref.weights * avals)[:, None] * gb)
    return GramMatrix(values=m, ip=ip)


CHOLESKY_PIVOT_RTOL = 1e-12


def orthonormalize(raw: BasisSet, ip: InnerProductSpec, ref: ClassicalRule) -> BasisSet:
    """Return a basis of the same span that is orthonormal under ip.

    The Cholesky factor L of the Gram matrix is inverted onto the raw family,
    so each new function is a lower-triangular combination of the raw ones;
    the positive diagonal of L fixes every sign.  Fails when a pivot falls
    below CHOLESKY_PIVOT_RTOL times the largest Gram diagonal, which signals
    a numerically dependent raw family.
    """
    m = np.asarray(gram_matrix(raw, raw, ip, ref))
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise ConstructionError("Gram matrix is not positive definite") from exc
    if np.min(np.diag(chol)) ** 2 < CHOLESKY_PIVOT_RTOL * np.max(np.diag(m)):
        raise ConstructionError("Cholesky pivot below tolerance: raw basis is "
                                "numerically dependent")
    combo = solve_triangular(chol, np.eye(m.shape[0]), lower=True).T
    return raw.with_transform(combo, orthonormal=True, ip=ip)
