"""Orthogonal polynomial and trigonometric basis families.

Each family is evaluated through a table builder returning all members up
to a given order at once (vectorized over points), which is what the
objective evaluation hot path uses.  The single-function entry points
(legendre_eval, jacobi_eval, koornwinder_eval, zernike_eval, trig_eval)
are the user-facing evaluators and enforce domain membership where the
family is tied to a bounded domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .domains import (CIRCLE, DISK, INTERVAL, SQUARE, TRIANGLE, AffineMap,
                      Domain, DomainError, MappedDomain, as_points)

if TYPE_CHECKING:
    from .refquad import InnerProductSpec

LEGENDRE = "legendre"
KOORNWINDER = "koornwinder"
TENSOR_LEGENDRE = "tensor_legendre"
ZERNIKE = "zernike"
TRIG = "trig"


# ---------------------------------------------------------------------------
# one-dimensional recurrences

def legendre_table(n_max: int, x: np.ndarray) -> np.ndarray:
    """Values of P_0..P_{n_max} at x, shape (len(x), n_max+1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n_max + 1,))
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = x
    for k in range(2, n_max + 1):
        out[..., k] = ((2 * k - 1) * x * out[..., k - 1]
                       - (k - 1) * out[..., k - 2]) / k
    return out


def legendre_table_deriv(n_max: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of P_0..P_{n_max} at x."""
    x = np.asarray(x, dtype=float)
    vals = np.empty(x.shape + (n_max + 1,))
    ders = np.zeros(x.shape + (n_max + 1,))
    vals[..., 0] = 1.0
    if n_max >= 1:
        vals[..., 1] = x
        ders[..., 1] = 1.0
    for k in range(2, n_max + 1):
        vals[..., k] = ((2 * k - 1) * x * vals[..., k - 1]
                        - (k - 1) * vals[..., k - 2]) / k
        ders[..., k] = ((2 * k - 1) * (vals[..., k - 1] + x * ders[..., k - 1])
                        - (k - 1) * ders[..., k - 2]) / k
    return vals, ders


def jacobi_table(n_max: int, alpha: float, beta: float, x: np.ndarray) -> np.ndarray:
    """Values of Jacobi P_0^(a,b)..P_{n_max}^(a,b) at x."""
    if alpha <= -1 or beta <= -1:
        raise ValueError("Jacobi parameters must exceed -1")
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n_max + 1,))
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = 0.5 * ((alpha + beta + 2) * x + (alpha - beta))
    for n in range(2, n_max + 1):
        c = 2 * n + alpha + beta
        a1 = 2 * n * (n + alpha + beta) * (c - 2)
        a2 = (c - 1) * (alpha * alpha - beta * beta)
        a3 = (c - 1) * c * (c - 2)
        a4 = 2 * (n + alpha - 1) * (n + beta - 1) * c
        out[..., n] = ((a2 + a3 * x) * out[..., n - 1] - a4 * out[..., n - 2]) / a1
    return out


def legendre_eval(n: int, x) -> np.ndarray | float:
    """Legendre polynomial P_n by the three-term recurrence (any real x)."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x_arr = np.asarray(x, dtype=float)
    val = legendre_table(n, x_arr)[..., n]
    return float(val) if np.isscalar(x) or x_arr.ndim == 0 else val


def legendre_deriv(n: int, x) -> np.ndarray | float:
    """Derivative of P_n (recurrence on values and derivatives jointly)."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x_arr = np.asarray(x, dtype=float)
    val = legendre_table_deriv(n, x_arr)[1][..., n]
    return float(val) if np.isscalar(x) or x_arr.ndim == 0 else val


def jacobi_eval(n: int, alpha: float, beta: float, x) -> np.ndarray | float:
    """Jacobi polynomial P_n^(alpha,beta) by the three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x_arr = np.asarray(x, dtype=float)
    val = jacobi_table(n, alpha, beta, x_arr)[..., n]
    return float(val) if np.isscalar(x) or x_arr.ndim == 0 else val


# ---------------------------------------------------------------------------
# two-dimensional families

def _graded_pairs(n_max: int) -> np.ndarray:
    """Index pairs (m, n) with m + n <= n_max, ordered by total degree."""
    pairs = [(m, d - m) for d in range(n_max + 1) for m in range(d + 1)]
    return np.array(pairs, dtype=int)


def koornwinder_table(n_max: int, points: np.ndarray) -> np.ndarray:
    """All triangle basis members of total degree <= n_max at given points.

    Columns are ordered by total degree d = m + n, then by m.  The factor
    ((1-y)/2)^m P_m((2x+y+1)/(1-y)) is generated by a recurrence on the
    product itself, so the removable singularity at y = 1 never appears.
    """
    pts = as_points(points, 2)
    x, y = pts[:, 0], pts[:, 1]
    u = 0.5 * (2.0 * x + y + 1.0)       # (1-y)/2 times the Legendre argument
    v2 = (0.5 * (1.0 - y)) ** 2
    scaled = np.empty((len(x), n_max + 1))
    scaled[:, 0] = 1.0
    if n_max >= 1:
        scaled[:, 1] = u
    for m in range(2, n_max + 1):
        scaled[:, m] = ((2 * m - 1) * u * scaled[:, m - 1]
                        - (m - 1) * v2 * scaled[:, m - 2]) / m
    jac = [jacobi_table(n_max - m, 2 * m + 1, 0.0, y) for m in range(n_max + 1)]
    out = np.empty((len(x), (n_max + 1) * (n_max + 2) // 2))
    for col, (m, n) in enumerate(_graded_pairs(n_max)):
        out[:, col] = scaled[:, m] * jac[m][:, n]
    return out


def koornwinder_eval(m: int, n: int, point) -> np.ndarray | float:
    """Triangle basis member K_{m,n} at points of the closed reference triangle."""
    if m < 0 or n < 0:
        raise ValueError("indices must be nonnegative")
    pts = as_points(point, 2)
    if not Domain.triangle().contains(pts).all():
        raise DomainError("point outside the closed reference triangle")
    table = koornwinder_table(m + n, pts)
    col = _pair_column(m + n, m, n)
    val = table[:, col]
    return float(val[0]) if val.shape == (1,) else val


def _pair_column(n_max: int, m: int, n: int) -> int:
    d = m + n
    return d * (d + 1) // 2 + m


def tensor_legendre_table(n_max: int, points: np.ndarray) -> np.ndarray:
    """Products P_a(x) P_b(y) with a + b <= n_max, graded by total degree."""
    pts = as_points(points, 2)
    tx = legendre_table(n_max, pts[:, 0])
    ty = legendre_table(n_max, pts[:, 1])
    out = np.empty((len(pts), (n_max + 1) * (n_max + 2) // 2))
    for col, (a, b) in enumerate(_graded_pairs(n_max)):
        out[:, col] = tx[:, a] * ty[:, b]
    return out


@lru_cache(maxsize=None)
def _zernike_radial_coeffs(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients and powers of the radial polynomial Q_{m,n}."""
    half = (n - m) // 2
    coeffs = np.array([(-1) ** k * math.comb(n - k, k) * math.comb(n - 2 * k, half - k)
                       for k in range(half + 1)], dtype=float)
    powers = np.array([n - 2 * k for k in range(half + 1)], dtype=int)
    return coeffs, powers


def _zernike_indices(n_max: int) -> list[tuple[int, int]]:
    """Signed (m, n) pairs graded by radial order n."""
    idx = []
    for n in range(n_max + 1):
        for m in range(-n, n + 1, 2):
            idx.append((m, n))
    return idx


def zernike_table(n_max: int, points: np.ndarray) -> np.ndarray:
    """All disk basis members of degree <= n_max at given Cartesian points."""
    pts = as_points(points, 2)
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    rp = np.empty((len(pts), n_max + 1))
    rp[:, 0] = 1.0
    for p in range(1, n_max + 1):
        rp[:, p] = rp[:, p - 1] * r
    idx = _zernike_indices(n_max)
    out = np.empty((len(pts), len(idx)))
    for col, (m, n) in enumerate(idx):
        coeffs, powers = _zernike_radial_coeffs(abs(m), n)
        radial = rp[:, powers] @ coeffs
        angular = np.cos(m * theta) if m >= 0 else np.sin(-m * theta)
        out[:, col] = radial * angular
    return out


def zernike_eval(m: int, n: int, point) -> np.ndarray | float:
    """Disk basis member for signed azimuthal index m and radial order n."""
    if n < abs(m):
        raise ValueError("radial order must satisfy n >= |m|")
    if (n - abs(m)) % 2 != 0:
        raise ValueError("n - |m| must be even")
    pts = as_points(point, 2)
    if not Domain.disk().contains(pts).all():
        raise DomainError("point outside the closed unit disk")
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    coeffs, powers = _zernike_radial_coeffs(abs(m), n)
    radial = sum(c * r ** p for c, p in zip(coeffs, powers))
    angular = np.cos(m * theta) if m >= 0 else np.sin(-m * theta)
    val = radial * angular
    return float(val[0]) if val.shape == (1,) else val


def trig_table(f_max: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal Fourier family {1, sin x, cos x, ..., sin f_max x, cos f_max x}.

    Normalized for L2 on (0, 2*pi): the constant carries 1/sqrt(2*pi) and
    every oscillating member 1/sqrt(pi).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    out = np.empty((len(x), 2 * f_max + 1))
    out[:, 0] = 1.0 / math.sqrt(2.0 * math.pi)
    s = 1.0 / math.sqrt(math.pi)
    for f in range(1, f_max + 1):
        out[:, 2 * f - 1] = s * np.sin(f * x)
        out[:, 2 * f] = s * np.cos(f * x)
    return out


def trig_eval(j: int, n_max: int, x) -> np.ndarray | float:
    """Member j of the orthonormal Fourier family up to frequency n_max."""
    if not 0 <= j < 2 * n_max + 1:
        raise ValueError(f"index {j} out of range for frequency cap {n_max}")
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    val = trig_table(n_max, x_arr)[:, j]
    return float(val[0]) if val.shape == (1,) else val


# ---------------------------------------------------------------------------
# basis sets

def space_dimension(domain, n: int) -> int:
    """Dimension of the degree-n space attached to the domain."""
    if domain.kind == CIRCLE:
        return 2 * n + 1
    if domain.kind == INTERVAL:
        return n + 1
    return (n + 1) * (n + 2) // 2


@dataclass(frozen=True, eq=False)
class BasisSet:
    """An ordered family of evaluable scalar functions over a domain.

    The family is a linear image of a raw polynomial/trigonometric table:
    eval_matrix(points) = prescale * raw_table(premap^{-1}(points)) @ transform.
    A raw basis has transform None.  `degrees` carries per-function degree
    (or frequency) metadata and is non-decreasing.
    """

    domain: Domain | MappedDomain
    family: str
    n_max: int
    degrees: np.ndarray
    transform: np.ndarray | None = None
    orthonormal: bool = False
    ip: "InnerProductSpec | None" = None
    premap: AffineMap | None = None
    prescale: float = 1.0

    @property
    def size(self) -> int:
        if self.transform is not None:
            return self.transform.shape[1]
        return len(self.degrees)

    @property
    def raw_size(self) -> int:
        base = self.domain.base if isinstance(self.domain, MappedDomain) else self.domain
        return space_dimension(base, self.n_max)

    def _reference_points(self, points: np.ndarray) -> np.ndarray:
        if self.premap is not None:
            return self.premap.inverse()(points)
        return points

    def _raw_table(self, points: np.ndarray) -> np.ndarray:
        if self.family == LEGENDRE:
            base = self.domain.base if isinstance(self.domain, MappedDomain) else self.domain
            u = (2.0 * points[:, 0] - base.a - base.b) / (base.b - base.a)
            return legendre_table(self.n_max, u)
        if self.family == KOORNWINDER:
            return koornwinder_table(self.n_max, points)
        if self.family == TENSOR_LEGENDRE:
            return tensor_legendre_table(self.n_max, points)
        if self.family == ZERNIKE:
            return zernike_table(self.n_max, points)
        if self.family == TRIG:
            return trig_table(self.n_max, points[:, 0])
        raise ValueError(f"unknown family {self.family!r}")

    def _raw_grad(self, points: np.ndarray) -> np.ndarray:
        if self.family != LEGENDRE:
            raise ValueError(
                f"derivative evaluation is only available for interval bases, not {self.family!r}")
        base = self.domain.base if isinstance(self.domain, MappedDomain) else self.domain
        scale = 2.0 / (base.b - base.a)
        u = (2.0 * points[:, 0] - base.a - base.b) / (base.b - base.a)
        _, ders = legendre_table_deriv(self.n_max, u)
        return (ders * scale)[:, :, None]  # (npts, k_raw, 1)

    def eval_matrix(self, points, *, check: bool = False) -> np.ndarray:
        """Dense matrix with entry (i, j) = function j at point i."""
        pts = as_points(points, self.domain.dim)
        if check and not self.domain.contains(pts).all():
            bad = int(np.argmin(self.domain.contains(pts)))
            raise DomainError(f"point {bad} lies outside the domain closure")
        table = self._raw_table(self._reference_points(pts))
        if self.prescale != 1.0:
            table = table * self.prescale
        if self.transform is not None:
            table = table @ self.transform
        return table

    def grad_matrix(self, points) -> np.ndarray:
        """Gradients, shape (npoints, size, dim)."""
        pts = as_points(points, self.domain.dim)
        ref = self._reference_points(pts)
        grad = self._raw_grad(ref)
        if self.premap is not None:
            # chain rule through the inverse map
            inv_lin = self.premap.inverse().linear
            grad = np.einsum("pkd,de->pke", grad, inv_lin)
        if self.prescale != 1.0:
            grad = grad * self.prescale
        if self.transform is not None:
            grad = np.einsum("pkd,km->pmd", grad, self.transform)
        return grad

    @property
    def has_derivatives(self) -> bool:
        return self.family == LEGENDRE

    def with_transform(self, combo: np.ndarray, *, orthonormal: bool = False,
                       ip: "InnerProductSpec | None" = None) -> "BasisSet":
        """Compose a (size x new_size) column combination onto this basis."""
        current = self.transform if self.transform is not None else np.eye(self.raw_size)
        new = current @ combo
        degrees = _combined_degrees(self.degrees, combo)
        return replace(self, transform=new, degrees=degrees,
                       orthonormal=orthonormal, ip=ip)

    def take(self, columns) -> "BasisSet":
        """Sub-family keeping the given columns (ordering preserved)."""
        cols = np.asarray(columns, dtype=int)
        current = self.transform if self.transform is not None else np.eye(self.raw_size)
        return replace(self, transform=current[:, cols], degrees=self.degrees[cols])

    def pushforward(self, amap: AffineMap, prescale: float) -> "BasisSet":
        """Precompose with amap^{-1} and rescale: functions move to the image domain."""
        new_map = amap if self.premap is None else amap.compose(self.premap)
        base = self.domain.base if isinstance(self.domain, MappedDomain) else self.domain
        return replace(self, domain=MappedDomain(base, new_map), premap=new_map,
                       prescale=self.prescale * prescale)


def _combined_degrees(degrees: np.ndarray, combo: np.ndarray) -> np.ndarray:
    out = np.empty(combo.shape[1], dtype=int)
    for j in range(combo.shape[1]):
        nz = np.nonzero(np.abs(combo[:, j]) > 0.0)[0]
        out[j] = int(degrees[nz].max()) if len(nz) else 0
    return out


def poly_space(domain, n: int) -> BasisSet:
    """Raw degree-graded basis of the total-degree-n space on the domain."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    base = domain.base if isinstance(domain, MappedDomain) else domain
    if base.kind == INTERVAL:
        family, degrees = LEGENDRE, np.arange(n + 1)
    elif base.kind == TRIANGLE:
        family, degrees = KOORNWINDER, _graded_pairs(n).sum(axis=1)
    elif base.kind == SQUARE:
        family, degrees = TENSOR_LEGENDRE, _graded_pairs(n).sum(axis=1)
    elif base.kind == DISK:
        family = ZERNIKE
        degrees = np.array([nn for (_, nn) in _zernike_indices(n)])
    elif base.kind == CIRCLE:
        return trig_space(n, domain=domain)
    else:
        raise ValueError(f"unsupported domain {base.kind!r}")
    basis = BasisSet(domain=base, family=family, n_max=n, degrees=degrees)
    if isinstance(domain, MappedDomain):
        basis = basis.pushforward(domain.map, abs(domain.map.det) ** -0.5)
    return basis


def trig_space(f_max: int, domain=None) -> BasisSet:
    """Orthonormal Fourier family up to frequency f_max on the circle."""
    if f_max < 0:
        raise ValueError("frequency cap must be nonnegative")
    domain = domain if domain is not None else Domain.circle()
    degrees = np.array([0] + [f for f in range(1, f_max + 1) for _ in (0, 1)])
    return BasisSet(domain=domain, family=TRIG, n_max=f_max, degrees=degrees)


@dataclass(frozen=True, eq=False)
class EvalMatrix:
    """Evaluation of a basis on a point list; rows points, columns functions."""

    values: np.ndarray
    points: np.ndarray
    basis: BasisSet

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def shape(self):
        return self.values.shape


def eval_matrix(basis: BasisSet, points, *, check: bool = True) -> EvalMatrix:
    """Evaluate every basis function at every point (user-facing; checks domain)."""
    pts = as_points(points, basis.domain.dim)
    try:
        values = basis.eval_matrix(pts, check=check)
    except DomainError:
        raise
    except Exception as exc:  # pragma: no cover - defensive propagation
        raise ValueError(f"basis evaluation failed: {exc}") from exc
    return EvalMatrix(values=values, points=pts, basis=basis)
