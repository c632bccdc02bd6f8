"""Integration domains, point handling, and affine maps between domains."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INTERVAL = "interval"
TRIANGLE = "triangle"
SQUARE = "square"
DISK = "disk"
CIRCLE = "circle"
MAPPED = "mapped"

_KINDS = (INTERVAL, TRIANGLE, SQUARE, DISK, CIRCLE)


class DomainError(ValueError):
    """A point lies outside the domain where an evaluation is requested."""


def as_points(points, dim: int) -> np.ndarray:
    """Coerce input to a float array of shape (npoints, dim)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != dim:
        if dim == 1 and pts.shape[0] == 1:
            pts = pts.reshape(-1, 1)
        else:
            raise ValueError(f"expected points of dimension {dim}, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class Domain:
    """One of the supported reference integration domains.

    Kinds: interval (a, b); the right triangle with vertices
    (-1,-1), (-1,1), (1,-1); the square [-1,1]^2; the closed unit disk;
    the circle parametrized by angle in [0, 2*pi).
    """

    kind: str
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == INTERVAL and not self.a < self.b:
            raise ValueError(f"interval requires a < b, got ({self.a}, {self.b})")

    @staticmethod
    def interval(a: float = -1.0, b: float = 1.0) -> "Domain":
        return Domain(INTERVAL, float(a), float(b))

    @staticmethod
    def triangle() -> "Domain":
        return Domain(TRIANGLE)

    @staticmethod
    def square() -> "Domain":
        return Domain(SQUARE)

    @staticmethod
    def disk() -> "Domain":
        return Domain(DISK)

    @staticmethod
    def circle() -> "Domain":
        return Domain(CIRCLE)

    @property
    def dim(self) -> int:
        return 1 if self.kind in (INTERVAL, CIRCLE) else 2

    @property
    def measure(self) -> float:
        if self.kind == INTERVAL:
            return self.b - self.a
        if self.kind == TRIANGLE:
            return 2.0
        if self.kind == SQUARE:
            return 4.0
        if self.kind == DISK:
            return math.pi
        return 2.0 * math.pi

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Boolean mask of points inside the closed domain (circle: always)."""
        pts = as_points(points, self.dim)
        if self.kind == INTERVAL:
            x = pts[:, 0]
            return (x >= self.a - tol) & (x <= self.b + tol)
        if self.kind == CIRCLE:
            return np.ones(pts.shape[0], dtype=bool)
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == TRIANGLE:
            return (x >= -1.0 - tol) & (y >= -1.0 - tol) & (x + y <= tol)
        if self.kind == SQUARE:
            return (np.abs(x) <= 1.0 + tol) & (np.abs(y) <= 1.0 + tol)
        return x * x + y * y <= 1.0 + tol

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == INTERVAL:
            return np.array([self.a]), np.array([self.b])
        if self.kind == CIRCLE:
            return np.array([0.0]), np.array([2.0 * math.pi])
        return np.array([-1.0, -1.0]), np.array([1.0, 1.0])

    @property
    def diameter(self) -> float:
        if self.kind == INTERVAL:
            return self.b - self.a
        if self.kind == CIRCLE:
            return 2.0 * math.pi
        if self.kind == TRIANGLE:
            return 2.0 * math.sqrt(2.0)
        if self.kind == SQUARE:
            return 2.0 * math.sqrt(2.0)
        return 2.0

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw points uniformly from the domain by rejection from its box."""
        lo, hi = self.bounding_box()
        out = np.empty((count, self.dim))
        filled = 0
        while filled < count:
            batch = rng.uniform(lo, hi, size=(max(count - filled, 16), self.dim))
            keep = batch[self.contains(batch, tol=0.0)]
            take = min(len(keep), count - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == INTERVAL:
            d["a"] = self.a
            d["b"] = self.b
        return d

    def __str__(self) -> str:
        if self.kind == INTERVAL:
            return f"interval({self.a:g},{self.b:g})"
        return self.kind


@dataclass(frozen=True, eq=False)
class AffineMap:
    """Invertible affine map x -> linear @ x + translation."""

    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        lin = np.atleast_2d(np.asarray(self.linear, dtype=float))
        tr = np.atleast_1d(np.asarray(self.translation, dtype=float))
        if lin.shape[0] != lin.shape[1] or lin.shape[0] != tr.shape[0]:
            raise ValueError("linear part must be square and match the translation")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", tr)
        if abs(np.linalg.det(lin)) <= 0.0:
            raise ValueError("affine map must be invertible")

    @staticmethod
    def identity(dim: int) -> "AffineMap":
        return AffineMap(np.eye(dim), np.zeros(dim))

    @staticmethod
    def scaling(factor: float, dim: int = 1) -> "AffineMap":
        return AffineMap(factor * np.eye(dim), np.zeros(dim))

    @staticmethod
    def from_vertices(src, dst) -> "AffineMap":
        """Affine map sending d+1 source vertices to d+1 destination vertices."""
        src = np.asarray(src, dtype=float)
        dst = np.asarray(dst, dtype=float)
        lin = np.linalg.solve(src[1:] - src[0], dst[1:] - dst[0]).T
        return AffineMap(lin, dst[0] - lin @ src[0])

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    def __call__(self, points) -> np.ndarray:
        pts = as_points(points, self.dim)
        return pts @ self.linear.T + self.translation

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.linear)
        return AffineMap(inv, -inv @ self.translation)

    def compose(self, other: "AffineMap") -> "AffineMap":
        """Map equal to applying `other` first, then this map."""
        return AffineMap(self.linear @ other.linear,
                         self.linear @ other.translation + self.translation)

    def similarity_scale(self, tol: float = 1e-12) -> float | None:
        """Return |lambda| when the linear part is lambda * (unitary), else None."""
        gram = self.linear.T @ self.linear
        lam2 = gram[0, 0]
        if np.max(np.abs(gram - lam2 * np.eye(self.dim))) <= tol * max(1.0, abs(lam2)):
            return math.sqrt(lam2)
        return None

    @property
    def is_similarity(self) -> bool:
        return self.similarity_scale() is not None

    def to_dict(self) -> dict:
        return {"linear": self.linear.tolist(), "translation": self.translation.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "AffineMap":
        return AffineMap(np.array(d["linear"]), np.array(d["translation"]))

    def __eq__(self, other) -> bool:
        return (isinstance(other, AffineMap)
                and np.array_equal(self.linear, other.linear)
                and np.array_equal(self.translation, other.translation))


@dataclass(frozen=True, eq=False)
class MappedDomain:
    """Image of a reference domain under an invertible affine map."""

    base: Domain
    map: AffineMap

    def __post_init__(self):
        if self.map.dim != self.base.dim:
            raise ValueError("map dimension does not match the base domain")

    @property
    def kind(self) -> str:
        return MAPPED

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def measure(self) -> float:
        return self.base.measure * abs(self.map.det)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        return self.base.contains(self.map.inverse()(points), tol=tol)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.base.bounding_box()
        if self.dim == 1:
            corners = np.array([[lo[0]], [hi[0]]])
        else:
            corners = np.array([[a, b] for a in (lo[0], hi[0]) for b in (lo[1], hi[1])])
        mapped = self.map(corners)
        return mapped.min(axis=0), mapped.max(axis=0)

    @property
    def diameter(self) -> float:
        scale = np.linalg.norm(self.map.linear, 2)
        return self.base.diameter * float(scale)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.map(self.base.sample(rng, count))

    def to_dict(self) -> dict:
        return {"kind": MAPPED, "base": self.base.to_dict(), "map": self.map.to_dict()}

    def __str__(self) -> str:
        return f"mapped({self.base})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, MappedDomain)
                and self.base == other.base and self.map == other.map)


def domain_from_dict(d: dict):
    """Inverse of Domain.to_dict / MappedDomain.to_dict."""
    if d["kind"] == MAPPED:
        return MappedDomain(domain_from_dict(d["base"]), AffineMap.from_dict(d["map"]))
    if d["kind"] == INTERVAL:
        return Domain.interval(d["a"], d["b"])
    return Domain(d["kind"])
