"""Exactness constraint, weight-matrix construction, and leakage objectives.

A rule exact on a dual pair satisfies F* W G = M.  Its quality against a
complement space is the leading singular value of F* W Gamma, which in the
square invertible symmetric case reduces to sigma_1(F^{-1} Gamma).  The
objectives below are what the optimizer minimizes over evaluation points
(and, in the rectangular case, over the free matrix Y).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet
from .refquad import ConstructionError

# a singular point configuration is reported to the optimizer as a large
# finite value so line searches stay total; doubled when the condition
# estimate overflows outright
SIGMA_PENALTY = 1.0e6
COND_LIMIT = 1.0e12


def _mat(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def w_invertible(F, G, M) -> np.ndarray:
    """Solve F* W G = M for square invertible F and G."""
    f, g, m = _mat(F), _mat(G), _mat(M)
    if f.shape[0] != f.shape[1] or g.shape[0] != g.shape[1]:
        raise ConstructionError("w_invertible needs square evaluation matrices")
    cond_f, cond_g = np.linalg.cond(f), np.linalg.cond(g)
    if not (cond_f < COND_LIMIT and cond_g < COND_LIMIT):
        raise ConstructionError(
            f"singular evaluation matrix (cond F ~ {cond_f:.2e}, cond G ~ {cond_g:.2e})")
    w = np.linalg.solve(f.T, np.linalg.solve(g.T, m.T).T)
    residual = np.max(np.abs(f.T @ w @ g - m))
    if residual > 1e-10 * max(1.0, float(np.max(np.abs(m)))):
        raise ConstructionError(f"exactness residual {residual:.2e} after solve")
    return w


def w_general(F, G, M, Y) -> np.ndarray:
    """General solution of F* W G = M for full-column-rank F (m x k), G (n x k).

    The free matrix Y (m x n) parametrizes the full solution set; Y = 0
    gives the minimum-norm solution through the pseudoinverses.
    """
    f, g, m, y = _mat(F), _mat(G), _mat(M), _mat(Y)
    fp = np.linalg.pinv(f)
    gp = np.linalg.pinv(g)
    k = f.shape[1]
    if np.linalg.matrix_rank(f) < k or np.linalg.matrix_rank(g) < g.shape[1]:
        raise ConstructionError("rank-deficient evaluation matrix")
    return fp.T @ m @ gp + y - f @ fp @ y @ g @ gp


def _sigma_from_F_Gamma(f: np.ndarray, gamma: np.ndarray) -> float:
    """sigma_1(F^{-1} Gamma) with a finite penalty for ill-conditioned F.

    F^{-1} is carried along in the same solve so the infinity-norm condition
    estimate costs nothing extra; the singular value itself comes from the
    full SVD of the small solved matrix.
    """
    k, p = f.shape[0], gamma.shape[1]
    rhs = np.concatenate([gamma, np.eye(k)], axis=1)
    try:
        sol = np.linalg.solve(f, rhs)
    except np.linalg.LinAlgError:
        return 2.0 * SIGMA_PENALTY
    if not np.isfinite(sol).all():
        return 2.0 * SIGMA_PENALTY
    cond = (np.abs(f).sum(axis=1).max() * np.abs(sol[:, p:]).sum(axis=1).max())
    if cond > COND_LIMIT:
        return SIGMA_PENALTY
    return float(np.linalg.svd(sol[:, :p], compute_uv=False)[0])


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    """Joint orthonormal basis split into the exactness space and its tail.

    The first `k` members span the space the rule must integrate exactly;
    the remaining members span the orthogonal complement slice the rule is
    minimized against.  In "general" mode a prefix of evaluation points is
    pinned and a free matrix enters the objective.
    """

    joint: BasisSet
    k: int
    mode: str = "symmetric"
    fixed_points: np.ndarray | None = None
    n_free: int | None = None

    def __post_init__(self):
        if not self.joint.orthonormal:
            raise ValueError("objective context requires an orthonormal joint basis")
        if not 0 < self.k < self.joint.size:
            raise ValueError("split index must leave a nonempty complement slice")
        if self.mode not in ("symmetric", "general"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "general":
            if self.fixed_points is None or self.n_free is None:
                raise ValueError("general mode needs fixed_points and n_free")

    @property
    def domain(self):
        return self.joint.domain

    @property
    def dim(self) -> int:
        return self.joint.domain.dim

    @property
    def p(self) -> int:
        return self.joint.size - self.k

    @property
    def m(self) -> int:
        """Total number of evaluation points."""
        if self.mode == "symmetric":
            return self.k
        return len(self.fixed_points) + self.n_free

    def f0_basis(self) -> BasisSet:
        return self.joint.take(np.arange(self.k))

    def g1_basis(self) -> BasisSet:
        return self.joint.take(np.arange(self.k, self.joint.size))

    # -- symmetric invertible case ------------------------------------------

    def eval_split(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        table = self.joint.eval_matrix(points)
        return table[:, : self.k], table[:, self.k:]

    def sigma_symmetric(self, points) -> tuple[float, np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float).reshape(self.k, self.dim)
        f, gamma = self.eval_split(pts)
        return _sigma_from_F_Gamma(f, gamma), f, gamma

    def _solved_tail(self, points: np.ndarray) -> np.ndarray | None:
        """F^{-1} Gamma when well conditioned, else None."""
        f, gamma = self.eval_split(points)
        p = gamma.shape[1]
        rhs = np.concatenate([gamma, np.eye(self.k)], axis=1)
        try:
            sol = np.linalg.solve(f, rhs)
        except np.linalg.LinAlgError:
            return None
        if not np.isfinite(sol).all():
            return None
        cond = np.abs(f).sum(axis=1).max() * np.abs(sol[:, p:]).sum(axis=1).max()
        if cond > COND_LIMIT:
            return None
        return sol[:, :p]

    def sigma_symmetric_batch(self, points: np.ndarray) -> np.ndarray:
        """Objective over a stack of point sets, shape (B, k, dim) -> (B,)."""
        batch = np.asarray(points, dtype=float)
        nb, k, dim = batch.shape
        table = self.joint.eval_matrix(batch.reshape(nb * k, dim)).reshape(nb, k, -1)
        f = table[:, :, : self.k]
        gamma = table[:, :, self.k:]
        p = self.p
        rhs = np.concatenate([gamma, np.broadcast_to(np.eye(k), (nb, k, k))], axis=2)
        try:
            sol = np.linalg.solve(f, rhs)
        except np.linalg.LinAlgError:
            return np.array([_sigma_from_F_Gamma(f[i], gamma[i]) for i in range(nb)])
        finite = np.isfinite(sol).all(axis=(1, 2))
        cond = np.full(nb, np.inf)
        cond[finite] = (np.abs(f[finite]).sum(axis=2).max(axis=1)
                        * np.abs(sol[finite][:, :, p:]).sum(axis=2).max(axis=1))
        out = np.empty(nb)
        ok = finite & (cond <= COND_LIMIT)
        if np.any(ok):
            out[ok] = np.linalg.svd(sol[ok][:, :, :p], compute_uv=False)[:, 0]
        out[finite & (cond > COND_LIMIT)] = SIGMA_PENALTY
        out[~finite] = 2.0 * SIGMA_PENALTY
        return out

    # -- general (rectangular) case -----------------------------------------

    def assemble_points(self, free_points: np.ndarray) -> np.ndarray:
        free = np.asarray(free_points, dtype=float).reshape(self.n_free, self.dim)
        return np.vstack([self.fixed_points, free])

    def sigma_general(self, points, Y) -> float:
        """sigma_1(F+ Gamma + F* Y (I - F F+) Gamma) for the m-point set."""
        pts = np.asarray(points, dtype=float).reshape(self.m, self.dim)
        y = np.asarray(Y, dtype=float).reshape(self.m, self.m)
        f, gamma = self.eval_split(pts)
        fp = np.linalg.pinv(f)
        if np.linalg.matrix_rank(f, tol=None) < self.k:
            return SIGMA_PENALTY
        inner = fp @ gamma + f.T @ y @ (gamma - f @ (fp @ gamma))
        return float(np.linalg.svd(inner, compute_uv=False)[0])

    # -- flattened interface for the optimizer ------------------------------

    @property
    def n_vars(self) -> int:
        if self.mode == "symmetric":
            return self.k * self.dim
        return self.n_free * self.dim + self.m * self.m

    def unpack(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        z = np.asarray(z, dtype=float)
        if self.mode == "symmetric":
            return z.reshape(self.k, self.dim), None
        npt = self.n_free * self.dim
        free = z[:npt].reshape(self.n_free, self.dim)
        y = z[npt:].reshape(self.m, self.m)
        return self.assemble_points(free), y

    def objective(self, z: np.ndarray) -> float:
        if self.mode == "symmetric":
            return self.sigma_symmetric(z)[0]
        points, y = self.unpack(z)
        return self.sigma_general(points, y)

    def objective_batch(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=float)
        if self.mode == "symmetric":
            return self.sigma_symmetric_batch(zs.reshape(len(zs), self.k, self.dim))
        return np.array([self.objective(z) for z in zs])

    def surrogate(self, z: np.ndarray) -> float:
        """Sum of squared singular values of the leakage matrix.

        Smooth wherever F is well conditioned (it is a rational function of
        the points), unlike the leading singular value, which is conic at
        zeros and at multiplicity coalescence.  Shares minimizers with the
        true objective at symmetric optima; the optimizer only ever accepts
        a surrogate-polished point when the true objective improves.
        """
        if self.mode == "symmetric":
            pts = np.asarray(z, dtype=float).reshape(self.k, self.dim)
            x = self._solved_tail(pts)
            return float(np.sum(x * x)) if x is not None else SIGMA_PENALTY
        points, y = self.unpack(z)
        f, gamma = self.eval_split(points)
        if np.linalg.matrix_rank(f) < self.k:
            return SIGMA_PENALTY
        fp = np.linalg.pinv(f)
        inner = fp @ gamma + f.T @ y @ (gamma - f @ (fp @ gamma))
        return float(np.sum(inner * inner))

    def surrogate_batch(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=float)
        if self.mode != "symmetric":
            return np.array([self.surrogate(z) for z in zs])
        batch = zs.reshape(len(zs), self.k, self.dim)
        nb, k, dim = batch.shape
        table = self.joint.eval_matrix(batch.reshape(nb * k, dim)).reshape(nb, k, -1)
        f = table[:, :, : self.k]
        gamma = table[:, :, self.k:]
        p = self.p
        rhs = np.concatenate([gamma, np.broadcast_to(np.eye(k), (nb, k, k))], axis=2)
        try:
            sol = np.linalg.solve(f, rhs)
        except np.linalg.LinAlgError:
            return np.array([self.surrogate(z) for z in zs])
        finite = np.isfinite(sol).all(axis=(1, 2))
        cond = np.full(nb, np.inf)
        cond[finite] = (np.abs(f[finite]).sum(axis=2).max(axis=1)
                        * np.abs(sol[finite][:, :, p:]).sum(axis=2).max(axis=1))
        out = np.full(nb, SIGMA_PENALTY)
        ok = finite & (cond <= COND_LIMIT)
        x = sol[:, :, :p]
        out[ok] = np.sum(x[ok] * x[ok], axis=(1, 2))
        return out

    def start_vector(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform random evaluation points (free matrix entries start at 0)."""
        if self.mode == "symmetric":
            return self.domain.sample(rng, self.k).reshape(-1)
        free = self.domain.sample(rng, self.n_free).reshape(-1)
        return np.concatenate([free, np.zeros(self.m * self.m)])

    def sort_vector(self, z: np.ndarray) -> np.ndarray:
        """Canonical form: evaluation points in lexicographic order.

        The objective is invariant under point permutations; in general mode
        the same permutation is applied to the rows and columns of the free
        matrix that belong to the free points.
        """
        z = np.asarray(z, dtype=float).copy()
        if self.mode == "symmetric":
            pts = z.reshape(self.k, self.dim)
            order = np.lexsort(pts.T[::-1])
            return pts[order].reshape(-1)
        npt = self.n_free * self.dim
        free = z[:npt].reshape(self.n_free, self.dim)
        order = np.lexsort(free.T[::-1])
        nfix = len(self.fixed_points)
        perm = np.concatenate([np.arange(nfix), nfix + order])
        y = z[npt:].reshape(self.m, self.m)[np.ix_(perm, perm)]
        return np.concatenate([free[order].reshape(-1), y.reshape(-1)])


def symmetric_context(joint: BasisSet, k: int) -> ObjectiveContext:
    return ObjectiveContext(joint=joint, k=k)


def general_context(joint: BasisSet, k: int, fixed_points, n_free: int) -> ObjectiveContext:
    fixed = np.atleast_2d(np.asarray(fixed_points, dtype=float))
    if fixed.shape[1] != joint.domain.dim:
        fixed = fixed.reshape(-1, joint.domain.dim)
    return ObjectiveContext(joint=joint, k=k, mode="general",
                            fixed_points=fixed, n_free=n_free)


def sigma_symmetric(ctx: ObjectiveContext, points) -> tuple[float, np.ndarray, np.ndarray]:
    return ctx.sigma_symmetric(points)


def sigma_general(ctx: ObjectiveContext, points, Y) -> float:
    return ctx.sigma_general(points, Y)


def sigma_of_rule(rule, g1_basis: BasisSet | None = None) -> float:
    """Leakage sigma_1 of a built rule against its complement slice.

    When the rule's Gram matrix is not the identity (transported Sobolev
    rules), the left factor is whitened through the Cholesky factor so the
    value still bounds |Q(f, g1)| over unit-norm f and g1.
    """
    g1 = g1_basis if g1_basis is not None else rule.g1_basis
    if g1 is None:
        raise ValueError("rule carries no complement basis and none was given")
    if g1.domain.dim != rule.domain.dim:
        raise ValueError("complement basis dimension mismatch")
    f = rule.basis_f0.eval_matrix(rule.points_x)
    gamma = g1.eval_matrix(rule.points_y)
    core = f.T @ rule.weight_matrix @ gamma
    if rule.gram is not None:
        chol = np.linalg.cholesky(np.asarray(rule.gram))
        core = np.linalg.solve(chol, core)
    return float(np.linalg.svd(core, compute_uv=False)[0])
