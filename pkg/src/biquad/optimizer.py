"""Multistart quasi-Newton minimization of the leakage objectives.

Each start runs a BFGS descent with a backtracking line search and
central-difference gradients, followed by small-perturbation restarts.
Near-zero minima are refined on the squared objective, which is smooth
there while the singular value itself is conic.  All randomness flows
from a single seed through per-start child sequences, so serial and
threaded runs produce identical results.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from .objective import SIGMA_PENALTY, ObjectiveContext


@dataclass(frozen=True)
class OptConfig:
    """Settings for the multistart BFGS search."""

    n_starts: int = 200
    seed: int = 0
    grad_step: float = 1e-6
    ls_shrink: float = 0.5
    ls_suff_decrease: float = 1e-4
    grad_tol: float = 1e-10
    step_tol: float = 1e-12
    max_iters: int = 500
    perturb_delta: float = 1e-3
    perturb_rounds: int = 3
    stop_below: float = 1e-12
    threads: int = 1

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("need at least one start")
        for name in ("grad_step", "ls_shrink", "ls_suff_decrease", "grad_tol",
                     "step_tol", "perturb_delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.max_iters < 1 or self.perturb_rounds < 0 or self.threads < 1:
            raise ValueError("bad iteration/thread configuration")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "OptConfig":
        known = {f.name for f in fields(OptConfig)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")
        return OptConfig(**d)


@dataclass(frozen=True, eq=False)
class OptResult:
    """Best point set (and free matrix) found by the multistart search."""

    best_x: np.ndarray
    best_Y: np.ndarray | None
    best_sigma: float
    start_index: int
    history: np.ndarray
    iterations: int
    outside_domain: int = 0


def finite_diff_gradient(objective: Callable[[np.ndarray], float], x: np.ndarray,
                         h: float, penalty_level: float | None = None,
                         f0: float | None = None) -> np.ndarray:
    """Central-difference gradient with per-coordinate step h * max(1, |x_i|).

    When a probe lands on the objective's penalty plateau (value at or above
    penalty_level) that side is dropped and a one-sided difference through
    the center value is used instead; if both sides are penalized the
    component is reported as zero.
    """
    x = np.asarray(x, dtype=float)
    grad = np.empty(len(x))
    steps = h * np.maximum(1.0, np.abs(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = steps[i]
        fp = objective(x + e)
        fm = objective(x - e)
        ok_p = penalty_level is None or fp < penalty_level
        ok_m = penalty_level is None or fm < penalty_level
        if ok_p and ok_m:
            grad[i] = (fp - fm) / (2.0 * steps[i])
        elif ok_p or ok_m:
            if f0 is None:
                f0 = objective(x)
            grad[i] = (fp - f0) / steps[i] if ok_p else (f0 - fm) / steps[i]
        else:
            grad[i] = 0.0
    return grad


def _fd_gradient_batch(batch_objective, x: np.ndarray, h: float,
                       penalty_level: float | None, f0: float) -> np.ndarray:
    """Same scheme as finite_diff_gradient through one batched evaluation."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    steps = h * np.maximum(1.0, np.abs(x))
    probes = np.repeat(x[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    probes[2 * idx, idx] += steps
    probes[2 * idx + 1, idx] -= steps
    vals = batch_objective(probes)
    fp, fm = vals[0::2], vals[1::2]
    if penalty_level is None:
        return (fp - fm) / (2.0 * steps)
    ok_p = fp < penalty_level
    ok_m = fm < penalty_level
    grad = np.where(ok_p & ok_m, (fp - fm) / (2.0 * steps), 0.0)
    only_p = ok_p & ~ok_m
    only_m = ok_m & ~ok_p
    grad = np.where(only_p, (fp - f0) / steps, grad)
    grad = np.where(only_m, (f0 - fm) / steps, grad)
    return grad


def bfgs_descent(objective, x0: np.ndarray, cfg: OptConfig, *,
                 batch_objective=None,
                 penalty_level: float | None = SIGMA_PENALTY) -> tuple[np.ndarray, float, int]:
    """BFGS with inverse-Hessian updates and a backtracking line search.

    Accepted steps satisfy the sufficient-decrease condition, so the value
    sequence is non-increasing; the returned value never exceeds the start
    value.  Line-search failure ends the descent gracefully.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    f = float(objective(x))
    if batch_objective is not None:
        grad = lambda z, fz: _fd_gradient_batch(batch_objective, z, cfg.grad_step,
                                                penalty_level, fz)
    else:
        grad = lambda z, fz: finite_diff_gradient(objective, z, cfg.grad_step,
                                                  penalty_level, fz)
    g = grad(x, f)
    h_inv = np.eye(n)
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= cfg.grad_tol:
            break
        p = -h_inv @ g
        slope = float(p @ g)
        if slope >= 0.0:  # stale curvature; fall back to steepest descent
            h_inv = np.eye(n)
            p = -g
            slope = -float(g @ g)
        alpha = 1.0
        xnorm = max(1.0, float(np.linalg.norm(x)))
        pnorm = float(np.linalg.norm(p))
        accepted = False
        while alpha * pnorm > cfg.step_tol * xnorm:
            if batch_objective is not None:
                # evaluate the next few backtracking candidates speculatively;
                # acceptance is still the first Armijo-satisfying step
                cand = []
                a = alpha
                while len(cand) < 6 and a * pnorm > cfg.step_tol * xnorm:
                    cand.append(a)
                    a *= cfg.ls_shrink
                fvals = batch_objective(x[None, :] + np.array(cand)[:, None] * p[None, :])
                for a_i, f_i in zip(cand, fvals):
                    if f_i <= f + cfg.ls_suff_decrease * a_i * slope:
                        alpha, f_trial = a_i, float(f_i)
                        accepted = True
                        break
                if accepted:
                    break
                alpha = a
            else:
                f_trial = float(objective(x + alpha * p))
                if f_trial <= f + cfg.ls_suff_decrease * alpha * slope:
                    accepted = True
                    break
                alpha *= cfg.ls_shrink
        if not accepted:
            break
        s = alpha * p
        x = x + s
        f = f_trial
        g_new = grad(x, f)
        y = g_new - g
        g = g_new
        if np.linalg.norm(s) <= cfg.step_tol * xnorm:
            break
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            hy = h_inv @ y
            # (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            h_inv = (h_inv - rho * np.outer(s, hy) - rho * np.outer(hy, s)
                     + rho * rho * float(y @ hy) * np.outer(s, s)
                     + rho * np.outer(s, s))
    return x, f, iters


def _polished_descent(ctx: ObjectiveContext, cfg: OptConfig,
                      x0: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Descend on sigma, then try the smooth surrogate from the endpoint.

    The surrogate (sum of squared singular values) is kept only when the
    true objective actually improves, so it can never degrade a start; at
    symmetric optima it turns the conic landscape into a smooth one and
    buys the last several digits.
    """
    x, f, used = bfgs_descent(ctx.objective, x0, cfg,
                              batch_objective=ctx.objective_batch)
    x2, _, it2 = bfgs_descent(ctx.surrogate, x, cfg,
                              batch_objective=ctx.surrogate_batch)
    used += it2
    f2 = float(ctx.objective(x2))
    if f2 < f:
        x, f = x2, f2
    return x, f, used


def _run_start(ctx: ObjectiveContext, cfg: OptConfig, seed_seq) -> tuple[np.ndarray, float, int]:
    rng = np.random.default_rng(seed_seq)
    x0 = ctx.start_vector(rng)
    scale = ctx.domain.diameter
    x, f, used = _polished_descent(ctx, cfg, x0)
    for _ in range(cfg.perturb_rounds):
        jitter = cfg.perturb_delta * scale * rng.uniform(-1.0, 1.0, size=len(x))
        x2, f2, it2 = _polished_descent(ctx, cfg, x + jitter)
        used += it2
        if f2 < f:
            x, f = x2, f2
    return x, f, used


def minimize(ctx: ObjectiveContext, cfg: OptConfig) -> OptResult:
    """Multistart search over evaluation points (and the free matrix).

    Deterministic for a fixed (seed, config, context); threaded execution
    reproduces the serial result because every start draws from its own
    child seed and aggregation is by start index.  Stops launching starts
    once a value at or below cfg.stop_below is found (the objective is
    nonnegative, so such a start cannot be beaten meaningfully).
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_starts)
    history: list[float] = []
    finals: list[np.ndarray] = []
    total_iters = 0

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(_run_start, ctx, cfg, s) for s in seeds]
            for fut in futures:
                x, f, used = fut.result()
                finals.append(x)
                history.append(f)
                total_iters += used
    else:
        for s in seeds:
            x, f, used = _run_start(ctx, cfg, s)
            finals.append(x)
            history.append(f)
            total_iters += used
            if f <= cfg.stop_below:
                break

    hist = np.array(history)
    best_val = hist.min()
    candidates = np.nonzero(hist == best_val)[0]
    sorted_vecs = [ctx.sort_vector(finals[i]) for i in candidates]
    pick = min(range(len(candidates)),
               key=lambda i: (hist[candidates[i]], tuple(sorted_vecs[i])))
    start_index = int(candidates[pick])
    best_z = sorted_vecs[pick]
    best_sigma = float(ctx.objective(best_z))
    points, y = ctx.unpack(best_z)
    outside = int(np.count_nonzero(~ctx.domain.contains(points)))
    return OptResult(best_x=points, best_Y=y, best_sigma=best_sigma,
                     start_index=start_index, history=hist,
                     iterations=total_iters, outside_domain=outside)
