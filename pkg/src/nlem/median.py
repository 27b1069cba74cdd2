"""Weighted Euclidean median: objectives, proximal map, and solvers.

The problem solved throughout is::

    minimize    sum_k w_k * ||x - a_k||_2    subject to  l <= x_i <= u

with the box optionally absent. Two solvers are provided: a variable-splitting
ADMM whose subproblems are closed-form proximal steps, and an IRLS baseline
that works on the smoothed objective ``sum_k w_k * sqrt(||x - a_k||^2 + eps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NumericalError, UsageError

DEFAULT_MU = 1e-3
DEFAULT_EPSILON = 1e-6
COINCIDENCE_TOL = 1e-12

__all__ = [
    "PointSet", "BoxConstraint", "AdmmConfig", "IrlsConfig", "TraceRecord",
    "SolverResult", "em_cost", "surrogate_cost", "prox_weighted_norm",
    "project_box", "admm_euclidean_median", "irls_euclidean_median",
    "optimality_residual", "brute_force_median_2d",
]


def _as_vector(x, d: Optional[int] = None, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be a vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise UsageError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    return arr


@dataclass(frozen=True)
class PointSet:
    """``n`` points in ``d`` dimensions with nonnegative weights.

    ``points`` may be given as an ``(n, d)`` array or, for ``d = 1``, as a
    flat sequence. ``weights`` defaults to all ones.
    """

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise UsageError(f"points must be an (n, d) array with n, d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise UsageError("points must be finite")
        if self.weights is None:
            wts = np.ones(pts.shape[0])
        else:
            wts = np.array(self.weights, dtype=np.float64).reshape(-1)
        if wts.shape[0] != pts.shape[0]:
            raise UsageError(f"{wts.shape[0]} weights given for {pts.shape[0]} points")
        if not np.all(np.isfinite(wts)) or np.any(wts < 0):
            raise UsageError("weights must be finite and nonnegative")
        if not np.any(wts > 0):
            raise UsageError("at least one weight must be positive")
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def weighted_mean(self) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return self.weights @ self.points / self.weights.sum()


@dataclass(frozen=True)
class BoxConstraint:
    """Coordinate-wise interval ``[lower, upper]``; infinite bounds mean R^d."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise UsageError(f"invalid box [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unconstrained(cls) -> "BoxConstraint":
        return cls()

    @property
    def is_unconstrained(self) -> bool:
        return self.lower == -math.inf and self.upper == math.inf

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class AdmmConfig:
    mu: float = DEFAULT_MU
    max_iter: int = 100
    tol_primal: float = 0.0
    z_init: Optional[Sequence[float]] = None
    record_trace: bool = True

    def __post_init__(self):
        if not self.mu > 0 or not math.isfinite(self.mu):
            raise UsageError(f"mu must be positive, got {self.mu}")
        if int(self.max_iter) < 1:
            raise UsageError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol_primal >= 0:
            raise UsageError(f"tol_primal must be nonnegative, got {self.tol_primal}")


@dataclass(frozen=True)
class IrlsConfig:
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = 100
    tol: float = 0.0
    x_init: Optional[Sequence[float]] = None
    record_trace: bool = True

    def __post_init__(self):
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            raise UsageError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_iter) < 1:
            raise UsageError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol >= 0:
            raise UsageError(f"tol must be nonnegative, got {self.tol}")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    primal_residual: float = math.nan


@dataclass(frozen=True)
class SolverResult:
    """Solver output.

    ``objective`` is always the unsmoothed weighted distance sum at
    ``minimizer``. Trace objectives are solver-specific: the unsmoothed
    objective for ADMM, the smoothed one for IRLS.
    """

    minimizer: np.ndarray
    objective: float
    iterations_run: int
    trace: tuple = field(default_factory=tuple)


def em_cost(ps: PointSet, x) -> float:
    """Weighted sum of Euclidean distances from ``x`` to the points."""
    x = _as_vector(x, ps.d)
    return float(_kernels.em_cost(ps.points, ps.weights, x))


def surrogate_cost(ps: PointSet, x, epsilon: float) -> float:
    """Smoothed objective ``sum_k w_k * sqrt(||x - a_k||^2 + epsilon)``."""
    if not epsilon > 0:
        raise UsageError(f"epsilon must be positive, got {epsilon}")
    x = _as_vector(x, ps.d)
    return float(_kernels.surrogate_cost(ps.points, ps.weights, x, float(epsilon)))


def prox_weighted_norm(v, u, lam: float) -> np.ndarray:
    """Proximal map of ``x -> lam * ||x - u||_2`` evaluated at ``v``.

    Moves ``v`` towards ``u`` by ``min(lam, ||v - u||)``; the result is
    exactly ``u`` once ``lam >= ||v - u||`` and exactly ``v`` for ``lam = 0``.
    """
    v = _as_vector(v, name="v")
    u = _as_vector(u, v.shape[0], name="u")
    if not lam >= 0:
        raise UsageError(f"lambda must be nonnegative, got {lam}")
    if lam == 0:
        return v.copy()
    diff = v - u
    dist = float(np.linalg.norm(diff))
    if dist <= lam:
        return u.copy()
    return v - (lam / dist) * diff


def project_box(x, box: BoxConstraint) -> np.ndarray:
    x = _as_vector(x)
    if box.is_unconstrained:
        return x.copy()
    return np.minimum(np.maximum(x, box.lower), box.upper)


def _trace(objectives, residuals=None) -> tuple:
    if residuals is None:
        return tuple(TraceRecord(t + 1, float(o)) for t, o in enumerate(objectives))
    return tuple(TraceRecord(t + 1, float(o), float(r))
                 for t, (o, r) in enumerate(zip(objectives, residuals)))


def admm_euclidean_median(ps: PointSet, box: BoxConstraint = None,
                          cfg: AdmmConfig = None) -> SolverResult:
    """Box-constrained weighted Euclidean median by ADMM.

    Each iteration applies the closed-form proximal step to every local
    copy, averages and projects to obtain the consensus point, then takes a
    dual-ascent step on the multipliers (which start at zero). ``z_init``
    defaults to the weighted mean of the points.

    Raises
    ------
    NumericalError
        If an iterate becomes non-finite.
    """
    box = box or BoxConstraint.unconstrained()
    cfg = cfg or AdmmConfig()
    z0 = ps.weighted_mean() if cfg.z_init is None else _as_vector(cfg.z_init, ps.d, "z_init")
    max_iter = int(cfg.max_iter)
    obj = np.empty(max_iter if cfg.record_trace else 0)
    res = np.empty(max_iter if cfg.record_trace else 0)
    z, iters = _kernels.admm_solve(ps.points, ps.weights, z0, float(cfg.mu),
                                   box.lower, box.upper, max_iter, float(cfg.tol_primal),
                                   obj, res, np.empty(0), 0)
    if iters < 0:
        raise NumericalError("ADMM produced a non-finite iterate", iteration=-iters)
    trace = _trace(obj[:iters], res[:iters]) if cfg.record_trace else ()
    return SolverResult(z, em_cost(ps, z), iters, trace)


def irls_euclidean_median(ps: PointSet, cfg: IrlsConfig = None,
                          box: BoxConstraint = None) -> SolverResult:
    """Weighted Euclidean median by iteratively reweighted least squares.

    Iterates ``x <- sum_k b_k a_k / sum_k b_k`` with
    ``b_k = w_k / sqrt(||x - a_k||^2 + epsilon)``, which never increases the
    smoothed objective. The iteration itself is unconstrained; a ``box``
    only clips the final iterate. ``x_init`` defaults to the weighted mean.
    """
    cfg = cfg or IrlsConfig()
    x0 = ps.weighted_mean() if cfg.x_init is None else _as_vector(cfg.x_init, ps.d, "x_init")
    max_iter = int(cfg.max_iter)
    obj = np.empty(max_iter if cfg.record_trace else 0)
    x, iters = _kernels.irls_solve(ps.points, ps.weights, x0, float(cfg.epsilon),
                                   max_iter, float(cfg.tol), obj, np.empty(0), 0)
    if iters < 0:
        raise NumericalError("IRLS produced a non-finite iterate", iteration=-iters)
    if box is not None:
        x = project_box(x, box)
    trace = _trace(obj[:iters]) if cfg.record_trace else ()
    return SolverResult(x, em_cost(ps, x), iters, trace)


def optimality_residual(ps: PointSet, box: BoxConstraint, z,
                        coincidence_tol: float = COINCIDENCE_TOL) -> float:
    """First-order optimality certificate; zero means ``z`` is a minimizer.

    Sums the unit vectors ``w_k (z - a_k) / ||z - a_k||`` over points not
    coinciding with ``z``, discards the components that the active box
    faces can absorb, and subtracts the subgradient slack contributed by
    coincident points.
    """
    box = box or BoxConstraint.unconstrained()
    z = _as_vector(z, ps.d, "z")
    diff = z - ps.points
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    near = dist <= coincidence_tol
    slack = float(ps.weights[near].sum())
    far = ~near
    g = (ps.weights[far, None] * diff[far] / dist[far, None]).sum(axis=0)
    # Gradient pushing into an active face is cancelled by the normal cone.
    g[(z <= box.lower) & (g > 0)] = 0.0
    g[(z >= box.upper) & (g < 0)] = 0.0
    return max(0.0, float(np.linalg.norm(g)) - slack)


def brute_force_median_2d(ps: PointSet, box: BoxConstraint = None,
                          resolution: int = 201, refinements: int = 2):
    """Grid-search oracle for planar instances.

    Scans a ``resolution x resolution`` grid over the points' bounding box
    (intersected with ``box``), then re-grids ``refinements`` times around
    the best cell. Returns ``(point, cost)``.
    """
    if ps.d != 2:
        raise UsageError(f"brute-force oracle needs d = 2, got d = {ps.d}")
    if resolution < 2:
        raise UsageError("resolution must be >= 2")
    box = box or BoxConstraint.unconstrained()
    lo = np.maximum(ps.points.min(axis=0), box.lower)
    hi = np.minimum(ps.points.max(axis=0), box.upper)
    # Points entirely outside the box: the region collapses onto a face.
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    lo = np.clip(lo, box.lower, box.upper)
    hi = np.clip(hi, box.lower, box.upper)

    best, best_cost = None, math.inf
    for _ in range(refinements + 1):
        xs = np.linspace(lo[0], hi[0], resolution)
        ys = np.linspace(lo[1], hi[1], resolution)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        cost = np.zeros_like(gx)
        for a, w in zip(ps.points, ps.weights):
            cost += w * np.hypot(gx - a[0], gy - a[1])
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        if cost[i, j] < best_cost:
            best_cost = float(cost[i, j])
            best = np.array([gx[i, j], gy[i, j]])
        step = (hi - lo) / (resolution - 1)
        lo = np.maximum(best - step, np.clip(lo, box.lower, box.upper))
        hi = np.minimum(best + step, np.clip(hi, box.lower, box.upper))
    # Data points are frequent minimizers and may fall between grid nodes.
    for a in ps.points:
        if box.contains(a):
            c = em_cost(ps, a)
            if c < best_cost:
                best, best_cost = a.copy(), c
    return best, best_cost
