"""Lloyd's EM, mini-batch EM, deterministic backward Euler and stochastic
backward Euler (SBE) for k-means.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import Centroids, ContractError, Dataset, RngStream, SolverConfig, _check_dims, nearest
from .objective import _gradient, cluster_sums, full_gradient, objective, sample_minibatch


class DivergenceError(RuntimeError):
    """A solver produced non-finite centroids."""

    def __init__(self, algorithm: str, outer_iter: int):
        super().__init__(f"{algorithm} diverged at outer iteration {outer_iter}: non-finite centroids")
        self.algorithm = algorithm
        self.outer_iter = outer_iter


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class SolveTrace:
    """Per-outer-iteration record of one solver run.

    ``objectives`` is empty when the run was made with ``trace=False``;
    ``final_objective`` is always filled. ``wall_times`` covers solver work
    only, not the trace objective evaluations.
    """

    algorithm: str
    final_centroids: Centroids
    final_objective: float
    objectives: List[float] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    distance_evaluations: int = 0
    step_sizes: List[float] = field(default_factory=list)
    iterations: int = 0
    params: dict = field(default_factory=dict)


@dataclass
class FixedPointResult:
    y_star: Centroids
    residual: float
    iterations: int
    converged: bool
    residuals: List[float] = field(default_factory=list)


def _finite_or_raise(x, algorithm, k):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(algorithm, k)


# ---------------------------------------------------------------- Lloyd / EM

def _em_update(points, sq_norms, centers):
    labels = nearest(points, sq_norms, centers)
    sums, counts = cluster_sums(points, labels, centers.shape[0])
    new = centers.copy()
    nz = counts > 0
    new[nz] = sums[nz] / counts[nz, None]
    return new


def em_step(data: Dataset, c: Centroids) -> Centroids:
    """One Lloyd iteration: assign, then move each center to its cluster mean.

    Empty clusters keep their previous center.
    """
    _check_dims(data, c)
    return Centroids(_em_update(data.points, data.sq_norms, c.centers))


def em_run(data: Dataset, init: Centroids, max_iter: int = 50, tol: float = 0.0,
           trace: bool = True) -> SolveTrace:
    """Lloyd's algorithm until the centers move by at most ``tol`` (Frobenius)."""
    _check_dims(data, init)
    if max_iter < 1:
        raise ContractError("max_iter must be >= 1")
    x = init.centers.copy()
    out = SolveTrace("em", init, np.nan, params={"max_iter": max_iter, "tol": tol})
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        new = _em_update(data.points, data.sq_norms, x)
        out.wall_times.append(time.perf_counter() - t0)
        out.distance_evaluations += data.n * init.k
        shift = np.linalg.norm(new - x)
        x = new
        out.iterations = it
        if trace:
            out.objectives.append(objective(data, Centroids(x)))
        if shift <= tol:
            break
    out.final_centroids = Centroids(x)
    out.final_objective = out.objectives[-1] if trace else objective(data, out.final_centroids)
    return out


# ---------------------------------------------------------- mini-batch EM

def mbem_run(data: Dataset, init: Centroids, cfg: SolverConfig, rng: Optional[RngStream] = None,
             trace: bool = True) -> SolveTrace:
    """Mini-batch k-means with per-center learning rate 1/count.

    Each center is the running mean of every batch point ever assigned to
    it, so a batch's contribution collapses to
    ``(v_j x_j + S_j) / (v_j + n_j)`` with ``v_j`` the cumulative count.
    """
    _check_dims(data, init)
    cfg.check_data(data)
    rng = rng if rng is not None else RngStream(cfg.seed)
    m = cfg.batch_size
    x = init.centers.copy()
    seen = np.zeros(init.k)
    out = SolveTrace("mbem", init, np.nan, params={"batch_size": m, "omaxit": cfg.omaxit})
    for k in range(1, cfg.omaxit + 1):
        t0 = time.perf_counter()
        idx = sample_minibatch(data.n, m, rng).indices
        pts = data.points[idx]
        labels = nearest(pts, data.sq_norms[idx], x)
        sums, counts = cluster_sums(pts, labels, init.k)
        nz = counts > 0
        seen_new = seen[nz] + counts[nz]
        x[nz] = (seen[nz, None] * x[nz] + sums[nz]) / seen_new[:, None]
        seen[nz] = seen_new
        out.wall_times.append(time.perf_counter() - t0)
        out.distance_evaluations += m * init.k
        out.iterations = k
        _finite_or_raise(x, "mbem", k)
        if trace:
            out.objectives.append(objective(data, Centroids(x)))
    out.final_centroids = Centroids(x)
    out.final_objective = out.objectives[-1] if trace else objective(data, out.final_centroids)
    return out


# ------------------------------------------------- deterministic backward Euler

def fixed_point_solve(data: Dataset, x_k: Centroids, gamma: float, max_inner: int = 10_000,
                      tol: float = 1e-10,
                      callback: Optional[Callable[[np.ndarray], None]] = None) -> FixedPointResult:
    """Solve ``y = x_k - gamma * grad(y)`` by fixed-point iteration from ``y = x_k``.

    The residual ``|y - (x_k - gamma * grad(y))|`` is evaluated at every
    iterate; the loop stops at the first iterate whose residual is within
    ``tol``, so a converged result carries its own certificate. ``callback``
    receives each iterate, starting with ``x_k``.
    """
    _check_dims(data, x_k)
    if not gamma > 0:
        raise ContractError("gamma must be > 0")
    if max_inner < 1:
        raise ContractError("max_inner must be >= 1")
    anchor = x_k.centers
    y = anchor.copy()
    residuals = []
    converged = False
    it = 0
    while it < max_inner:
        if callback is not None:
            callback(y)
        it += 1
        nxt = anchor - gamma * full_gradient(data, Centroids(y))
        r = float(np.linalg.norm(y - nxt))
        residuals.append(r)
        if r <= tol:
            converged = True
            break
        y = nxt
        if not np.all(np.isfinite(y)):
            break
    return FixedPointResult(Centroids(y) if np.all(np.isfinite(y)) else x_k, residuals[-1],
                            it, converged, residuals)


def prox_value(data: Dataset, y: np.ndarray, x_k: np.ndarray, gamma: float) -> float:
    """``phi(y) + |y - x_k|^2 / (2 gamma)``, the function a proximal step minimises."""
    return objective(data, Centroids(y)) + float(np.sum((y - x_k) ** 2)) / (2 * gamma)


def be_prox_step(data: Dataset, x_k: Centroids, gamma: float, max_inner: int = 10_000,
                 tol: float = 1e-10) -> Centroids:
    """One implicit gradient step (proximal step) on the k-means objective.

    If the fixed-point loop does not converge a ``ConvergenceWarning`` is
    issued and the visited iterate with the lowest proximal value returned.
    """
    best = [np.inf, None]

    def keep_best(y):
        h = prox_value(data, y, x_k.centers, gamma)
        if h < best[0]:
            best[0], best[1] = h, y.copy()

    res = fixed_point_solve(data, x_k, gamma, max_inner, tol)
    if res.converged:
        return res.y_star
    # replay to find the best iterate; only on the (rare) failure path
    fixed_point_solve(data, x_k, gamma, max_inner, tol, callback=keep_best)
    warnings.warn(f"backward Euler step did not converge in {max_inner} iterations "
                  f"(residual {res.residual:.3e})", ConvergenceWarning, stacklevel=2)
    return Centroids(best[1])


def be_run(data: Dataset, init: Centroids, gamma: float, omaxit: int, max_inner: int = 10_000,
           tol: float = 1e-10, trace: bool = True) -> SolveTrace:
    """Proximal point iterations with a constant step ``gamma``."""
    _check_dims(data, init)
    x = init
    out = SolveTrace("be", init, np.nan, params={"gamma": gamma, "omaxit": omaxit})
    for k in range(1, omaxit + 1):
        t0 = time.perf_counter()
        res = fixed_point_solve(data, x, gamma, max_inner, tol)
        out.wall_times.append(time.perf_counter() - t0)
        out.distance_evaluations += res.iterations * data.n * init.k
        out.step_sizes.append(gamma)
        out.iterations = k
        if not res.converged:
            warnings.warn(f"backward Euler step {k} did not converge (residual {res.residual:.3e})",
                          ConvergenceWarning, stacklevel=2)
        moved = np.linalg.norm(res.y_star.centers - x.centers)
        x = res.y_star
        if trace:
            out.objectives.append(objective(data, x))
        if moved == 0.0:
            break
    out.final_centroids = x
    out.final_objective = out.objectives[-1] if trace else objective(data, x)
    return out


# ------------------------------------------------- stochastic backward Euler

def sbe_step_size(cfg: SolverConfig, k: int) -> float:
    """Step used in outer iteration ``k`` (1-based): ``gamma0 * beta**(k-1)``."""
    return cfg.gamma0 * cfg.beta ** (k - 1)


def sbe_run(data: Dataset, init: Centroids, cfg: SolverConfig, rng: Optional[RngStream] = None,
            trace: bool = True) -> SolveTrace:
    """Stochastic backward Euler.

    Every outer iteration anchors at the previous iterate and runs ``imaxit``
    fixed-point steps ``y <- anchor - gamma * g_l(y)``, each with a freshly
    drawn mini-batch gradient ``g_l``. The next iterate is the exponential
    average ``x <- alpha x + (1 - alpha) y`` of that trajectory, starting
    from the anchor. The step decays geometrically by ``beta`` per outer
    iteration.

    Raises
    ------
    DivergenceError
        If the averaged iterate becomes non-finite.
    """
    _check_dims(data, init)
    cfg.check_data(data)
    rng = rng if rng is not None else RngStream(cfg.seed)
    m, a = cfg.batch_size, cfg.alpha
    pts_all, norms_all = data.points, data.sq_norms
    x = init.centers.copy()
    out = SolveTrace("sbe", init, np.nan, params={
        "gamma0": cfg.gamma0, "alpha": a, "beta": cfg.beta, "batch_size": m,
        "imaxit": cfg.imaxit, "omaxit": cfg.omaxit})
    for k in range(1, cfg.omaxit + 1):
        t0 = time.perf_counter()
        gamma = sbe_step_size(cfg, k)
        anchor = x
        y = anchor
        avg = anchor.copy()
        for _ in range(cfg.imaxit):
            idx = sample_minibatch(data.n, m, rng).indices
            pts = pts_all[idx]
            labels = nearest(pts, norms_all[idx], y)
            y = anchor - gamma * _gradient(pts, labels, y, m)
            avg = a * avg + (1 - a) * y
        x = avg
        out.wall_times.append(time.perf_counter() - t0)
        out.distance_evaluations += cfg.imaxit * m * init.k
        out.step_sizes.append(gamma)
        out.iterations = k
        _finite_or_raise(x, "sbe", k)
        if trace:
            out.objectives.append(objective(data, Centroids(x)))
    out.final_centroids = Centroids(x)
    out.final_objective = out.objectives[-1] if trace else objective(data, out.final_centroids)
    return out
