"""Repeated random-restart experiments, summary tables, histograms, and cost
accounting.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import ContractError, Dataset, RngStream, SolverConfig, init_random
from .solvers import DivergenceError, SolveTrace, be_run, em_run, mbem_run, sbe_run

ALGORITHMS = ("em", "mbem", "sbe", "be")


@dataclass
class TrialSummary:
    algorithm: str
    k: int
    batch_size: int
    omaxit: int
    imaxit: int
    objectives: List[float]
    min: float
    max: float
    mean: float
    variance: float
    diverged: List[int] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    distance_evaluations: List[int] = field(default_factory=list)
    variance_convention: str = "population"

    def to_dict(self, timing: bool = False) -> dict:
        """JSON-ready dict. Wall times are left out unless ``timing`` is set,
        since they are the only non-reproducible field."""
        d = asdict(self)
        d["objectives"] = [None if math.isnan(v) else v for v in self.objectives]
        if not timing:
            d.pop("wall_times")
        return d


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_csv(self) -> str:
        rows = ["bin_left,bin_right,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            rows.append(f"{float(lo)!r},{float(hi)!r},{int(c)}")
        return "\n".join(rows) + "\n"


def summarize(objectives: Sequence[float]):
    """(min, max, mean, population variance)."""
    v = np.asarray(objectives, dtype=np.float64)
    if v.size == 0:
        raise ContractError("cannot summarize an empty sequence")
    mean = float(v.mean())
    return float(v.min()), float(v.max()), mean, float(np.mean((v - mean) ** 2))


def make_histogram(objectives: Sequence[float], bins: int = 30) -> Histogram:
    """Equal-width bins over [min, max]; the last bin is closed on the right.

    A constant input gets a single bin of width 1 centred on the value.
    """
    v = np.asarray(objectives, dtype=np.float64)
    if v.size == 0:
        raise ContractError("cannot histogram an empty sequence")
    if bins < 1:
        raise ContractError("bins must be >= 1")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return Histogram(np.array([lo - 0.5, hi + 0.5]), np.array([v.size]))
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return Histogram(edges, counts)


def run_solver(algorithm: str, data: Dataset, cfg: SolverConfig, rng: RngStream,
               em_max_iter: int = 50, be_gamma: Optional[float] = None, init=None,
               trace: bool = True) -> SolveTrace:
    """Run one solver from ``init`` (random rows drawn from ``rng`` if None)."""
    if init is None:
        init = init_random(data, cfg.k, rng)
    if algorithm == "em":
        return em_run(data, init, max_iter=em_max_iter, trace=trace)
    if algorithm == "mbem":
        return mbem_run(data, init, cfg, rng, trace=trace)
    if algorithm == "sbe":
        return sbe_run(data, init, cfg, rng, trace=trace)
    if algorithm == "be":
        return be_run(data, init, be_gamma if be_gamma is not None else 0.9, cfg.omaxit, trace=trace)
    raise ContractError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")


def run_trials(data: Dataset, algorithm: str, cfg: SolverConfig, trials: int, base_seed: int,
               workers: int = 1, em_max_iter: int = 50,
               be_gamma: Optional[float] = None) -> TrialSummary:
    """Run ``trials`` independent random-init solves.

    Trial ``t`` draws both its initial centroids and its mini-batches from
    ``RngStream(base_seed, t)``, so the result is the same for any worker
    count. Divergent trials are listed in ``diverged`` and left out of the
    statistics; if every trial diverges the last error is re-raised.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    if algorithm not in ALGORITHMS:
        raise ContractError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    finals = [math.nan] * trials
    walls = [0.0] * trials
    dists = [0] * trials
    errors: List[Optional[DivergenceError]] = [None] * trials

    def one(t):
        t0 = time.perf_counter()
        try:
            tr = run_solver(algorithm, data, cfg, RngStream(base_seed, t), em_max_iter, be_gamma,
                            trace=False)
            finals[t] = tr.final_objective
            dists[t] = tr.distance_evaluations
        except DivergenceError as exc:
            errors[t] = exc
        walls[t] = time.perf_counter() - t0

    if workers <= 1:
        for t in range(trials):
            one(t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(trials)))

    diverged = [t for t in range(trials) if errors[t] is not None]
    if len(diverged) == trials:
        raise errors[-1]
    ok = [finals[t] for t in range(trials) if errors[t] is None]
    lo, hi, mean, var = summarize(ok)
    return TrialSummary(algorithm, cfg.k, data.n if algorithm in ("em", "be") else cfg.batch_size,
                        em_max_iter if algorithm == "em" else cfg.omaxit,
                        cfg.imaxit if algorithm == "sbe" else 1,
                        finals, lo, hi, mean, var, diverged, walls, dists)


@dataclass
class CostRow:
    algorithm: str
    runs: int
    mean_time_per_iter: float
    distance_evals_per_iter: float
    total_distance_evals: int


def compare_cost(traces: Sequence[SolveTrace]) -> List[CostRow]:
    """Per-algorithm mean wall time and distance evaluations per outer iteration.

    Distance evaluations count point-to-centroid distances in the solver
    kernels: N*K per EM iteration, M*K per mini-batch EM iteration and
    imaxit*M*K per SBE outer iteration.
    """
    if not traces:
        raise ContractError("need at least one trace")
    rows = []
    for alg in dict.fromkeys(t.algorithm for t in traces):
        group = [t for t in traces if t.algorithm == alg]
        iters = sum(t.iterations for t in group)
        total_time = sum(sum(t.wall_times) for t in group)
        total_d = sum(t.distance_evaluations for t in group)
        rows.append(CostRow(alg, len(group), total_time / iters, total_d / iters, total_d))
    return rows
