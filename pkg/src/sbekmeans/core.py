"""Domain types, seeded random streams, and centroid initialization."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Rows per assignment chunk. Chunks write disjoint slots, so output does not
# depend on how many threads process them.
CHUNK_ROWS = 4096

_threads: Optional[int] = None


class ContractError(ValueError):
    """Raised when an operation is called outside its preconditions."""


def set_threads(n: Optional[int]) -> None:
    """Cap the worker pool used by the assignment kernel (None = env/default)."""
    global _threads
    if n is not None and n < 1:
        raise ContractError(f"thread count must be >= 1, got {n}")
    _threads = n


def get_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get("SBE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ContractError(f"SBE_THREADS must be an integer, got {env!r}") from None
    return 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """N points in d dimensions, one point per row.

    ``labels`` is an optional side channel (ground truth from a file or a
    generator); solvers never read it.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    source: str = "synthetic"
    _sq_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, order="C")
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ContractError(f"points must be a non-empty N x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractError("points contain NaN or Inf")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise ContractError("labels must have one entry per point")
            object.__setattr__(self, "labels", _frozen(lab.copy()))
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "_sq_norms", _frozen(np.einsum("ij,ij->i", pts, pts)))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def sq_norms(self) -> np.ndarray:
        return self._sq_norms


@dataclass(frozen=True, eq=False)
class Centroids:
    """K centers in d dimensions, stored as a K x d matrix."""

    centers: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64, order="C")
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ContractError(f"centers must be a non-empty K x d matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ContractError("centers contain NaN or Inf")
        object.__setattr__(self, "centers", _frozen(c))

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True, eq=False)
class Assignment:
    labels: np.ndarray
    counts: np.ndarray


class RngStream:
    """Independent random stream keyed by ``(seed, stream_id)``.

    Streams with distinct ids are statistically independent and each one is
    fully determined by its key, so trials can run in any order or in
    parallel and still reproduce a serial run.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ContractError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class SolverConfig:
    """Tunables shared by the stochastic solvers.

    ``gamma0`` is the initial backward-Euler step, ``alpha`` the trajectory
    averaging weight, ``beta`` the per-outer-iteration step decay,
    ``batch_size`` the mini-batch size M, and ``imaxit``/``omaxit`` the
    inner/outer iteration counts.
    """

    k: int
    gamma0: Optional[float] = None
    alpha: float = 0.75
    beta: float = 1 / 1.01
    batch_size: int = 500
    imaxit: int = 5
    omaxit: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.gamma0 is None:
            object.__setattr__(self, "gamma0", float(self.k))
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if not self.gamma0 > 0:
            raise ContractError("gamma0 must be > 0")
        if not 0 <= self.alpha < 1:
            raise ContractError("alpha must lie in [0, 1)")
        if not 0 < self.beta <= 1:
            raise ContractError("beta must lie in (0, 1]")
        if self.batch_size < 1 or self.imaxit < 1 or self.omaxit < 1:
            raise ContractError("batch_size, imaxit and omaxit must be >= 1")

    def check_data(self, data: Dataset) -> None:
        if self.batch_size > data.n:
            raise ContractError(f"batch_size {self.batch_size} exceeds dataset size {data.n}")
        if self.k > data.n:
            raise ContractError(f"k={self.k} exceeds dataset size {data.n}")


def _check_dims(data: Dataset, c: Centroids) -> None:
    if data.dim != c.dim:
        raise ContractError(f"dimension mismatch: data has d={data.dim}, centroids d={c.dim}")


def nearest(points: np.ndarray, sq_norms: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center for each row of ``points``.

    Uses ``|x|^2 - 2<x,p> + |p|^2``; ``np.argmin`` picks the first minimum so
    ties go to the smallest center index.
    """
    c_norms = np.einsum("ij,ij->i", centers, centers)
    n = points.shape[0]

    def block(lo: int, hi: int) -> np.ndarray:
        d2 = points[lo:hi] @ centers.T
        d2 *= -2.0
        d2 += c_norms
        d2 += sq_norms[lo:hi, None]
        return np.argmin(d2, axis=1)

    threads = get_threads()
    if threads == 1 or n <= CHUNK_ROWS:
        out = np.empty(n, dtype=np.intp)
        for lo in range(0, n, CHUNK_ROWS):
            out[lo:lo + CHUNK_ROWS] = block(lo, min(lo + CHUNK_ROWS, n))
        return out

    out = np.empty(n, dtype=np.intp)
    bounds = [(lo, min(lo + CHUNK_ROWS, n)) for lo in range(0, n, CHUNK_ROWS)]

    def fill(b):
        out[b[0]:b[1]] = block(*b)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fill, bounds))
    return out


def assign(data: Dataset, c: Centroids) -> Assignment:
    """Nearest-centroid assignment of every point, ties to the smallest index."""
    _check_dims(data, c)
    labels = nearest(data.points, data.sq_norms, c.centers)
    counts = np.bincount(labels, minlength=c.k)
    return Assignment(labels=_frozen(labels), counts=_frozen(counts))


def init_random(data: Dataset, k: int, rng: RngStream) -> Centroids:
    """Pick ``k`` distinct data rows uniformly at random."""
    if k < 1 or k > data.n:
        raise ContractError(f"need 1 <= k <= N, got k={k}, N={data.n}")
    idx = rng.generator.choice(data.n, size=k, replace=False)
    return Centroids(data.points[idx])


def init_explicit(values) -> Centroids:
    return Centroids(np.asarray(values, dtype=np.float64))
