"""The k-means objective and its piecewise derivatives.

With points ``p_i`` and centers ``x_j`` the objective is

    phi(x) = 1/(2N) * sum_i min_j |x_j - p_i|^2

On a fixed nearest-centroid partition ``C_1..C_K`` it is quadratic, with
gradient block ``(1/N) sum_{i in C_j} (x_j - p_i)`` and diagonal Hessian
``|C_j| / N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Centroids, ContractError, Dataset, RngStream, _check_dims, assign, nearest


@dataclass(frozen=True, eq=False)
class MiniBatch:
    indices: np.ndarray


def cluster_sums(points: np.ndarray, labels: np.ndarray, k: int):
    """Per-cluster coordinate sums and sizes for a labelling of ``points``."""
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, points.shape[1]))
    for j in np.flatnonzero(counts):
        sums[j] = points[labels == j].sum(axis=0)
    return sums, counts


def _sq_residuals(points, labels, centers):
    r = points - centers[labels]
    return np.einsum("ij,ij->i", r, r)


def objective(data: Dataset, c: Centroids) -> float:
    """Half the mean squared distance from each point to its nearest center.

    The nearest center is found with the expanded distance formula, but the
    reported distance is recomputed directly from ``p_i - x_j`` so the value
    does not suffer the cancellation of the expanded form.
    """
    _check_dims(data, c)
    labels = nearest(data.points, data.sq_norms, c.centers)
    return float(_sq_residuals(data.points, labels, c.centers).sum() / (2 * data.n))


def _gradient(points, labels, centers, denom):
    sums, counts = cluster_sums(points, labels, centers.shape[0])
    return (counts[:, None] * centers - sums) / denom


def full_gradient(data: Dataset, c: Centroids) -> np.ndarray:
    """K x d gradient; row j is zero when cluster j is empty."""
    a = assign(data, c)
    return _gradient(data.points, a.labels, c.centers, data.n)


def sample_minibatch(n: int, m: int, rng: RngStream) -> MiniBatch:
    """``m`` distinct indices from ``range(n)``, drawn without replacement."""
    if not 1 <= m <= n:
        raise ContractError(f"need 1 <= m <= n, got m={m}, n={n}")
    return MiniBatch(np.sort(rng.generator.choice(n, size=m, replace=False)))


def minibatch_gradient(data: Dataset, c: Centroids, batch: MiniBatch) -> np.ndarray:
    """Gradient estimate from the points in ``batch``, normalised by its size M."""
    _check_dims(data, c)
    idx = np.asarray(batch.indices)
    if idx.size < 1 or idx.min() < 0 or idx.max() >= data.n:
        raise ContractError("mini-batch indices out of range")
    pts = data.points[idx]
    labels = nearest(pts, data.sq_norms[idx], c.centers)
    return _gradient(pts, labels, c.centers, idx.size)


def hessian_diagonal(data: Dataset, c: Centroids) -> np.ndarray:
    """Cluster fractions ``|C_j|/N``: the per-block curvature of the objective."""
    return assign(data, c).counts / data.n


def lipschitz_estimate(data: Dataset, c: Centroids) -> float:
    """Lipschitz constant of the gradient on the current assignment region."""
    return float(hessian_diagonal(data, c).max())
