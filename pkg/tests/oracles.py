"""Slow, direct reference implementations used only as test oracles."""

import itertools

import numpy as np


def naive_sq_dists(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return (diff ** 2).sum(axis=2)


def naive_labels(points, centers):
    d = naive_sq_dists(points, centers)
    return np.array([min(range(centers.shape[0]), key=lambda j: (row[j], j)) for row in d])


def naive_objective(points, centers):
    return naive_sq_dists(points, centers).min(axis=1).sum() / (2 * points.shape[0])


def naive_gradient(points, centers, labels=None, denom=None):
    labels = naive_labels(points, centers) if labels is None else labels
    denom = points.shape[0] if denom is None else denom
    g = np.zeros_like(centers, dtype=float)
    for i, j in enumerate(labels):
        g[j] += centers[j] - points[i]
    return g / denom


def brute_force_two_means(points):
    """Global optimum of the 2-means objective by enumerating all 2-partitions."""
    n = points.shape[0]
    best = np.inf
    for mask in itertools.product((0, 1), repeat=n - 1):
        side = np.array((0,) + mask, dtype=bool)
        if side.all() or not side.any():
            continue
        a, b = points[~side], points[side]
        ss = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
        best = min(best, ss / (2 * n))
    return best


def region_margin(points, centers):
    """Smallest gap between nearest and second-nearest centroid distance."""
    if centers.shape[0] < 2:
        return np.inf
    d = np.sort(np.sqrt(naive_sq_dists(points, centers)), axis=1)
    return float((d[:, 1] - d[:, 0]).min())
