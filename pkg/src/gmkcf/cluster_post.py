"""k-means discretization of the learned sample representation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KMeansConfig:
    k: int
    restarts: int = 10
    max_iter: int = 100
    seed: int = 0
    normalize_rows: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _sq_dist(points, centroids):
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        + np.sum(centroids**2, axis=1)[None, :]
        - 2 * points @ centroids.T
    )
    return np.maximum(d2, 0.0)


def _plusplus(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dist(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen centre
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dist(points, points[idx:idx + 1])[:, 0])
    return points[chosen].copy()


def _centroids(points, labels, k):
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    return sums / np.maximum(counts, 1)[:, None]


def inertia_of(points, labels, k=None) -> float:
    """Within-cluster sum of squares around the clusters' own means."""
    labels = np.asarray(labels)
    k = int(labels.max()) + 1 if k is None else k
    C = _centroids(points, labels, k)
    return float(np.sum((points - C[labels]) ** 2))


def _lloyd(points, k, max_iter, rng):
    centroids = _plusplus(points, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dist(points, centroids)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # hand the empty cluster the point worst served by its centre
            own = d2[np.arange(len(new)), new]
            movable = counts[new] > 1
            own = np.where(movable, own, -1.0)
            far = int(np.argmax(own))
            counts[new[far]] -= 1
            new[far] = j
            counts[j] = 1
            d2[far, :] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = _centroids(points, labels, k)
    return labels, inertia_of(points, labels, k)


def kmeans_fit(points, config: KMeansConfig):
    """Lloyd's algorithm with k-means++ seeding and several restarts.

    Parameters
    ----------
    points : (n, p) array
        One sample per row.
    config : KMeansConfig

    Returns
    -------
    labels : (n,) int array with values in ``[0, k)``
    inertia : float
        Within-cluster sum of squares of the best restart; ties go to the
        lowest restart index.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < config.k:
        raise ValueError(f"cannot form {config.k} clusters from {n} points")
    if config.normalize_rows:
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points = points / np.maximum(norms, 1e-12)
    best_labels, best_inertia = None, np.inf
    streams = np.random.SeedSequence(config.seed).spawn(config.restarts)
    for ss in streams:
        labels, inertia = _lloyd(points, config.k, config.max_iter, np.random.default_rng(ss))
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels.astype(int), best_inertia
