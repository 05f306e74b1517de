"""Regime labeling: seeded k-means over timestamp columns plus model selection.

Points are timestamp columns (one vector in R^N per timestep). Label ties
always resolve to the lower centroid index, and empty clusters are repaired
by reseeding to the point farthest from its assigned centroid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCluster, InvalidK, RangeTooSmall, SingleCluster


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # (K, N)
    n_clusters: int
    inertia: float

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels for new points; ties pick the lower index."""
        d2 = _sq_dists(np.asarray(points, dtype=np.float64), self.centroids)
        return d2.argmin(axis=1)


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("tkn,tkn->tk", diff, diff)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = points[rng.integers(n)]
            continue
        centers[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(points: np.ndarray, k: int, seed: int, max_iter: int):
    """k-means++ seeding then Lloyd iterations to an assignment fixpoint."""
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(points, k, rng)
    labels = _sq_dists(points, centers).argmin(axis=1)
    prev_inertia = np.inf
    for _ in range(max_iter):
        for _repair in range(3 * k):
            empty = np.setdiff1d(np.arange(k), labels, assume_unique=False)
            if empty.size == 0:
                break
            d2 = _sq_dists(points, centers)
            assigned = d2[np.arange(len(points)), labels]
            for c in empty:
                centers[c] = points[assigned.argmax()]
                labels = _sq_dists(points, centers).argmin(axis=1)
                assigned = _sq_dists(points, centers)[np.arange(len(points)), labels]
        else:
            raise EmptyCluster(f"cluster stayed empty after {3 * k} reseedings")
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
        new_labels = _sq_dists(points, centers).argmin(axis=1)
        inertia = float(_sq_dists(points, centers)[np.arange(len(points)), new_labels].sum())
        if inertia > prev_inertia + 1e-9:
            raise AssertionError("Lloyd iteration increased inertia")
        prev_inertia = inertia
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(_sq_dists(points, centers)[np.arange(len(points)), labels].sum())
    return centers, labels, inertia


def kmeans_fit(
    columns: np.ndarray, n_clusters: int, seed: int, max_iter: int = 100
) -> tuple[ClusterModel, np.ndarray]:
    """Cluster timestamp columns into regimes.

    Parameters
    ----------
    columns : (T, N) array, one point per timestep
    n_clusters : K >= 2, K <= T
    """
    points = np.asarray(columns, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise InvalidK("columns must be a (T, N) matrix")
    if n_clusters < 2 or n_clusters > points.shape[0]:
        raise InvalidK(f"K={n_clusters} outside [2, T={points.shape[0]}]")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    centers, labels, inertia = _lloyd(points, n_clusters, seed, max_iter)
    model = ClusterModel(centroids=centers, n_clusters=n_clusters, inertia=inertia)
    return model, labels


def silhouette(columns: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette score; singleton points and 0/0 cases contribute 0."""
    points = np.asarray(columns, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    n = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijn,ijn->ij", diff, diff))
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        size_own = int(own.sum())
        if size_own <= 1:
            continue
        a = dist[i, own].sum() / (size_own - 1)
        b = min(dist[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0.0 else 0.0
    return float(scores.mean())


def _inertia_k1(points: np.ndarray) -> float:
    center = points.mean(axis=0)
    return float(((points - center) ** 2).sum())


def elbow_select(columns: np.ndarray, k_range, seed: int, n_init: int = 4) -> int:
    """Pick K at the sharpest inertia elbow (largest second difference).

    Each candidate K is fit n_init times from seeded substreams and the best
    inertia kept. The K=1 inertia (total variance around the mean) anchors
    the curvature of the smallest candidate; the largest candidate has no
    right neighbor and cannot be selected. Ties go to the smaller K.
    """
    points = np.asarray(columns, dtype=np.float64)
    ks = sorted(int(k) for k in k_range)
    if len(ks) < 3:
        raise RangeTooSmall(f"need at least 3 candidate K values, got {len(ks)}")
    if ks[0] < 2 or ks[-1] >= points.shape[0]:
        raise InvalidK(f"candidates must lie in [2, T), got {ks[0]}..{ks[-1]}")
    if any(b - a != 1 for a, b in zip(ks, ks[1:])):
        raise ValueError("k_range must be consecutive integers")

    seeds = np.random.SeedSequence(seed).spawn(len(ks) * n_init)
    inertia = {1: _inertia_k1(points)}
    for pos, k in enumerate(ks):
        best = np.inf
        for j in range(n_init):
            _, _, val = _lloyd(points, k, seeds[pos * n_init + j], max_iter=100)
            best = min(best, val)
        inertia[k] = best

    candidates = ks[:-1]
    curvatures = [inertia[k - 1] - 2 * inertia[k] + inertia[k + 1] for k in candidates]
    return candidates[int(np.argmax(curvatures))]
