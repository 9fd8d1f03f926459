"""User clustering with k-means++ seeding and Lloyd iterations.

Users are clustered on their raw rating rows (zeros for unrated items), the
same zero imputation used for the item graphs. Works on dense arrays and on
scipy CSR matrices without densifying the data; distances use the expansion
||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import DataError

DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class ClusterAssignment:
    """User -> cluster map with the centroids that produced it.

    Every cluster id in [0, k) appears at least once (empty clusters are
    repaired during fitting).
    """

    num_clusters: int
    assignment: np.ndarray
    centroids: np.ndarray
    seed: int
    iterations_run: int

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster_id)

    def export_csv(self, path: str | Path, user_ids: Sequence[str]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id", "cluster_id"])
            for u, c in enumerate(self.assignment):
                writer.writerow([user_ids[u], int(c)])


def _row_sq_norms(rows) -> np.ndarray:
    if sparse.issparse(rows):
        return np.asarray(rows.multiply(rows).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", rows, rows)


def _sq_dists(rows, row_sq: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """m x k squared Euclidean distances, clipped at 0 against rounding."""
    cross = rows @ centroids.T
    if sparse.issparse(cross):
        cross = np.asarray(cross.todense())
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    d2 = row_sq[:, None] - 2.0 * cross + c_sq[None, :]
    np.clip(d2, 0.0, None, out=d2)
    return d2


def _as_dense_row(rows, index: int) -> np.ndarray:
    if sparse.issparse(rows):
        return np.asarray(rows[index].todense(), dtype=np.float64).ravel()
    return np.asarray(rows[index], dtype=np.float64).copy()


def kmeanspp_seed(rows, k: int, seed: int | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Standard k-means++ seeding.

    First centroid uniform at random; each further centroid is drawn with
    probability proportional to the squared distance to its nearest already
    chosen centroid. Returns a dense k x n array.
    """
    m = rows.shape[0]
    if k < 1:
        raise DataError("k must be >= 1")
    if k > m:
        raise DataError(f"k={k} exceeds number of rows m={m}")
    if rng is None:
        rng = np.random.default_rng(seed)
    row_sq = _row_sq_norms(rows)
    chosen = [int(rng.integers(m))]
    best_d2 = _sq_dists(rows, row_sq, _as_dense_row(rows, chosen[0])[None, :]).ravel()
    for _ in range(1, k):
        total = best_d2.sum()
        if total > 0:
            probs = best_d2 / total
            idx = int(rng.choice(m, p=probs))
        else:
            # all remaining points coincide with a centroid: pick any unchosen
            unchosen = np.setdiff1d(np.arange(m), np.asarray(chosen))
            idx = int(rng.choice(unchosen))
        chosen.append(idx)
        d2_new = _sq_dists(rows, row_sq, _as_dense_row(rows, idx)[None, :]).ravel()
        np.minimum(best_d2, d2_new, out=best_d2)
    return np.vstack([_as_dense_row(rows, i) for i in chosen])


def _repair_empty(labels: np.ndarray, point_d2: np.ndarray, k: int) -> None:
    """Give each empty cluster the point farthest from its current centroid,
    never stealing the sole member of another cluster."""
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        candidates = np.flatnonzero(counts[labels] > 1)
        donor = candidates[np.argmax(point_d2[candidates])]
        labels[donor] = c
        point_d2[donor] = -np.inf


def kmeans_cluster(
    rows,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> ClusterAssignment:
    """Lloyd iterations from k-means++ seeds until the max centroid shift
    drops below tol or max_iter is reached.

    Nearest-centroid ties break toward the lowest cluster id; an empty cluster
    is repaired by stealing the point farthest from its current centroid.
    """
    if max_iter < 1:
        raise DataError("max_iter must be >= 1")
    m = rows.shape[0]
    rng = np.random.default_rng(seed)
    centroids = kmeanspp_seed(rows, k, rng=rng)
    row_sq = _row_sq_norms(rows)
    labels = np.zeros(m, dtype=np.int64)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sq_dists(rows, row_sq, centroids)
        labels = np.argmin(d2, axis=1)  # argmin takes the lowest id on ties
        point_d2 = d2[np.arange(m), labels]
        _repair_empty(labels, point_d2, k)
        new_centroids = np.empty_like(centroids)
        for c in range(k):
            members = labels == c
            mean = rows[members].mean(axis=0)
            new_centroids[c] = np.asarray(mean).ravel()
        shift = np.max(np.linalg.norm(new_centroids - centroids, axis=1))
        centroids = new_centroids
        if shift < tol:
            break
    # final assignment against the returned centroids, so every point sits in
    # its nearest cluster (up to empty-cluster repair)
    d2 = _sq_dists(rows, row_sq, centroids)
    labels = np.argmin(d2, axis=1)
    point_d2 = d2[np.arange(m), labels]
    _repair_empty(labels, point_d2, k)
    return ClusterAssignment(
        num_clusters=k,
        assignment=labels,
        centroids=centroids,
        seed=seed,
        iterations_run=iterations,
    )


def within_cluster_sse(rows, assignment: ClusterAssignment) -> float:
    """Sum of squared distances of points to their assigned centroids."""
    row_sq = _row_sq_norms(rows)
    d2 = _sq_dists(rows, row_sq, assignment.centroids)
    return float(d2[np.arange(rows.shape[0]), assignment.assignment].sum())


def nearest_cluster(row: np.ndarray, centroids: np.ndarray) -> int:
    """Cluster whose centroid is closest to the given rating row."""
    d2 = np.einsum("ij,ij->i", centroids - row[None, :], centroids - row[None, :])
    return int(np.argmin(d2))
