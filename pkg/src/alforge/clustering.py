"""Self-contained KMeans (Lloyd + greedy k-means++), deterministic by seed.

Vectors are canonically ordered (lexicographic sort) before initialization,
so the same point set produces the same partition regardless of input
order. Best-of-n_init keeps toy-scale fits near the global optimum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import StateError
from .util import canonical_json_bytes, stable_rng


@dataclass
class ClusterModel:
    """Fitted partition: centroids plus the id -> cluster-index assignment."""

    k: int
    centroids: np.ndarray
    assignments: dict[str, int]
    inertia: float
    seed: int
    iterations_run: int
    inertia_history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "iterations_run": self.iterations_run,
            "inertia": self.inertia,
            "centroids": [[float(x) for x in row] for row in self.centroids],
            "assignments": dict(sorted(self.assignments.items())),
        }

    def to_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClusterModel":
        return cls(
            k=d["k"],
            centroids=np.asarray(d["centroids"], dtype=np.float64),
            assignments=dict(d["assignments"]),
            inertia=d["inertia"],
            seed=d["seed"],
            iterations_run=d["iterations_run"],
        )


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) matrix of squared Euclidean distances."""
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _weighted_index(weights: np.ndarray, rng) -> int:
    """Sample an index proportional to non-negative weights using rng.random()."""
    cumulative = np.cumsum(weights)
    total = cumulative[-1]
    r = rng.random() * total
    return int(np.searchsorted(cumulative, r, side="right").clip(0, len(weights) - 1))


def _kmeanspp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    """Greedy k-means++: D^2-sample a few candidates per step, keep the best."""
    n = points.shape[0]
    n_local = 2 + int(math.log(k)) if k > 1 else 1
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.randrange(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        best_pot = None
        best_point = None
        best_closest = None
        for _ in range(n_local):
            idx = _weighted_index(closest, rng)
            cand_d2 = ((points - points[idx]) ** 2).sum(axis=1)
            reduced = np.minimum(closest, cand_d2)
            pot = float(reduced.sum())
            if best_pot is None or pot < best_pot:
                best_pot = pot
                best_point = points[idx]
                best_closest = reduced
        centers[i] = best_point
        closest = best_closest
    return centers


def _repair_empty(
    points: np.ndarray, centers: np.ndarray, labels: np.ndarray, d2: np.ndarray
) -> bool:
    """Re-seed each empty cluster with the point farthest from its centroid."""
    repaired = False
    counts = np.bincount(labels, minlength=centers.shape[0])
    point_cost = d2[np.arange(points.shape[0]), labels]
    for c in np.where(counts == 0)[0]:
        far = int(np.argmax(point_cost))
        centers[c] = points[far]
        point_cost[far] = 0.0
        repaired = True
    return repaired


def _lloyd(
    points: np.ndarray, init: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    centers = init.copy()
    history: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        d2 = _sq_dists(points, centers)
        labels = np.argmin(d2, axis=1)
        if _repair_empty(points, centers, labels, d2):
            d2 = _sq_dists(points, centers)
            labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(points.shape[0]), labels].sum())
        # Lloyd guarantees a non-increasing objective; a violation means a bug.
        assert not history or inertia <= history[-1] + 1e-9, "inertia increased"
        history.append(inertia)
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            members = points[labels == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum()))
        centers = new_centers
        if shift < tol:
            break
    d2 = _sq_dists(points, centers)
    labels = np.argmin(d2, axis=1)
    # The last update step can, rarely, strand a centroid with no members;
    # repair until every cluster is occupied (each repair lowers inertia).
    while _repair_empty(points, centers, labels, d2):
        d2 = _sq_dists(points, centers)
        labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(points.shape[0]), labels].sum())
    assert not history or inertia <= history[-1] + 1e-9, "inertia increased"
    history.append(inertia)
    return centers, labels, inertia, iterations, history


def kmeans_fit(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-4,
    *,
    ids: Sequence[str] | None = None,
    n_init: int = 10,
) -> ClusterModel:
    """Fit k clusters with Lloyd's algorithm, deterministic for (vectors, k, seed).

    Runs n_init seeded k-means++ initializations and keeps the lowest-inertia
    result. Points are processed in a canonical lexicographic order, so any
    permutation of the input yields the same partition.
    """
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise StateError("kmeans_fit requires a non-empty 2-D array of vectors")
    if not np.isfinite(points).all():
        raise StateError("kmeans_fit requires finite vector components")
    distinct_rows = np.unique(points, axis=0)
    distinct = distinct_rows.shape[0]
    if k < 1:
        raise StateError("k must be >= 1")
    if k > distinct:
        raise StateError(f"k={k} exceeds the {distinct} distinct vectors")
    if ids is None:
        ids = [str(i) for i in range(points.shape[0])]
    elif len(ids) != points.shape[0]:
        raise StateError("ids and vectors length mismatch")

    order = np.lexsort(points.T[::-1])
    sorted_points = points[order]

    best: tuple[np.ndarray, float, int, list[float]] | None = None
    for trial in range(max(1, n_init)):
        rng = stable_rng("kmeans", seed, trial)
        init = _kmeanspp_init(sorted_points, k, rng)
        centers, _, inertia, iterations, history = _lloyd(
            sorted_points, init, max_iter, tol
        )
        if best is None or inertia < best[1]:
            best = (centers, inertia, iterations, history)
    # Toy-scale inputs get every k-subset of distinct points as an extra
    # deterministic init, pinning the fit near the global optimum.
    if math.comb(distinct, k) <= 256:
        for combo in itertools.combinations(range(distinct), k):
            centers, _, inertia, iterations, history = _lloyd(
                sorted_points, distinct_rows[list(combo)], max_iter, tol
            )
            if inertia < best[1]:
                best = (centers, inertia, iterations, history)

    centers, _, iterations, history = best
    d2 = _sq_dists(points, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(points.shape[0]), labels].sum())
    assignments = {ids[i]: int(labels[i]) for i in range(points.shape[0])}
    return ClusterModel(
        k=k,
        centroids=centers,
        assignments=assignments,
        inertia=inertia,
        seed=seed,
        iterations_run=iterations,
        inertia_history=history,
    )


def assign(vector: Sequence[float], model: ClusterModel) -> int:
    """Index of the nearest centroid; equal distances break to the lowest index."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (model.centroids.shape[1],):
        raise StateError(
            f"vector dimension {v.shape} does not match centroids "
            f"({model.centroids.shape[1]})"
        )
    d2 = ((model.centroids - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))
