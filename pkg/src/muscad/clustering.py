"""Lloyd k-means over word vectors and the unit-norm aspect matrix built from it."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass
class ClusterResult:
    candidate_ids: np.ndarray      # word id of each clustered point
    assignments: np.ndarray        # cluster index per candidate point
    centroids_raw: np.ndarray
    centroids_unit: np.ndarray
    inertia: float
    k: int
    iterations_run: int
    converged: bool
    inertia_trace: list[float] = field(default_factory=list)

    def assignment_map(self) -> dict[int, int]:
        return {int(w): int(c) for w, c in zip(self.candidate_ids, self.assignments)}

    def members(self, cluster: int) -> np.ndarray:
        return self.candidate_ids[self.assignments == cluster]


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize rows; an all-zero row becomes the first basis vector."""
    matrix = np.asarray(matrix, dtype=np.float64)
    # rescale by the largest entry first so tiny rows do not underflow in the norm
    scale = np.abs(matrix).max(axis=1, keepdims=True)
    scaled = np.divide(matrix, scale, out=np.zeros_like(matrix), where=scale > 0)
    norms = np.linalg.norm(scaled, axis=1, keepdims=True)
    out = np.divide(scaled, norms, out=np.zeros_like(matrix), where=norms > 0)
    out[norms[:, 0] == 0, 0] = 1.0
    return out


def sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (points ** 2).sum(1)[:, None] - 2.0 * points @ centroids.T + (centroids ** 2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator, trials: int | None = None) -> np.ndarray:
    """Greedy k-means++: each step samples ``trials`` D^2-weighted candidates and keeps the best one."""
    n = len(points)
    trials = trials or 2 + int(np.log(k))
    chosen = [int(rng.integers(n))]
    closest = sq_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            cands = rng.integers(n, size=trials)
        else:
            cands = np.searchsorted(np.cumsum(closest / total), rng.random(trials), side="right")
            cands = np.minimum(cands, n - 1)
        updated = np.minimum(closest[None, :], sq_distances(points[cands], points))
        best = int(updated.sum(axis=1).argmin())
        chosen.append(int(cands[best]))
        closest = updated[best]
    return points[chosen].copy()


def _assign(points, centroids):
    dist = sq_distances(points, centroids)
    labels = dist.argmin(axis=1)
    return labels, dist[np.arange(len(points)), labels]


def _update(points, labels, centroids, point_dist):
    """Member means; an empty cluster restarts at the point farthest from its centroid."""
    k = len(centroids)
    new = centroids.copy()
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels, points)
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    taken = set()
    for c in np.flatnonzero(~filled):
        for p in np.argsort(-point_dist, kind="stable"):
            if p not in taken:
                taken.add(int(p))
                new[c] = points[p]
                break
    return new


def kmeans(vectors: np.ndarray, k: int, candidate_ids: Sequence[int] | None = None, max_iter: int = 100,
           tol: float = 1e-4, seed: int = 0, init: np.ndarray | None = None, n_init: int = 10) -> ClusterResult:
    """Lloyd iterations with squared Euclidean distance on the raw vectors.

    Stops when assignments repeat, when the largest centroid shift drops
    below ``tol``, or after ``max_iter`` assignment steps. The returned raw
    centroids are always the member means of the final assignment.

    Without ``init``, ``n_init`` k-means++ seedings are drawn from one
    generator and the run with the lowest inertia is returned.
    """
    if n_init < 1:
        raise ConfigError(f"n_init must be >= 1, got {n_init}")
    if init is not None:
        return _lloyd(vectors, k, candidate_ids, max_iter, tol, None, init)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        res = _lloyd(vectors, k, candidate_ids, max_iter, tol, rng, None)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def _lloyd(vectors, k, candidate_ids, max_iter, tol, rng, init) -> ClusterResult:
    vectors = np.asarray(vectors, dtype=np.float64)
    ids = np.arange(len(vectors)) if candidate_ids is None else np.asarray(candidate_ids, dtype=np.int64)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    if len(ids) < k:
        raise ConfigError(f"k={k} exceeds the number of candidate points ({len(ids)})")
    points = vectors[ids]

    if init is None:
        centroids = kmeans_plus_plus(points, k, rng)
    else:
        centroids = np.array(init, dtype=np.float64)
        if centroids.shape != (k, points.shape[1]):
            raise ValueError(f"init must have shape {(k, points.shape[1])}, got {centroids.shape}")

    labels = None
    trace = []
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        new_labels, point_dist = _assign(points, centroids)
        trace.append(float(point_dist.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        new_centroids = _update(points, labels, centroids, point_dist)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(1)).max())
        centroids = new_centroids
        if shift < tol:
            converged = True
            labels, point_dist = _assign(points, centroids)
            trace.append(float(point_dist.sum()))
            break

    centroids = _update(points, labels, centroids, _assign(points, centroids)[1])
    diff = points - centroids[labels]
    inertia = float((diff ** 2).sum())
    return ClusterResult(
        candidate_ids=ids,
        assignments=labels,
        centroids_raw=centroids,
        centroids_unit=unit_rows(centroids),
        inertia=inertia,
        k=k,
        iterations_run=it,
        converged=converged,
        inertia_trace=trace,
    )


def build_aspect_matrix(result: ClusterResult) -> np.ndarray:
    return result.centroids_unit.copy()


def candidate_words(frequency: Sequence[int], floor: int = 20, allowed: Sequence[int] | None = None) -> np.ndarray:
    """Word ids whose corpus frequency reaches ``floor``, optionally intersected with ``allowed``."""
    ids = [i for i, f in enumerate(frequency) if f >= floor]
    if allowed is not None:
        keep = set(allowed)
        ids = [i for i in ids if i in keep]
    return np.asarray(ids, dtype=np.int64)


def cluster_report(result: ClusterResult, vectors: np.ndarray, tokens: Sequence[str]) -> dict:
    """JSON-ready summary: member tokens ordered by distance to their centroid."""
    clusters = []
    for c in range(result.k):
        members = result.members(c)
        dist = ((np.asarray(vectors)[members] - result.centroids_raw[c]) ** 2).sum(1)
        order = sorted(range(len(members)), key=lambda i: (dist[i], tokens[members[i]]))
        clusters.append({
            "index": c,
            "size": int(len(members)),
            "members": [{"token": tokens[members[i]], "sq_distance": float(dist[i])} for i in order],
            "centroid": result.centroids_raw[c].tolist(),
            "centroid_unit": result.centroids_unit[c].tolist(),
        })
    return {
        "k": result.k,
        "inertia": result.inertia,
        "iterations_run": result.iterations_run,
        "converged": result.converged,
        "inertia_trace": result.inertia_trace,
        "clusters": clusters,
    }
