"""Partitioning forecast samples into per-OV clusters.

Two strategies produce a :class:`ClusterIndex`: k-means on the final-step
positions, or passthrough of forecast mode labels. Either way the index
carries an assignment function that maps any sample (including fresh ones
never seen while planning) to exactly one cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .prediction import PredictionSet

__all__ = [
    "ClusterIndex",
    "ClusteringError",
    "KMeansResult",
    "kmeans",
    "cluster_kmeans",
    "cluster_by_labels",
    "cluster_samples",
    "rare_mode_map",
    "merge_rare_modes",
]

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-8


class ClusteringError(ValueError):
    pass


@dataclass
class KMeansResult:
    labels: np.ndarray  # 1..K
    centroids: np.ndarray  # (K, d), row k-1 is cluster k
    inertia: float
    iterations: int


def _nearest(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin picks the lowest cluster id on ties
    return np.argmin(d2, axis=1), d2


def _seed_plusplus(points, K, u):
    """k-means++ seeding driven by the uniforms ``u`` (length K)."""
    N = points.shape[0]
    first = min(int(u[0] * N), N - 1)
    centers = [points[first]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            raise ClusteringError(f"fewer than {K} distinct points")
        cdf = np.cumsum(d2) / total
        j = int(np.searchsorted(cdf, u[k], side="right"))
        j = min(j, N - 1)
        while d2[j] == 0:  # guard against landing on a zero-weight point through rounding
            j = (j + 1) % N
        centers.append(points[j])
        d2 = np.minimum(d2, ((points - points[j]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(points, centroids, max_iter, tol):
    K = centroids.shape[0]
    it = 0
    for it in range(1, max_iter + 1):
        assign, d2 = _nearest(points, centroids)
        new = centroids.copy()
        for k in range(K):
            members = assign == k
            if members.any():
                new[k] = points[members].mean(axis=0)
            else:
                # reseed at the point farthest from its own centroid
                far = int(np.argmax(d2[np.arange(len(points)), assign]))
                new[k] = points[far]
                assign[far] = k
        shift = np.max(np.linalg.norm(new - centroids, axis=1))
        centroids = new
        if shift < tol:
            break
    assign, d2 = _nearest(points, centroids)
    inertia = float(d2[np.arange(len(points)), assign].sum())
    return assign, centroids, inertia, it


def kmeans(points, K: int, seed: int = 0, *, restarts: int = KMEANS_RESTARTS,
           max_iter: int = KMEANS_MAX_ITER, tol: float = KMEANS_TOL) -> KMeansResult:
    """Best of ``restarts`` seeded Lloyd runs by within-cluster sum of squares.

    Clusters are numbered by lexicographic centroid order so the labelling
    does not depend on which restart won.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    N = points.shape[0]
    if K < 1:
        raise ClusteringError("K must be positive")
    if N < K:
        raise ClusteringError(f"need at least K={K} points, got {N}")
    if np.unique(points, axis=0).shape[0] < K:
        raise ClusteringError(f"fewer than {K} distinct points")
    u = rng.uniforms(seed, 7, np.arange(restarts), K)
    best = None
    for r in range(restarts):
        c0 = _seed_plusplus(points, K, u[r])
        assign, cents, inertia, it = _lloyd(points, c0, max_iter, tol)
        # strict improvement keeps the lowest restart index on ties
        if best is None or inertia < best[2]:
            best = (assign, cents, inertia, it)
    assign, cents, inertia, it = best
    order = np.lexsort(cents.T[::-1])
    rank = np.empty(K, dtype=np.int64)
    rank[order] = np.arange(K)
    return KMeansResult(rank[assign] + 1, cents[order], inertia, it)


def cluster_kmeans(final_positions, K: int, seed: int = 0) -> np.ndarray:
    """Cluster labels in 1..K for the given final-step positions."""
    return kmeans(final_positions, K, seed).labels


@dataclass
class ClusterIndex:
    """Per-OV partition of sample indices (0-based) into clusters.

    ``sets[o][k]`` lists the samples of cluster ``k`` of OV ``o``;
    ``cluster_ids[o][k]`` is the user-facing id (a mode label or a k-means
    cluster number). ``centroids[o]`` holds each cluster's mean final
    position and ``label_map[o]``, when present, maps mode labels to cluster
    positions.
    """

    sets: list[list[np.ndarray]]
    cluster_ids: list[list[int]]
    centroids: list[np.ndarray]
    strategy: str
    label_map: list[dict[int, int]] | None = None

    @property
    def O(self) -> int:  # noqa: E743
        return len(self.sets)

    @property
    def counts(self) -> list[int]:
        return [len(s) for s in self.sets]

    def check_partition(self, N: int) -> None:
        for o, sets in enumerate(self.sets):
            allidx = np.concatenate(sets) if sets else np.array([], dtype=int)
            if allidx.size != N or not np.array_equal(np.sort(allidx), np.arange(N)):
                raise ClusteringError(f"clusters of OV {o + 1} do not partition the samples")
            if any(len(s) == 0 for s in sets):
                raise ClusteringError(f"OV {o + 1} has an empty cluster")

    def assign(self, ps: PredictionSet) -> np.ndarray:
        """Cluster position (0-based) of every sample and OV, shape ``(N, O)``.

        Labelled samples go through the label map; anything else (k-means, or
        a label never seen while clustering) goes to the nearest centroid.
        """
        out = np.empty((ps.N, self.O), dtype=np.int64)
        for o in range(self.O):
            nearest, _ = _nearest(ps.final_positions(o), self.centroids[o])
            if self.label_map is not None and ps.labels is not None:
                lm = self.label_map[o]
                mapped = np.array([lm.get(int(z), -1) for z in ps.labels[:, o]])
                out[:, o] = np.where(mapped >= 0, mapped, nearest)
            else:
                out[:, o] = nearest
        return out

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "ovs": [
                {
                    "ov_id": o + 1,
                    "clusters": [
                        {
                            "cluster_id": int(cid),
                            "size": int(len(idx)),
                            "centroid": [float(v) for v in self.centroids[o][k]],
                        }
                        for k, (cid, idx) in enumerate(zip(self.cluster_ids[o], self.sets[o]))
                    ],
                }
                for o in range(self.O)
            ],
        }


def _index_from_labels(labels, final_positions, strategy, label_maps=None):
    sets, ids, cents = [], [], []
    for o, lab in enumerate(labels.T):
        distinct = np.unique(lab)
        sets.append([np.flatnonzero(lab == z) for z in distinct])
        ids.append([int(z) for z in distinct])
        cents.append(np.array([final_positions[o][lab == z].mean(axis=0) for z in distinct]))
    if label_maps is None and strategy == "labels":
        label_maps = [{z: k for k, z in enumerate(i)} for i in ids]
    return ClusterIndex(sets, ids, cents, strategy, label_maps)


def cluster_by_labels(samples: PredictionSet) -> ClusterIndex:
    """Group samples by their mode label; cluster ids are the distinct labels ascending."""
    if samples.labels is None:
        raise ClusteringError("samples carry no mode labels")
    finals = [samples.final_positions(o) for o in range(samples.O)]
    return _index_from_labels(samples.labels, finals, "labels")


def cluster_samples(samples: PredictionSet, strategy: str, K=None, seed: int = 0) -> ClusterIndex:
    """Cluster with ``strategy`` in {"kmeans", "labels"}; ``K`` is one count per OV."""
    if strategy == "labels":
        return cluster_by_labels(samples)
    if strategy != "kmeans":
        raise ClusteringError(f"unknown clustering strategy {strategy!r}")
    if K is None:
        raise ClusteringError("k-means needs K per OV")
    K = [int(K)] * samples.O if np.ndim(K) == 0 else [int(k) for k in K]
    if len(K) != samples.O:
        raise ClusteringError(f"expected {samples.O} cluster counts, got {len(K)}")
    finals = [samples.final_positions(o) for o in range(samples.O)]
    labels = np.stack([cluster_kmeans(finals[o], K[o], seed + o) for o in range(samples.O)], axis=1)
    return _index_from_labels(labels, finals, "kmeans")


def rare_mode_map(final_positions, labels, probs: dict, threshold: float) -> tuple[dict, dict]:
    """Reassignment for one OV: ``(label -> retained label, retained -> renormalized prob)``.

    A label is kept when its probability is at least ``threshold``. Each rare
    label moves to the retained label whose mean final position is nearest
    (lowest label on ties); rare labels without samples go to the most
    probable retained label.
    """
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-9:
        raise ClusteringError(f"mode probabilities sum to {total}, not 1")
    kept = sorted(z for z, p in probs.items() if p >= threshold)
    if not kept:
        raise ClusteringError(f"no mode has probability >= {threshold}")
    final_positions = np.asarray(final_positions, dtype=float)
    labels = np.asarray(labels)

    def mean_of(z):
        m = labels == z
        return final_positions[m].mean(axis=0) if m.any() else None

    kept_means = {z: mean_of(z) for z in kept}
    fallback = max(kept, key=lambda z: (probs[z], -z))
    mapping = {z: z for z in kept}
    for z in sorted(set(probs) - set(kept)):
        mz = mean_of(z)
        cands = [(float(np.sum((kept_means[k] - mz) ** 2)), k) for k in kept
                 if mz is not None and kept_means[k] is not None]
        mapping[z] = min(cands)[1] if cands else fallback
    kept_mass = sum(probs[z] for z in kept)
    return mapping, {z: probs[z] / kept_mass for z in kept}


def merge_rare_modes(samples: PredictionSet, mode_probs, threshold: float = 0.1) -> PredictionSet:
    """Relabel samples of rare modes into retained modes.

    ``mode_probs`` is one ``{label: probability}`` dict per OV (a bare dict is
    accepted when there is a single OV).
    """
    if samples.labels is None:
        raise ClusteringError("samples carry no mode labels")
    if isinstance(mode_probs, dict):
        mode_probs = [mode_probs]
    if len(mode_probs) != samples.O:
        raise ClusteringError(f"expected mode probabilities for {samples.O} OVs")
    labels = samples.labels.copy()
    new_probs = []
    for o in range(samples.O):
        probs = {int(k): float(v) for k, v in mode_probs[o].items()}
        unknown = set(np.unique(labels[:, o]).tolist()) - set(probs)
        if unknown:
            raise ClusteringError(f"OV {o + 1}: labels {sorted(unknown)} have no probability")
        mapping, renorm = rare_mode_map(samples.final_positions(o), labels[:, o], probs, threshold)
        labels[:, o] = [mapping[int(z)] for z in labels[:, o]]
        new_probs.append(renorm)
    return PredictionSet(samples.pos, samples.yaw, samples.length, samples.width,
                         labels, new_probs, samples.ndim)
