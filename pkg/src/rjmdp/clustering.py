"""Point estimates of the optimal policy from plateau samples.

The estimate is the centroid of the largest average-linkage (UPGMA) cluster.
The tree is cut where the next merge would exceed ``merge_threshold``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

__all__ = ["ClusterResult", "EstimateMethod", "upgma_cluster", "point_estimate",
           "default_merge_threshold"]


class EstimateMethod(str, enum.Enum):
    MEAN = "mean"
    LARGEST_CLUSTER = "cluster"


@dataclass
class ClusterResult:
    assignments: np.ndarray
    cluster_sizes: np.ndarray
    centroids: np.ndarray
    chosen: int

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def estimate(self) -> np.ndarray:
        return self.centroids[self.chosen]

    def to_json(self) -> str:
        return json.dumps({
            "assignments": self.assignments.tolist(),
            "sizes": self.cluster_sizes.tolist(),
            "centroids": self.centroids.tolist(),
            "chosen": int(self.chosen),
        })

    @classmethod
    def from_json(cls, text: str) -> "ClusterResult":
        data = json.loads(text)
        return cls(np.asarray(data["assignments"], dtype=int),
                   np.asarray(data["sizes"], dtype=int),
                   np.asarray(data["centroids"], dtype=float).reshape(len(data["sizes"]), -1),
                   int(data["chosen"]))


def default_merge_threshold(low, high, fraction: float = 0.1) -> float:
    """A fraction of the diagonal of the parameter box."""
    return fraction * float(np.linalg.norm(np.asarray(high, float) - np.asarray(low, float)))


def _mean(samples):
    # offset by the first row so identical samples average to themselves exactly
    return samples[0] + (samples - samples[0]).mean(axis=0)


def _as_samples(samples):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("need a nonempty (n_samples, n_features) array of samples")
    return samples


def upgma_cluster(samples, merge_threshold: float, scale=None,
                  score_fn: Optional[Callable] = None) -> ClusterResult:
    """Average-linkage clustering with a distance cut.

    Distances are Euclidean on ``samples / scale``. Cluster ids are ordered by
    decreasing size, then lexicographically by centroid, so the result does
    not depend on sample order. Among equally large clusters the one with the
    highest ``score_fn(centroid)`` is chosen; without ``score_fn`` the first
    in that ordering wins.
    """
    samples = _as_samples(samples)
    if merge_threshold <= 0:
        raise ValueError("merge_threshold must be positive")
    n = samples.shape[0]
    scaled = samples if scale is None else samples / np.asarray(scale, dtype=float)
    if n == 1:
        raw = np.zeros(1, dtype=int)
    else:
        tree = linkage(pdist(scaled), method="average")
        raw = fcluster(tree, t=merge_threshold, criterion="distance") - 1

    labels = np.unique(raw)
    centroids = np.array([_mean(samples[raw == c]) for c in labels])
    sizes = np.array([np.count_nonzero(raw == c) for c in labels])
    order = sorted(range(len(labels)), key=lambda i: (-sizes[i], *centroids[i].tolist()))
    remap = np.empty(len(labels), dtype=int)
    remap[order] = np.arange(len(labels))
    assignments = remap[np.searchsorted(labels, raw)]
    sizes, centroids = sizes[order], centroids[order]

    chosen = 0
    tied = np.flatnonzero(sizes == sizes[0])
    if score_fn is not None and tied.size > 1:
        scores = [score_fn(centroids[i]) for i in tied]
        chosen = int(tied[int(np.argmax(scores))])
    return ClusterResult(assignments, sizes, centroids, chosen)


def point_estimate(samples, method="cluster", merge_threshold: float = None, scale=None,
                   score_fn: Optional[Callable] = None) -> np.ndarray:
    """Plain mean of the samples, or the centroid of their largest UPGMA cluster."""
    samples = _as_samples(samples)
    method = EstimateMethod(method)
    if method is EstimateMethod.MEAN:
        return _mean(samples)
    if merge_threshold is None:
        raise ValueError("the cluster estimate needs a merge_threshold")
    return upgma_cluster(samples, merge_threshold, scale, score_fn).estimate
