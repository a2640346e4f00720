"""Tie-inclusive k-nearest-neighbor queries over a frozen site set.

A query's neighbor set contains the k nearest indexed sites plus every
further site at exactly the same distance as the k-th one, so the set is a
deterministic function of the geometry alone (no arbitrary tie-breaking).
Tie detection compares computed distances with exact floating-point
equality.

``NeighborIndex`` wraps a space-partitioning tree (kd-tree for Euclidean,
ball tree for haversine) for candidate pruning, but every distance that
decides membership is recomputed with this package's own metric, so query
results are identical to a brute-force linear scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.neighbors import BallTree, KDTree

from .exceptions import InputError
from .geometry import EUCLIDEAN, SiteSet, _CHUNK_ROWS
from .validation import check_nonnegative, check_positive_int

# Relative slack applied to tree radii so that ulp-level differences between
# the tree's distance arithmetic and ours can never drop a true neighbor.
_RADIUS_SLACK = 1e-9


@dataclass(frozen=True)
class NeighborSet:
    """Indices of a tie-inclusive neighbor set and its radius."""

    indices: np.ndarray
    radius: float

    def __len__(self) -> int:
        return int(self.indices.shape[0])


class NeighborIndex:
    """Immutable k-NN / range-count index over a fixed SiteSet."""

    def __init__(self, sites: SiteSet):
        if len(sites) == 0:
            raise InputError("cannot build a neighbor index over an empty site set")
        self.sites = sites
        self.metric = sites.metric
        if self.metric.kind == EUCLIDEAN:
            self._tree = KDTree(sites.points)
            self._tree_scale = 1.0  # tree distances are already metric distances
        else:
            self._tree = BallTree(sites.points, metric="haversine")
            self._tree_scale = self.metric.radius  # tree works in angular units

    def __len__(self) -> int:
        return len(self.sites)

    def _query_point(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.ndim == 1:
            q = q.reshape(1, -1)
        if q.shape != (1, self.metric.dim) or not np.all(np.isfinite(q)):
            raise InputError(
                f"query must be a single finite point with {self.metric.dim} coordinates"
            )
        self.metric.validate_points(q, "query")
        return q

    def _own_distances(self, q: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return self.metric.pairwise(q, self.sites.points[idx])[0]

    def _candidates_within(self, q: np.ndarray, radius: float) -> np.ndarray:
        tree_radius = (radius / self._tree_scale) * (1.0 + _RADIUS_SLACK)
        return self._tree.query_radius(q, r=tree_radius)[0]

    def knn_set(self, query, k: int) -> NeighborSet:
        """Tie-inclusive set of the k nearest indexed sites to ``query``."""
        k = check_positive_int(k, "k")
        if k > len(self):
            raise InputError(f"k={k} exceeds indexed site count {len(self)}")
        q = self._query_point(query)
        kth_tree = float(self._tree.query(q, k=k)[0][0][-1]) * self._tree_scale
        cand = self._candidates_within(q, kth_tree * (1.0 + _RADIUS_SLACK))
        dists = self._own_distances(q, cand)
        radius = float(np.partition(dists, k - 1)[k - 1])
        members = cand[dists <= radius]
        return NeighborSet(indices=np.sort(members), radius=radius)

    def count_within(self, query, radius: float) -> int:
        """Number of indexed sites within the closed ball of ``radius``."""
        radius = check_nonnegative(radius, "radius")
        q = self._query_point(query)
        cand = self._candidates_within(q, radius)
        if cand.size == 0:
            return 0
        return int(np.count_nonzero(self._own_distances(q, cand) <= radius))


def build(sites: SiteSet) -> NeighborIndex:
    """Build an immutable neighbor index over ``sites``."""
    return NeighborIndex(sites)


def knn_weight_sweep(
    val_sites: SiteSet, test_sites: SiteSet, k_values: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor estimator weights for several k at once.

    For each k, every test point spreads mass 1/(M * |A|) over its
    tie-inclusive neighbor set A of validation points. Returns
    ``(weights, radii)`` where ``weights[j]`` is the weight vector over
    validation points for ``k_values[j]`` and ``radii[j]`` is the largest
    neighbor-set radius across test points (the k-th order fill distance
    of the validation sites in the test sites).

    One exact pass over the dense distance matrix, chunked by test rows;
    results match a per-point linear scan.
    """
    if val_sites.metric != test_sites.metric:
        raise InputError(f"metric mismatch: {val_sites.metric} vs {test_sites.metric}")
    if len(val_sites) == 0 or len(test_sites) == 0:
        raise InputError("empty site set")
    n_val = len(val_sites)
    ks = [check_positive_int(k, "k") for k in k_values]
    if any(k > n_val for k in ks):
        raise InputError(f"k values {ks} must not exceed validation size {n_val}")

    metric = val_sites.metric
    n_test = len(test_sites)
    weights = np.zeros((len(ks), n_val))
    radii = np.zeros(len(ks))
    kmax = max(ks)
    for start in range(0, n_test, _CHUNK_ROWS):
        block = test_sites.points[start : start + _CHUNK_ROWS]
        dists = metric.pairwise(block, val_sites.points)
        smallest = np.partition(dists, kmax - 1, axis=1)[:, :kmax]
        smallest.sort(axis=1)
        for j, k in enumerate(ks):
            tau = smallest[:, k - 1]
            members = dists <= tau[:, None]
            sizes = members.sum(axis=1)
            weights[j] += (members / sizes[:, None]).sum(axis=0)
            radii[j] = max(radii[j], float(tau.max()))
    weights /= n_test
    return weights, radii


def count_within_batch(sites: SiteSet, queries: SiteSet, radius: float) -> np.ndarray:
    """For each query, count sites within the closed ball of ``radius``."""
    if sites.metric != queries.metric:
        raise InputError(f"metric mismatch: {sites.metric} vs {queries.metric}")
    radius = check_nonnegative(radius, "radius")
    counts = np.zeros(len(queries), dtype=np.int64)
    for start in range(0, len(queries), _CHUNK_ROWS):
        block = queries.points[start : start + _CHUNK_ROWS]
        dists = sites.metric.pairwise(block, sites.points)
        counts[start : start + block.shape[0]] = (dists <= radius).sum(axis=1)
    return counts
