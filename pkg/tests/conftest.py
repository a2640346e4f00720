"""Shared brute-force reference implementations used as oracles.

These deliberately use per-point Python loops and independent selection
logic (sorting, explicit tie scans, dict accumulation) so that the
vectorized / tree-backed implementations are checked against a second,
structurally different path. Distances come from the package's metric
primitive, which is itself checked bit-for-bit against pure-Python
arithmetic in test_geometry.
"""

import math

import numpy as np
import pytest

from spatialval.geometry import Metric, SiteSet


def pure_python_euclidean(p, q) -> float:
    total = 0.0
    for a, b in zip(p, q):
        diff = a - b
        total += diff * diff
    return math.sqrt(total)


def pure_python_haversine(p, q, radius=1.0) -> float:
    lat1, lon1 = p
    lat2, lon2 = q
    s_lat = math.sin((lat2 - lat1) / 2.0)
    s_lon = math.sin((lon2 - lon1) / 2.0)
    h = s_lat * s_lat + math.cos(lat1) * math.cos(lat2) * s_lon * s_lon
    return radius * 2.0 * math.asin(min(1.0, math.sqrt(h)))


def brute_knn_set(sites: SiteSet, query, k: int):
    """Tie-inclusive neighbor set by full scan: (sorted indices, radius)."""
    q = np.atleast_2d(np.asarray(query, dtype=float))
    dists = sites.metric.pairwise(q, sites.points)[0]
    radius = sorted(dists)[k - 1]
    members = [i for i in range(len(sites)) if dists[i] <= radius]
    return np.asarray(members), radius


def brute_count_within(sites: SiteSet, query, radius: float) -> int:
    q = np.atleast_2d(np.asarray(query, dtype=float))
    dists = sites.metric.pairwise(q, sites.points)[0]
    return sum(1 for d in dists if d <= radius)


def brute_fill_distance(candidates: SiteSet, targets: SiteSet, k: int = 1) -> float:
    worst = 0.0
    for target in targets.points:
        dists = candidates.metric.pairwise(target[None, :], candidates.points)[0]
        worst = max(worst, sorted(dists)[k - 1])
    return worst


def brute_knn_weights(val: SiteSet, test: SiteSet, k: int):
    """(weights, rho_k) by per-test-point accumulation."""
    n, m = len(val), len(test)
    weights = np.zeros(n)
    rho = 0.0
    for j in range(m):
        members, radius = brute_knn_set(val, test.points[j], k)
        rho = max(rho, radius)
        for i in members:
            weights[i] += 1.0 / (m * len(members))
    return weights, rho


def brute_snn(losses, val: SiteSet, test: SiteSet, k_grid, delta, loss_bound):
    """Adaptive estimate by exhaustive evaluation: (value, chosen_k, objective)."""
    constant = loss_bound * math.sqrt(0.5 * math.log(2.0 / delta))
    best = None
    for k in k_grid:
        weights, rho = brute_knn_weights(val, test, k)
        objective = rho + constant * math.sqrt(sum(w * w for w in weights))
        if best is None or objective < best[2]:
            value = float(np.dot(weights, losses))
            best = (value, k, objective)
    return best


def random_euclidean_instance(rng, max_n=500, max_m=100, max_dim=3):
    dim = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    metric = Metric.euclidean(dim)
    val = SiteSet(rng.uniform(-1.0, 1.0, size=(n, dim)), metric)
    test = SiteSet(rng.uniform(-1.0, 1.0, size=(m, dim)), metric)
    return val, test


def random_haversine_instance(rng, max_n=200, max_m=50, radius=1.0):
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    metric = Metric.haversine(radius)

    def draw(count):
        lat = rng.uniform(-math.pi / 2, math.pi / 2, size=count)
        lon = rng.uniform(-math.pi, math.pi, size=count)
        return np.column_stack([lat, lon])

    return SiteSet(draw(n), metric), SiteSet(draw(m), metric)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
