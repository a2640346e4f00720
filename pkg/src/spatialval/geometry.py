"""Metric spaces, site collections, and fill-distance computations.

The fill distance of a candidate set in a target set is the largest
distance from any target to its nearest candidate; its k-th order
generalization uses the k-th nearest candidate instead. These quantities
drive both the adaptive neighbor selection and the error bounds in
:mod:`spatialval.estimators`.

Distances are always computed in double precision with no approximation:
oracle tests compare them bit-for-bit against naive per-pair evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .validation import (
    as_coordinates,
    check_positive,
    check_positive_int,
    check_probability,
    check_nonnegative,
)

EUCLIDEAN = "euclidean"
HAVERSINE = "haversine"

# Row-chunk size for pairwise distance matrices, keeps peak memory ~tens of MB.
_CHUNK_ROWS = 512


@dataclass(frozen=True)
class Metric:
    """A distance on the spatial domain.

    ``euclidean`` operates on points in R^dim. ``haversine`` operates on
    (lat, lon) pairs in radians and returns great-circle distance on a
    sphere of the given radius.

    The default haversine radius is 1, i.e. angular distance. Neighbor
    sets and estimator weights are invariant to this choice (distance
    ordering is preserved); only reported radii, fill distances, and the
    scale of the adaptive selection objective change with it. Pass e.g.
    ``radius=6371.0`` to work in kilometers.
    """

    kind: str
    dim: int = 2
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, HAVERSINE):
            raise InputError(f"unknown metric kind {self.kind!r}")
        check_positive_int(self.dim, "dim")
        check_positive(self.radius, "radius")
        if self.kind == HAVERSINE and self.dim != 2:
            raise InputError("haversine requires 2 coordinates (lat, lon)")

    @staticmethod
    def euclidean(dim: int) -> "Metric":
        return Metric(EUCLIDEAN, dim=dim)

    @staticmethod
    def haversine(radius: float = 1.0) -> "Metric":
        return Metric(HAVERSINE, dim=2, radius=radius)

    def validate_points(self, points: np.ndarray, name: str = "points") -> None:
        if points.shape[1] != self.dim:
            raise InputError(
                f"{name} have {points.shape[1]} coordinates, metric expects {self.dim}"
            )
        if self.kind == HAVERSINE and points.size:
            lat = points[:, 0]
            if lat.min() < -math.pi / 2 or lat.max() > math.pi / 2:
                raise InputError(
                    f"{name}: haversine latitudes must lie in [-pi/2, pi/2] radians"
                )

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Dense (len(a), len(b)) distance matrix.

        Euclidean distances are sqrt-of-sum-of-squares over coordinate
        differences (no |x|^2 - 2xy expansion), so results are identical
        to per-pair evaluation.
        """
        if self.kind == EUCLIDEAN:
            diff = a[:, None, :] - b[None, :, :]
            return np.sqrt(np.sum(diff * diff, axis=-1))
        return self.radius * _haversine_angular(a, b)


def _haversine_angular(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle angular distance between (lat, lon) arrays in radians."""
    lat1 = a[:, 0][:, None]
    lon1 = a[:, 1][:, None]
    lat2 = b[:, 0][None, :]
    lon2 = b[:, 1][None, :]
    s_lat = np.sin((lat2 - lat1) / 2.0)
    s_lon = np.sin((lon2 - lon1) / 2.0)
    h = s_lat * s_lat + np.cos(lat1) * np.cos(lat2) * s_lon * s_lon
    return 2.0 * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


class SiteSet:
    """An ordered, immutable collection of spatial locations under a metric."""

    __slots__ = ("points", "metric")

    def __init__(self, points, metric: Metric):
        pts = as_coordinates(points, "sites")
        if pts.size:
            metric.validate_points(pts)
        elif pts.shape[1] != metric.dim:
            pts = pts.reshape(0, metric.dim)
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "metric", metric)

    def __setattr__(self, *_):
        raise AttributeError("SiteSet is immutable")

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"SiteSet(n={len(self)}, metric={self.metric.kind}, dim={self.metric.dim})"

    @staticmethod
    def euclidean(points) -> "SiteSet":
        pts = as_coordinates(points, "sites")
        return SiteSet(pts, Metric.euclidean(pts.shape[1] if pts.size else 1))

    @staticmethod
    def haversine(points, radius: float = 1.0) -> "SiteSet":
        return SiteSet(points, Metric.haversine(radius))

    def prefix(self, n: int) -> "SiteSet":
        """First ``n`` sites (used for nested validation subsets)."""
        if not 0 < n <= len(self):
            raise InputError(f"prefix length {n} out of range for {len(self)} sites")
        return SiteSet(self.points[:n], self.metric)


def _require_same_metric(candidates: SiteSet, targets: SiteSet) -> None:
    if candidates.metric != targets.metric:
        raise InputError(
            f"metric mismatch: {candidates.metric} vs {targets.metric}"
        )


def _require_nonempty(sites: SiteSet, name: str) -> None:
    if len(sites) == 0:
        raise InputError(f"empty site set: {name}")


def fill_distance(candidates: SiteSet, targets: SiteSet) -> float:
    """Largest distance from a target to its nearest candidate.

    Returns 0 exactly when every target coincides with some candidate.
    """
    return kth_order_fill_distance(candidates, targets, 1)


def kth_order_fill_distance(candidates: SiteSet, targets: SiteSet, k: int) -> float:
    """Largest distance from a target to its k-th nearest candidate.

    The k-th smallest candidate distance is taken counting multiplicity,
    so duplicated candidate locations each count once.
    """
    _require_same_metric(candidates, targets)
    _require_nonempty(candidates, "candidates")
    _require_nonempty(targets, "targets")
    k = check_positive_int(k, "k")
    if k > len(candidates):
        raise InputError(f"k={k} exceeds candidate count {len(candidates)}")
    metric = candidates.metric
    worst = 0.0
    for start in range(0, len(targets), _CHUNK_ROWS):
        block = targets.points[start : start + _CHUNK_ROWS]
        dists = metric.pairwise(block, candidates.points)
        kth = np.partition(dists, k - 1, axis=1)[:, k - 1]
        worst = max(worst, float(kth.max()))
    return worst


def unit_ball_volume(dim: int) -> float:
    """Volume of the Euclidean unit ball in R^dim."""
    dim = check_positive_int(dim, "dim")
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


def iid_infill_bound(
    n: int, dim: int, density_lower_bound: float, delta: float
) -> float:
    """High-probability fill-distance bound for i.i.d. sites on [0,1]^dim.

    For n sites drawn i.i.d. from a density lower-bounded by
    ``density_lower_bound`` on the unit cube, the fill distance in the
    cube is below this value with probability at least ``1 - delta``
    (for n past a dimension-dependent threshold). The value is returned
    even when it exceeds 1; applicability is the caller's concern.
    """
    n = check_positive_int(n, "n")
    dim = check_positive_int(dim, "dim")
    c = check_positive(density_lower_bound, "density_lower_bound")
    delta = check_probability(delta, "delta")
    vol = unit_ball_volume(dim)
    inner = (4.0**dim / (c * n * vol)) * math.log(6.0**dim * n / (vol * delta))
    return inner ** (1.0 / dim)


def grid_prediction_bound(
    rho1: float,
    dim: int,
    n_test: int,
    delta: float,
    lipschitz: float,
    loss_bound: float,
) -> float:
    """Risk-estimation error bound specialized to regular-grid test sites.

    ``rho1`` is the (first-order) fill distance of the validation sites in
    the test grid. Intended for test sites forming a regular grid on a
    unit cube; the caller is responsible for that geometry.
    """
    rho1 = check_nonnegative(rho1, "rho1")
    dim = check_positive_int(dim, "dim")
    n_test = check_positive_int(n_test, "n_test")
    delta = check_probability(delta, "delta")
    lipschitz = check_nonnegative(lipschitz, "lipschitz")
    loss_bound = check_nonnegative(loss_bound, "loss_bound")
    conc = loss_bound * math.sqrt(0.5 * math.log(2.0 / delta))
    spread = math.sqrt(max(2.0**dim / n_test, (8.0 * rho1) ** dim))
    return lipschitz * rho1 + conc * spread
