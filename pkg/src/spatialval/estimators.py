"""Test-risk estimators over fixed test sites, and their error bounds.

Three estimators of the average loss a predictive method incurs at a set
of test sites, computed from per-point losses observed at validation
sites:

* ``holdout`` -- the unweighted mean of the validation losses.
* ``knn_estimate`` -- a weighted mean where each test site spreads equal
  mass over its tie-inclusive set of k nearest validation points.
* ``snn_estimate`` -- the k-NN estimate with k chosen adaptively by
  minimizing a bias/variance error bound over a grid of candidate k
  (by default the powers of two up to the validation size).

The selection objective for k is ``rho_k + C * ||w||_2`` where ``rho_k``
is the k-th order fill distance of the validation sites in the test
sites, ``w`` the weight vector, and ``C = loss_bound * sqrt(log(2/delta)/2)``
the Hoeffding constant. The objective depends only on site geometry, never
on the observed losses, so a single selection is coherent across the
predictive methods being compared.

Estimators consume precomputed per-point losses rather than models, so
any third-party predictive method (physical or statistical) can be
validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InputError
from .geometry import Metric, SiteSet, kth_order_fill_distance
from .neighbors import count_within_batch, knn_weight_sweep
from .validation import (
    as_float_array,
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_probability,
)

HOLDOUT = "holdout"
KNN = "knn"
SNN = "snn"


def hoeffding_constant(delta: float, loss_bound: float) -> float:
    """The concentration constant ``loss_bound * sqrt(log(2/delta) / 2)``."""
    delta = check_probability(delta, "delta")
    loss_bound = check_nonnegative(loss_bound, "loss_bound")
    return loss_bound * math.sqrt(0.5 * math.log(2.0 / delta))


def default_k_grid(n_val: int) -> tuple[int, ...]:
    """Powers of two up to ``n_val``, including 1."""
    n_val = check_positive_int(n_val, "n_val")
    ks = []
    k = 1
    while k <= n_val:
        ks.append(k)
        k *= 2
    return tuple(ks)


@dataclass(frozen=True)
class LossSample:
    """Realized per-validation-point losses, bounded by ``loss_bound``."""

    values: np.ndarray
    loss_bound: float = 1.0

    def __post_init__(self):
        values = as_float_array(self.values, "loss values", ndim=1)
        if values.size == 0:
            raise InputError("loss sample is empty")
        check_positive(self.loss_bound, "loss_bound")
        if values.min() < 0.0 or values.max() > self.loss_bound:
            raise InputError(
                f"losses must lie in [0, {self.loss_bound}]; "
                f"observed range [{values.min()}, {values.max()}]"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class EstimatorConfig:
    """Shared estimator settings.

    ``k_grid`` of None means the default powers-of-two grid (including 1)
    up to the validation size at use time. ``lipschitz`` feeds certified
    error bounds only; the adaptive selection always uses 1 in its place.
    """

    delta: float = 0.1
    loss_bound: float = 1.0
    k_grid: tuple[int, ...] | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        check_probability(self.delta, "delta")
        # 0 is allowed so the bound formulas can degenerate to their bias term.
        check_nonnegative(self.loss_bound, "loss_bound")
        if self.k_grid is not None:
            grid = tuple(check_positive_int(k, "k_grid entry") for k in self.k_grid)
            if len(grid) == 0:
                raise InputError("k_grid is empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise InputError("k_grid must be strictly increasing")
            object.__setattr__(self, "k_grid", grid)
        if self.lipschitz is not None:
            check_nonnegative(self.lipschitz, "lipschitz")

    def resolved_k_grid(self, n_val: int) -> tuple[int, ...]:
        if self.k_grid is None:
            return default_k_grid(n_val)
        if self.k_grid[-1] > n_val:
            raise InputError(
                f"k_grid entries must not exceed validation size {n_val}"
            )
        return self.k_grid

    def constant(self) -> float:
        return hoeffding_constant(self.delta, self.loss_bound)


@dataclass(frozen=True)
class RiskEstimate:
    """An estimator output with its method tag and diagnostics."""

    value: float
    method: str
    chosen_k: int | None = None
    diagnostics: dict = field(default_factory=dict)


def _check_alignment(losses: LossSample, val_sites: SiteSet) -> None:
    if len(losses) != len(val_sites):
        raise InputError(
            f"{len(losses)} losses for {len(val_sites)} validation sites"
        )


def holdout(losses: LossSample) -> RiskEstimate:
    """Unweighted mean of the validation losses, with its standard error."""
    values = losses.values
    mean = float(values.mean())
    n = values.shape[0]
    if n > 1:
        se = float(math.sqrt(np.sum((values - mean) ** 2) / (n * (n - 1))))
    else:
        se = None
    return RiskEstimate(value=mean, method=HOLDOUT, diagnostics={"holdout_se": se})


def knn_weights(val_sites: SiteSet, test_sites: SiteSet, k: int) -> np.ndarray:
    """Estimator weights over validation points for a fixed k.

    Weight n is the average over test sites of 1/|A| for the tie-inclusive
    neighbor sets A containing validation point n; the weights are a
    probability vector.
    """
    weights, _ = knn_weight_sweep(val_sites, test_sites, [k])
    return weights[0]


def knn_estimate(
    losses: LossSample, val_sites: SiteSet, test_sites: SiteSet, k: int
) -> RiskEstimate:
    """k-nearest-neighbor weighted risk estimate at the test sites."""
    _check_alignment(losses, val_sites)
    weights, radii = knn_weight_sweep(val_sites, test_sites, [k])
    value = float(weights[0] @ losses.values)
    return RiskEstimate(
        value=value,
        method=KNN,
        chosen_k=int(k),
        diagnostics={
            "rho_k": float(radii[0]),
            "weight_l2": float(np.linalg.norm(weights[0])),
        },
    )


def snn_objective(
    val_sites: SiteSet,
    test_sites: SiteSet,
    k: int,
    config: EstimatorConfig = EstimatorConfig(),
) -> dict:
    """Selection objective ``rho_k + C * ||w||_2`` and its two parts."""
    weights, radii = knn_weight_sweep(val_sites, test_sites, [k])
    weight_l2 = float(np.linalg.norm(weights[0]))
    rho_k = float(radii[0])
    return {
        "rho_k": rho_k,
        "weight_l2": weight_l2,
        "objective": rho_k + config.constant() * weight_l2,
    }


def snn_estimate(
    losses: LossSample,
    val_sites: SiteSet,
    test_sites: SiteSet,
    config: EstimatorConfig = EstimatorConfig(),
) -> RiskEstimate:
    """Adaptive nearest-neighbor risk estimate.

    Evaluates the selection objective for every k in the grid, picks the
    minimizer (ties going to the smallest k), and returns the k-NN
    estimate at that k. When ``config.lipschitz`` is set, diagnostics
    include the certified error bound at the chosen k.
    """
    _check_alignment(losses, val_sites)
    grid = config.resolved_k_grid(len(val_sites))
    weights, radii = knn_weight_sweep(val_sites, test_sites, grid)
    norms = np.linalg.norm(weights, axis=1)
    objectives = radii + config.constant() * norms
    best = int(np.argmin(objectives))  # first minimum = smallest k on ties
    value = float(weights[best] @ losses.values)
    diagnostics = {
        "rho_k": float(radii[best]),
        "weight_l2": float(norms[best]),
        "objective": float(objectives[best]),
    }
    if config.lipschitz is not None:
        diagnostics["certified_bound"] = float(
            config.lipschitz * radii[best] + config.constant() * norms[best]
        )
    return RiskEstimate(
        value=value, method=SNN, chosen_k=int(grid[best]), diagnostics=diagnostics
    )


def first_form_bound(
    val_sites: SiteSet,
    test_sites: SiteSet,
    k: int,
    config: EstimatorConfig = EstimatorConfig(),
    lipschitz: float = 1.0,
) -> float:
    """High-probability error bound ``L * rho_k + C * ||w||_2`` for the
    k-NN estimate, valid simultaneously over the noise in the losses."""
    lipschitz = check_nonnegative(lipschitz, "lipschitz")
    weights, radii = knn_weight_sweep(val_sites, test_sites, [k])
    return float(
        lipschitz * radii[0]
        + config.constant() * np.linalg.norm(weights[0])
    )


def second_form_bound(
    val_sites: SiteSet,
    test_sites: SiteSet,
    k: int,
    config: EstimatorConfig = EstimatorConfig(),
    lipschitz: float = 1.0,
) -> float:
    """Relaxation of :func:`first_form_bound` through ball counts.

    Replaces ``||w||_2`` with ``sqrt(max_n Q(B(s_n, rho_k)) / k)`` where
    Q(B) is the fraction of test sites within ``rho_k`` of validation
    point n. Never smaller than the first form on the same inputs.
    """
    lipschitz = check_nonnegative(lipschitz, "lipschitz")
    rho_k = kth_order_fill_distance(val_sites, test_sites, k)
    counts = count_within_batch(test_sites, val_sites, rho_k)
    max_q = counts.max() / len(test_sites)
    return float(
        lipschitz * rho_k + config.constant() * math.sqrt(max_q / k)
    )


def general_dense_bound(
    fill: float,
    dim: int,
    n_val: int,
    config: EstimatorConfig = EstimatorConfig(),
    lipschitz: float = 1.0,
) -> float:
    """Explicit error bound for the adaptive estimator on a unit cube.

    Depends on the fill distance of the validation sites in the whole
    cube rather than on a particular test set; holds for any arrangement
    of test sites. Uses the tuning constant gamma = 1/4 and
    ``C_L = max(1, lipschitz)``. For ``fill >= 1`` the degenerate bound
    ``(lipschitz * sqrt(dim) + C)`` applies.
    """
    fill = check_nonnegative(fill, "fill")
    dim = check_positive_int(dim, "dim")
    n_val = check_positive_int(n_val, "n_val")
    lipschitz = check_nonnegative(lipschitz, "lipschitz")
    conc = config.constant()
    if fill >= 1.0:
        return lipschitz * math.sqrt(dim) + conc
    gamma = 0.25
    c_l = max(1.0, lipschitz)
    exponent = dim / (dim + 2.0)
    scaled = fill**exponent
    variance_part = min(gamma**exponent * scaled, 1.0 / math.sqrt(n_val))
    return math.sqrt(2.0) * c_l * (4.0 / gamma**2 * scaled + variance_part * conc)


# ---------------------------------------------------------------------------
# scikit-learn style wrappers
# ---------------------------------------------------------------------------


class _SpatialRiskEstimator(BaseEstimator):
    """Shared fit machinery: store validation sites and losses."""

    def _metric(self, n_cols: int) -> Metric:
        if self.metric == "euclidean":
            return Metric.euclidean(n_cols)
        if self.metric == "haversine":
            return Metric.haversine(self.haversine_radius)
        raise InputError(f"unknown metric {self.metric!r}")

    def fit(self, X, y):
        """Store validation site coordinates ``X`` and per-point losses ``y``."""
        coords = as_float_array(
            np.asarray(X, dtype=float).reshape(len(X), -1), "X", ndim=2
        )
        metric = self._metric(coords.shape[1])
        self.val_sites_ = SiteSet(coords, metric)
        self.losses_ = LossSample(y, loss_bound=self.loss_bound)
        if len(self.losses_) != len(self.val_sites_):
            raise InputError("X and y have different lengths")
        return self

    def _test_sites(self, X) -> SiteSet:
        coords = as_float_array(
            np.asarray(X, dtype=float).reshape(len(X), -1), "X", ndim=2
        )
        return SiteSet(coords, self.val_sites_.metric)

    def predict(self, X=None) -> float:
        return self.estimate(X).value


class HoldoutRisk(_SpatialRiskEstimator):
    """Holdout test-risk estimator (ignores test sites by construction)."""

    def __init__(self, loss_bound: float = 1.0, metric: str = "euclidean",
                 haversine_radius: float = 1.0):
        self.loss_bound = loss_bound
        self.metric = metric
        self.haversine_radius = haversine_radius

    def estimate(self, X=None) -> RiskEstimate:
        return holdout(self.losses_)


class KNNRisk(_SpatialRiskEstimator):
    """Fixed-k nearest-neighbor test-risk estimator."""

    def __init__(self, k: int = 1, loss_bound: float = 1.0,
                 metric: str = "euclidean", haversine_radius: float = 1.0):
        self.k = k
        self.loss_bound = loss_bound
        self.metric = metric
        self.haversine_radius = haversine_radius

    def estimate(self, X) -> RiskEstimate:
        return knn_estimate(self.losses_, self.val_sites_, self._test_sites(X), self.k)


class SNNRisk(_SpatialRiskEstimator):
    """Adaptive nearest-neighbor test-risk estimator."""

    def __init__(self, delta: float = 0.1, loss_bound: float = 1.0,
                 k_grid=None, lipschitz=None,
                 metric: str = "euclidean", haversine_radius: float = 1.0):
        self.delta = delta
        self.loss_bound = loss_bound
        self.k_grid = k_grid
        self.lipschitz = lipschitz
        self.metric = metric
        self.haversine_radius = haversine_radius

    def _config(self) -> EstimatorConfig:
        k_grid = tuple(self.k_grid) if self.k_grid is not None else None
        return EstimatorConfig(
            delta=self.delta,
            loss_bound=self.loss_bound,
            k_grid=k_grid,
            lipschitz=self.lipschitz,
        )

    def estimate(self, X) -> RiskEstimate:
        return snn_estimate(
            self.losses_, self.val_sites_, self._test_sites(X), self._config()
        )
