"""Test-risk estimation for spatial predictive methods at fixed test sites.

The estimators consume realized per-point losses at validation sites and
a set of test sites; the adaptive variant picks its neighbor count by
minimizing a geometric error bound. See the README for the CLI and file
formats.
"""

from .estimators import (
    EstimatorConfig,
    HoldoutRisk,
    KNNRisk,
    LossSample,
    RiskEstimate,
    SNNRisk,
    default_k_grid,
    first_form_bound,
    general_dense_bound,
    hoeffding_constant,
    holdout,
    knn_estimate,
    knn_weights,
    second_form_bound,
    snn_estimate,
    snn_objective,
)
from .exceptions import InputError, NumericalError, SpatialValError
from .geometry import (
    Metric,
    SiteSet,
    fill_distance,
    grid_prediction_bound,
    iid_infill_bound,
    kth_order_fill_distance,
    unit_ball_volume,
)
from .neighbors import NeighborIndex, NeighborSet, build

__all__ = [
    "EstimatorConfig", "HoldoutRisk", "KNNRisk", "LossSample", "RiskEstimate",
    "SNNRisk", "default_k_grid", "first_form_bound", "general_dense_bound",
    "hoeffding_constant", "holdout", "knn_estimate", "knn_weights",
    "second_form_bound", "snn_estimate", "snn_objective",
    "InputError", "NumericalError", "SpatialValError",
    "Metric", "SiteSet", "fill_distance", "grid_prediction_bound",
    "iid_infill_bound", "kth_order_fill_distance", "unit_ball_volume",
    "NeighborIndex", "NeighborSet", "build",
]

__version__ = "0.1.0"
