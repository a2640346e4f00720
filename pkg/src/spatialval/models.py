"""Predictive methods whose test risk the experiments estimate.

All predictors follow the scikit-learn fit/predict convention on plain
feature matrices and are deterministic once fit. They are consumed by the
experiment harness and by the CLI; the risk estimators themselves never
see a model, only realized losses.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator

from .exceptions import InputError, NumericalError
from .geometry import Metric
from .kernels import (
    AnisotropicMatern32,
    Kernel,
    Matern32,
    OnColumns,
    SquaredExponential,
    Sum,
)
from .validation import as_float_array, check_positive

# Candidate geographically-weighted-regression lengthscales, in km.
GWR_LENGTHSCALES_KM = (25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0,
                       500.0, 750.0, 1000.0)
EARTH_RADIUS_KM = 6371.0

_SOLVE_RIDGE = 1e-10


def _as_features(X) -> np.ndarray:
    arr = as_float_array(np.asarray(X, dtype=float), "X")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


class ConstantPredictor(BaseEstimator):
    """Predicts a fixed value everywhere."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def fit(self, X=None, y=None):
        return self

    def predict(self, X) -> np.ndarray:
        return np.full(len(X), float(self.value))


class AffineL1Regression(BaseEstimator):
    """Affine model on R^1 fit by minimizing the mean absolute residual.

    Solved exactly: some optimal line passes through two data points, so
    all lines through point pairs are enumerated and the best kept.
    Objective ties break to the lexicographically smallest (slope,
    intercept).
    """

    def fit(self, X, y):
        s = _as_features(X).ravel()
        y = as_float_array(y, "y", ndim=1)
        if s.shape[0] != y.shape[0]:
            raise InputError("X and y have different lengths")
        if s.shape[0] < 2 or np.unique(s).shape[0] < 2:
            raise InputError("need at least two distinct sites to fit a line")
        i, j = np.triu_indices(s.shape[0], k=1)
        keep = s[i] != s[j]
        i, j = i[keep], j[keep]
        slopes = (y[j] - y[i]) / (s[j] - s[i])
        intercepts = y[i] - slopes * s[i]
        residuals = np.abs(y[None, :] - (intercepts[:, None] + slopes[:, None] * s))
        objectives = residuals.mean(axis=1)
        best = objectives.min()
        tied = np.flatnonzero(objectives == best)
        order = np.lexsort((intercepts[tied], slopes[tied]))
        pick = tied[order[0]]
        self.intercept_ = float(intercepts[pick])
        self.slope_ = float(slopes[pick])
        self.objective_ = float(best)
        return self

    def predict(self, X) -> np.ndarray:
        s = _as_features(X).ravel()
        return self.intercept_ + self.slope_ * s


class GPRegression(BaseEstimator):
    """Gaussian-process regression; predictions are the posterior mean.

    ``kernel`` acts on whole feature rows, so composite kernels
    (:class:`~spatialval.kernels.Sum` of :class:`~spatialval.kernels.OnColumns`)
    can mix spatial coordinates and covariates in one matrix. The prior
    mean is zero unless ``center=True``, which subtracts the training
    response mean before solving and adds it back at prediction.
    """

    def __init__(self, kernel: Kernel, noise_variance: float = 0.1,
                 ridge: float = _SOLVE_RIDGE, center: bool = False):
        self.kernel = kernel
        self.noise_variance = noise_variance
        self.ridge = ridge
        self.center = center

    def fit(self, X, y):
        X = _as_features(X)
        y = as_float_array(y, "y", ndim=1)
        if X.shape[0] != y.shape[0]:
            raise InputError("X and y have different lengths")
        shift = y.mean() if self.center else 0.0
        gram = self.kernel(X)
        gram[np.diag_indices_from(gram)] += self.noise_variance + self.ridge
        try:
            factor = cho_factor(gram, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"GP solve failed: {exc}") from None
        self.X_ = X
        self.shift_ = float(shift)
        self.chol_ = factor
        self.alpha_ = cho_solve(factor, y - shift)
        self.y_ = y
        return self

    def predict(self, X) -> np.ndarray:
        cross = self.kernel(_as_features(X), self.X_)
        return self.shift_ + cross @ self.alpha_

    def log_marginal_likelihood(self) -> float:
        n = self.y_.shape[0]
        resid = self.y_ - self.shift_
        log_det = 2.0 * np.sum(np.log(np.diag(self.chol_[0])))
        return float(
            -0.5 * resid @ self.alpha_ - 0.5 * log_det - 0.5 * n * np.log(2 * np.pi)
        )


class GWRegression(BaseEstimator):
    """Geographically weighted linear regression.

    Feature rows are ``[site coordinates | covariates]`` with the first
    ``n_site_cols`` columns holding the coordinates (``(lat, lon)`` in
    radians for the haversine metric). Each prediction solves a weighted
    least-squares problem with distance-decay weights
    ``exp(-d / (2 * lengthscale^2))``; pass ``squared=True`` to decay with
    the squared distance instead. A small ridge keeps the 3x3 normal
    equations well posed.
    """

    def __init__(self, lengthscale: float, n_site_cols: int = 2,
                 metric: str = "haversine", sphere_radius: float = EARTH_RADIUS_KM,
                 squared: bool = False, ridge: float = _SOLVE_RIDGE):
        self.lengthscale = lengthscale
        self.n_site_cols = n_site_cols
        self.metric = metric
        self.sphere_radius = sphere_radius
        self.squared = squared
        self.ridge = ridge

    def _metric(self) -> Metric:
        if self.metric == "haversine":
            return Metric.haversine(self.sphere_radius)
        return Metric.euclidean(self.n_site_cols)

    def fit(self, X, y):
        check_positive(self.lengthscale, "lengthscale")
        X = _as_features(X)
        y = as_float_array(y, "y", ndim=1)
        if X.shape[0] != y.shape[0]:
            raise InputError("X and y have different lengths")
        if X.shape[0] < X.shape[1] - self.n_site_cols + 1 or X.shape[0] < 3:
            raise InputError("too few training points for the local regressions")
        self.sites_ = X[:, : self.n_site_cols]
        self.design_ = np.column_stack(
            [np.ones(X.shape[0]), X[:, self.n_site_cols :]]
        )
        self.y_ = y
        return self

    def _weights_at(self, site: np.ndarray) -> np.ndarray:
        dists = self._metric().pairwise(site.reshape(1, -1), self.sites_)[0]
        if self.squared:
            dists = dists * dists
        return np.exp(-dists / (2.0 * self.lengthscale**2))

    def _solve_at(self, site: np.ndarray) -> np.ndarray:
        w = self._weights_at(site)
        if w.sum() <= 0.0:
            raise NumericalError("all regression weights underflowed to zero")
        wa = self.design_ * w[:, None]
        normal = self.design_.T @ wa
        normal[np.diag_indices_from(normal)] += self.ridge
        rhs = wa.T @ self.y_
        try:
            return np.linalg.solve(normal, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"local regression solve failed: {exc}") from None

    def predict(self, X) -> np.ndarray:
        X = _as_features(X)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            beta = self._solve_at(row[: self.n_site_cols])
            out[i] = np.concatenate(([1.0], row[self.n_site_cols :])) @ beta
        return out


def loo_select_lengthscale(
    X, y, candidates=GWR_LENGTHSCALES_KM, **gwr_params
) -> float:
    """Pick the GWR lengthscale by leave-one-out mean squared error.

    Evaluates each candidate by predicting every training point from the
    remaining ones and returns the candidate with the smallest MSE (ties
    to the smaller lengthscale).
    """
    X = _as_features(X)
    y = as_float_array(y, "y", ndim=1)
    best_ls, best_mse = None, np.inf
    for ls in candidates:
        model = GWRegression(lengthscale=float(ls), **gwr_params).fit(X, y)
        design = model.design_
        n = X.shape[0]
        preds = np.empty(n)
        for i in range(n):
            w = model._weights_at(model.sites_[i])
            w[i] = 0.0  # leave the evaluation point out
            if w.sum() <= 0.0:
                preds[i] = np.nan
                continue
            wa = design * w[:, None]
            normal = design.T @ wa
            normal[np.diag_indices_from(normal)] += model.ridge
            beta = np.linalg.solve(normal, wa.T @ y)
            preds[i] = design[i] @ beta
        mse = float(np.nanmean((preds - y) ** 2))
        if mse < best_mse:
            best_ls, best_mse = float(ls), mse
    if best_ls is None:
        raise NumericalError("no candidate lengthscale produced predictions")
    return best_ls


def fit_spatial_gp_baseline(
    sites, y, optimize_steps: int = 0, step_size: float = 0.1
) -> GPRegression:
    """Matérn-3/2 GP on spatial coordinates with heuristic hyperparameters.

    Lengthscales start at the per-coordinate standard deviation, the
    kernel variance at the response variance, and the noise variance at
    0.1x the response variance; the training mean is removed and restored
    at prediction. ``optimize_steps`` fixed-size gradient-ascent steps on
    the marginal likelihood in log-parameter space refine the
    initialization (finite-difference gradients; 0 keeps the heuristic).
    """
    sites = _as_features(sites)
    y = as_float_array(y, "y", ndim=1)
    log_params = np.log(
        np.concatenate(
            [np.maximum(sites.std(axis=0), 1e-6),
             [max(y.var(), 1e-12)], [max(0.1 * y.var(), 1e-12)]]
        )
    )

    def build(lp: np.ndarray) -> GPRegression:
        *scales, variance, noise = np.exp(lp)
        kernel = AnisotropicMatern32(tuple(scales), variance)
        return GPRegression(kernel, noise_variance=noise, center=True).fit(sites, y)

    model = build(log_params)
    if optimize_steps > 0:
        eps = 1e-4
        for _ in range(optimize_steps):
            base = model.log_marginal_likelihood()
            grad = np.zeros_like(log_params)
            for i in range(log_params.shape[0]):
                bumped = log_params.copy()
                bumped[i] += eps
                grad[i] = (build(bumped).log_marginal_likelihood() - base) / eps
            log_params = log_params + step_size * grad
            model = build(log_params)
    return model


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------


def _kernel_to_dict(kernel: Kernel) -> dict:
    if isinstance(kernel, Matern32):
        return {"kind": "matern32", "lengthscale": kernel.lengthscale,
                "variance": kernel.variance}
    if isinstance(kernel, SquaredExponential):
        return {"kind": "squared_exponential", "lengthscale": kernel.lengthscale,
                "variance": kernel.variance}
    if isinstance(kernel, AnisotropicMatern32):
        return {"kind": "anisotropic_matern32",
                "lengthscales": list(kernel.lengthscales),
                "variance": kernel.variance}
    if isinstance(kernel, Sum):
        return {"kind": "sum", "parts": [_kernel_to_dict(p) for p in kernel.parts]}
    if isinstance(kernel, OnColumns):
        return {"kind": "on_columns", "base": _kernel_to_dict(kernel.base),
                "columns": list(kernel.columns)}
    raise InputError(f"cannot serialize kernel {type(kernel).__name__}")


def _kernel_from_dict(spec: dict) -> Kernel:
    kind = spec["kind"]
    if kind == "matern32":
        return Matern32(spec["lengthscale"], spec["variance"])
    if kind == "squared_exponential":
        return SquaredExponential(spec["lengthscale"], spec["variance"])
    if kind == "anisotropic_matern32":
        return AnisotropicMatern32(tuple(spec["lengthscales"]), spec["variance"])
    if kind == "sum":
        return Sum(tuple(_kernel_from_dict(p) for p in spec["parts"]))
    if kind == "on_columns":
        return OnColumns(_kernel_from_dict(spec["base"]), tuple(spec["columns"]))
    raise InputError(f"unknown kernel kind {kind!r}")


def save_predictor(predictor, path, training_data_ref: str | None = None) -> None:
    """Persist a predictor as JSON: kind, parameters, training-data reference.

    Parametric predictors are self-contained; GP and GWR predictors store
    their hyperparameters plus ``training_data_ref`` (a caller-meaningful
    pointer, e.g. a CSV path) and must be re-fit on that data when loaded.
    """
    if isinstance(predictor, ConstantPredictor):
        payload = {"kind": "constant", "value": predictor.value}
    elif isinstance(predictor, AffineL1Regression):
        payload = {"kind": "affine_l1", "intercept": predictor.intercept_,
                   "slope": predictor.slope_}
    elif isinstance(predictor, GPRegression):
        payload = {"kind": "gp", "kernel": _kernel_to_dict(predictor.kernel),
                   "noise_variance": predictor.noise_variance,
                   "ridge": predictor.ridge, "center": predictor.center,
                   "training_data": training_data_ref}
    elif isinstance(predictor, GWRegression):
        payload = {"kind": "gwr", "lengthscale": predictor.lengthscale,
                   "n_site_cols": predictor.n_site_cols, "metric": predictor.metric,
                   "sphere_radius": predictor.sphere_radius,
                   "squared": predictor.squared, "ridge": predictor.ridge,
                   "training_data": training_data_ref}
    else:
        raise InputError(f"cannot serialize predictor {type(predictor).__name__}")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_predictor(path, training_data: tuple | None = None):
    """Load a predictor saved by :func:`save_predictor`.

    ``training_data`` is an ``(X, y)`` pair, required for predictor kinds
    that re-fit on load (GP and GWR).
    """
    with open(path) as fh:
        payload = json.load(fh)
    kind = payload.get("kind")
    if kind == "constant":
        return ConstantPredictor(payload["value"])
    if kind == "affine_l1":
        model = AffineL1Regression()
        model.intercept_ = payload["intercept"]
        model.slope_ = payload["slope"]
        return model
    if kind in ("gp", "gwr"):
        if training_data is None:
            raise InputError(
                f"loading a {kind!r} predictor requires training_data "
                f"(stored reference: {payload.get('training_data')!r})"
            )
        X, y = training_data
        if kind == "gp":
            model = GPRegression(
                _kernel_from_dict(payload["kernel"]),
                noise_variance=payload["noise_variance"],
                ridge=payload["ridge"], center=payload["center"],
            )
        else:
            model = GWRegression(
                lengthscale=payload["lengthscale"],
                n_site_cols=payload["n_site_cols"], metric=payload["metric"],
                sphere_radius=payload["sphere_radius"],
                squared=payload["squared"], ridge=payload["ridge"],
            )
        return model.fit(X, y)
    raise InputError(f"unknown predictor kind {kind!r}")
