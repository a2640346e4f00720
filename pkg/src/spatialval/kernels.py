"""Covariance kernels for Gaussian-process sampling and regression.

Kernels are callables on (n, d) feature matrices and return dense
covariance matrices. Composite kernels (`Sum`, `OnColumns`) let a single
feature matrix carry both spatial coordinates and covariates, with each
part acting on its own columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import InputError
from .validation import check_nonnegative, check_positive

_SQRT3 = math.sqrt(3.0)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b, "sqeuclidean")


class Kernel:
    """Base type: callable (n,d) x (m,d) -> (n,m) covariance matrix."""

    def __call__(self, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
        return self._evaluate(a, b)

    def _evaluate(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Matern32(Kernel):
    """Matérn kernel with smoothness 3/2: ``v (1 + sqrt(3) r / l) exp(-sqrt(3) r / l)``."""

    lengthscale: float
    variance: float = 1.0

    def __post_init__(self):
        check_positive(self.lengthscale, "lengthscale")
        check_nonnegative(self.variance, "variance")

    def _evaluate(self, a, b):
        scaled = _SQRT3 * np.sqrt(_sq_dists(a, b)) / self.lengthscale
        return self.variance * (1.0 + scaled) * np.exp(-scaled)


@dataclass(frozen=True)
class SquaredExponential(Kernel):
    """Gaussian kernel ``v exp(-r^2 / (2 l^2))``."""

    lengthscale: float
    variance: float = 1.0

    def __post_init__(self):
        check_positive(self.lengthscale, "lengthscale")
        check_nonnegative(self.variance, "variance")

    def _evaluate(self, a, b):
        return self.variance * np.exp(-_sq_dists(a, b) / (2.0 * self.lengthscale**2))


@dataclass(frozen=True)
class Exponential(Kernel):
    """Exponential (Matérn 1/2) kernel ``v exp(-r / l)``."""

    lengthscale: float
    variance: float = 1.0

    def __post_init__(self):
        check_positive(self.lengthscale, "lengthscale")
        check_nonnegative(self.variance, "variance")

    def _evaluate(self, a, b):
        return self.variance * np.exp(-np.sqrt(_sq_dists(a, b)) / self.lengthscale)


@dataclass(frozen=True)
class AnisotropicMatern32(Kernel):
    """Matérn 3/2 with one lengthscale per input dimension."""

    lengthscales: tuple
    variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", tuple(float(l) for l in self.lengthscales)
        )
        for l in self.lengthscales:
            check_positive(l, "lengthscale")
        check_nonnegative(self.variance, "variance")

    def _evaluate(self, a, b):
        scales = np.asarray(self.lengthscales)
        if a.shape[1] != scales.shape[0]:
            raise InputError(
                f"kernel has {scales.shape[0]} lengthscales, input has {a.shape[1]} columns"
            )
        scaled = _SQRT3 * np.sqrt(_sq_dists(a / scales, b / scales))
        return self.variance * (1.0 + scaled) * np.exp(-scaled)


@dataclass(frozen=True)
class Sum(Kernel):
    """Sum of kernels on the same inputs."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise InputError("Sum kernel needs at least one part")
        object.__setattr__(self, "parts", parts)

    def _evaluate(self, a, b):
        total = self.parts[0]._evaluate(a, b)
        for part in self.parts[1:]:
            total = total + part._evaluate(a, b)
        return total


@dataclass(frozen=True)
class OnColumns(Kernel):
    """Apply a base kernel to a column subset of the feature matrix."""

    base: Kernel
    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))

    def _evaluate(self, a, b):
        cols = list(self.columns)
        return self.base._evaluate(a[:, cols], b[:, cols])
