"""Synthetic data generators for the simulation experiments.

Three tasks are supported:

* ``grid`` -- clustered train/validation sites, test sites on a 50x50
  grid over [-0.5, 0.5]^2, Matérn-3/2 spatial fields.
* ``point`` -- uniform train/validation sites, a single test site at the
  origin, squared-exponential fields.
* ``model-selection`` -- 1-d sites S = sqrt(U) with responses
  |S - 0.5| + uniform noise, test sites on the 21-point grid {m/20}.

For the two field tasks, covariates are a pair of independent GP draws
over all sites jointly (train, validation, and test share one field
realization), and the response mean is a single joint GP draw whose
covariance is a sum of a spatial kernel and a kernel on the covariate
values. This requires factorizing dense covariance matrices of side
n_train + n_val + n_test, about 1 GB of working memory at the largest
stock size (n_val = 8000); conditional block sampling would be an
equivalent alternative if that ever becomes a constraint.

Randomness is PCG64 with a fixed stream-splitting scheme: the task seed
feeds ``numpy.random.SeedSequence(seed).spawn(...)``, with one child
stream per purpose in a documented order (see each generator), so
datasets are bit-reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, NumericalError
from .geometry import SiteSet
from .kernels import Kernel, Matern32, SquaredExponential
from .validation import check_nonnegative, check_positive_int

GRID = "grid"
POINT = "point"
MODEL_SELECTION = "model-selection"

DEFAULT_JITTER = 1e-12
MAX_JITTER = 1e-6

NOISE_VARIANCE = 0.1
N_TEST_DRAWS = 2500  # Monte Carlo draws behind the empirical test risk

# Cluster process parameters: component means uniform on the domain,
# isotropic standard deviations uniform on this range.
_CLUSTER_STD_RANGE = (0.05, 0.15)
_DOMAIN_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class SyntheticTask:
    """A fully specified synthetic experiment instance."""

    kind: str
    n_train: int
    n_val: int
    seed: int
    noise_variance: float = NOISE_VARIANCE

    def __post_init__(self):
        if self.kind not in (GRID, POINT, MODEL_SELECTION):
            raise InputError(f"unknown task kind {self.kind!r}")
        check_positive_int(self.n_train, "n_train")
        check_positive_int(self.n_val, "n_val")
        check_nonnegative(self.noise_variance, "noise_variance")


def grid_task(n_val: int, seed: int) -> SyntheticTask:
    return SyntheticTask(GRID, n_train=1000, n_val=n_val, seed=seed)


def point_task(n_val: int, seed: int) -> SyntheticTask:
    return SyntheticTask(POINT, n_train=1000, n_val=n_val, seed=seed)


def model_selection_task(seed: int, n_val: int = 75) -> SyntheticTask:
    return SyntheticTask(MODEL_SELECTION, n_train=100, n_val=n_val, seed=seed)


@dataclass(frozen=True)
class Split:
    sites: SiteSet
    covariates: np.ndarray | None
    responses: np.ndarray


@dataclass(frozen=True)
class GeneratedDataset:
    """Train/validation/test splits plus the mean response at test sites.

    ``true_mean_at_test`` is E[Y | site] at each test site (for the field
    tasks this is the noiseless field value; for model selection it
    includes the mean of the uniform noise). For the point task the test
    split holds ``N_TEST_DRAWS`` response draws at the single test site.
    """

    train: Split
    val: Split
    test: Split
    true_mean_at_test: np.ndarray


def grid_test_points(side: int = 50) -> np.ndarray:
    """Regular ``side x side`` grid on [-0.5, 0.5]^2, row-major."""
    coords = -0.5 + np.arange(side) / (side - 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def model_selection_test_points() -> np.ndarray:
    """The 21 sites {m/20 : 0 <= m <= 20} as a column."""
    return (np.arange(21) / 20.0).reshape(-1, 1)


def _cholesky_with_jitter(cov: np.ndarray, jitter: float) -> np.ndarray:
    """Cholesky factor of ``cov + jitter*I``, escalating jitter x10 as needed."""
    n = cov.shape[0]
    current = jitter
    while True:
        try:
            return np.linalg.cholesky(cov + current * np.eye(n))
        except np.linalg.LinAlgError:
            if current >= MAX_JITTER:
                eigs = np.linalg.eigvalsh(cov)
                raise NumericalError(
                    "covariance factorization failed at jitter "
                    f"{current:g}; eigenvalue range [{eigs[0]:.3e}, {eigs[-1]:.3e}]"
                ) from None
            current = current * 10.0 if current > 0 else DEFAULT_JITTER


def sample_gp(
    features, kernel: Kernel, rng: np.random.Generator, jitter: float = DEFAULT_JITTER
) -> np.ndarray:
    """Exact joint draw from a zero-mean GP at the given feature rows."""
    feats = features.points if isinstance(features, SiteSet) else np.atleast_2d(features)
    if feats.shape[0] == 0:
        raise InputError("cannot sample a GP at zero locations")
    factor = _cholesky_with_jitter(kernel(feats), jitter)
    return factor @ rng.standard_normal(feats.shape[0])


def clustered_sites(n: int, rng: np.random.Generator) -> SiteSet:
    """Sequentially clustered sites on (roughly) [-0.5, 0.5]^2.

    Points come from a growing Gaussian mixture: at every step a fresh
    component (pseudo-weight 1) competes with the existing components'
    weights; whichever component generates the point has its weight w
    updated by ``w += 1/w`` (so a new component's weight becomes 2 after
    first use). Component means are uniform on the domain and standard
    deviations uniform on [0.05, 0.15]. The weight growth is slower than
    a Chinese-restaurant process, giving many moderate clusters.
    """
    n = check_positive_int(n, "n")
    points, _ = _clustered_sites_with_components(n, rng)
    return SiteSet.euclidean(points)


def _clustered_sites_with_components(
    n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Clustered points plus the mixture component that produced each one.

    Per step the stream is consumed in a fixed order: one uniform for the
    component choice, then (for a new component) two uniforms for the mean
    and one for the standard deviation, then one bivariate normal draw.
    """
    means: list[np.ndarray] = []
    stds: list[float] = []
    weights: list[float] = []
    total = 0.0
    points = np.empty((n, 2))
    components = np.empty(n, dtype=np.int64)
    for i in range(n):
        # Existing components in order, then a fresh component of weight 1.
        u = rng.random() * (total + 1.0)
        choice = int(np.searchsorted(np.cumsum(weights), u, side="right"))
        if choice == len(weights):
            means.append(rng.uniform(-_DOMAIN_HALF_WIDTH, _DOMAIN_HALF_WIDTH, size=2))
            stds.append(float(rng.uniform(*_CLUSTER_STD_RANGE)))
            weights.append(1.0)
            total += 1.0
        points[i] = means[choice] + stds[choice] * rng.standard_normal(2)
        components[i] = choice
        bump = 1.0 / weights[choice]
        weights[choice] += bump
        total += bump
    return points, components


def _field_task_kernels(kind: str) -> tuple[Kernel, Kernel, Kernel]:
    """(covariate kernel on sites, spatial response kernel, covariate-space
    response kernel) for the two GP-field tasks."""
    if kind == GRID:
        return (
            Matern32(lengthscale=0.3, variance=1.0),
            Matern32(lengthscale=0.5, variance=0.5),
            Matern32(lengthscale=1.0, variance=1.0),
        )
    return (
        SquaredExponential(lengthscale=0.3, variance=1.0),
        SquaredExponential(lengthscale=0.5, variance=0.5),
        SquaredExponential(lengthscale=1.0, variance=1.0),
    )


def _generate_field_task(task: SyntheticTask) -> GeneratedDataset:
    # Stream order: sites, covariate 1, covariate 2, response field,
    # train noise, validation noise, test noise.
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(task.seed).spawn(7)]
    n_train, n_val = task.n_train, task.n_val

    if task.kind == GRID:
        pts = clustered_sites(n_train + n_val, rngs[0]).points
        test_pts = grid_test_points()
    else:
        pts = rngs[0].uniform(-0.5, 0.5, size=(n_train + n_val, 2))
        test_pts = np.zeros((1, 2))
    n_test_sites = test_pts.shape[0]
    all_pts = np.vstack([pts, test_pts])
    n_all = all_pts.shape[0]

    cov_kernel, spatial_kernel, response_cov_kernel = _field_task_kernels(task.kind)
    cov_factor = _cholesky_with_jitter(cov_kernel(all_pts), DEFAULT_JITTER)
    chi = np.column_stack(
        [cov_factor @ rngs[1].standard_normal(n_all),
         cov_factor @ rngs[2].standard_normal(n_all)]
    )
    response_cov = spatial_kernel(all_pts) + response_cov_kernel(chi)
    mean_field = _cholesky_with_jitter(response_cov, DEFAULT_JITTER) @ rngs[
        3
    ].standard_normal(n_all)

    sd = np.sqrt(task.noise_variance)
    y_train = mean_field[:n_train] + sd * rngs[4].standard_normal(n_train)
    y_val = mean_field[n_train : n_train + n_val] + sd * rngs[5].standard_normal(n_val)
    if task.kind == GRID:
        y_test = mean_field[-n_test_sites:] + sd * rngs[6].standard_normal(n_test_sites)
    else:
        y_test = mean_field[-1] + sd * rngs[6].standard_normal(N_TEST_DRAWS)

    sl_train = slice(0, n_train)
    sl_val = slice(n_train, n_train + n_val)
    sl_test = slice(n_all - n_test_sites, n_all)
    return GeneratedDataset(
        train=Split(SiteSet.euclidean(pts[:n_train]), chi[sl_train], y_train),
        val=Split(SiteSet.euclidean(pts[n_train:]), chi[sl_val], y_val),
        test=Split(SiteSet.euclidean(test_pts), chi[sl_test], y_test),
        true_mean_at_test=mean_field[sl_test].copy(),
    )


def _generate_model_selection(task: SyntheticTask) -> GeneratedDataset:
    # Stream order: train sites, validation sites, train noise,
    # validation noise, test noise.
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(task.seed).spawn(5)]
    s_train = np.sqrt(rngs[0].uniform(0.0, 1.0, size=task.n_train))
    s_val = np.sqrt(rngs[1].uniform(0.0, 1.0, size=task.n_val))
    s_test = model_selection_test_points().ravel()

    def responses(s, rng):
        return np.abs(s - 0.5) + rng.uniform(0.0, 0.1, size=s.shape[0])

    return GeneratedDataset(
        train=Split(SiteSet.euclidean(s_train), None, responses(s_train, rngs[2])),
        val=Split(SiteSet.euclidean(s_val), None, responses(s_val, rngs[3])),
        test=Split(SiteSet.euclidean(s_test), None, responses(s_test, rngs[4])),
        true_mean_at_test=np.abs(s_test - 0.5) + 0.05,
    )


def generate(task: SyntheticTask) -> GeneratedDataset:
    """Generate a dataset for ``task``; identical tasks give identical data."""
    if task.kind == MODEL_SELECTION:
        return _generate_model_selection(task)
    return _generate_field_task(task)


def dataset_to_csv(dataset: GeneratedDataset, path) -> None:
    """Write one row per point: split tag, site coords, covariates, response."""
    import csv

    dim = dataset.train.sites.points.shape[1]
    n_cov = 0
    if dataset.train.covariates is not None:
        n_cov = dataset.train.covariates.shape[1]
    header = (
        ["split"]
        + [f"s{i + 1}" for i in range(dim)]
        + [f"x{i + 1}" for i in range(n_cov)]
        + ["response"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for tag, split in (("train", dataset.train), ("val", dataset.val),
                           ("test", dataset.test)):
            n_sites = len(split.sites)
            for i in range(split.responses.shape[0]):
                j = i % n_sites  # test responses may outnumber test sites
                row = [tag] + [repr(float(v)) for v in split.sites.points[j]]
                if n_cov:
                    row += [repr(float(v)) for v in split.covariates[j]]
                row.append(repr(float(split.responses[i])))
                writer.writerow(row)
