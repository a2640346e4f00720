"""Experiment orchestration and CSV persistence.

Runs the three synthetic experiments (grid prediction, point prediction,
model selection) across seeds and validation-set sizes, writing one
result row per (seed, n_val, estimator) to an append-only CSV. For a
fixed seed the validation subsets are nested: the rows at a smaller
n_val use a prefix of the same generated sites and losses, and the loss
draws are fixed across the schedule.

Also home to the ad-hoc estimation entry point that consumes user CSVs
of validation losses and test sites.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import (
    EstimatorConfig,
    LossSample,
    RiskEstimate,
    holdout,
    knn_estimate,
    knn_weights,
    snn_estimate,
    first_form_bound,
    second_form_bound,
)
from .exceptions import InputError
from .geometry import Metric, SiteSet, kth_order_fill_distance
from .kernels import Matern32, OnColumns, SquaredExponential, Sum
from .models import AffineL1Regression, ConstantPredictor, GPRegression
from .simulate import (
    GRID,
    MODEL_SELECTION,
    POINT,
    GeneratedDataset,
    generate,
    grid_task,
    model_selection_task,
    point_task,
)

# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def truncated_squared(a, b) -> np.ndarray:
    """Squared error capped at 1, so losses stay in [0, 1]."""
    return np.minimum(1.0, (np.asarray(a, dtype=float) - b) ** 2)


def absolute(a, b) -> np.ndarray:
    return np.abs(np.asarray(a, dtype=float) - b)


LOSSES = {"truncated_squared": truncated_squared, "absolute": absolute}


def empirical_test_risk(test_responses, predictions, loss=truncated_squared) -> float:
    """Monte Carlo average of realized losses at the test sites."""
    responses = np.asarray(test_responses, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if responses.size == 0:
        raise InputError("no test responses")
    return float(np.mean(loss(responses, predictions)))


# ---------------------------------------------------------------------------
# Experiment specification and result rows
# ---------------------------------------------------------------------------

DESK_SCHEDULE = (250, 500, 1000, 2000)
FULL_SCHEDULE = (250, 500, 1000, 2000, 4000, 8000)
MODEL_SELECTION_SCHEDULE = tuple(range(5, 80, 5))
DESK_SEEDS = tuple(range(20))
FULL_SEEDS = tuple(range(100))
MODEL_SELECTION_SEEDS = tuple(range(100))

ESTIMATOR_LABELS = ("holdout", "1nn", "snn")

RESULT_SCHEMA_LINE = "# spatialval-results v1"
RESULT_COLUMNS = (
    "seed", "n_val", "estimator", "value", "empirical_risk",
    "abs_error", "rel_error", "chosen_k", "selected_model",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: task, seeds, validation sizes, estimator settings."""

    task: str
    seeds: tuple = DESK_SEEDS
    n_val_schedule: tuple | None = None
    config: EstimatorConfig = field(default_factory=EstimatorConfig)
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.task not in (GRID, POINT, MODEL_SELECTION):
            raise InputError(f"unknown task {self.task!r}")
        schedule = self.n_val_schedule
        if schedule is None:
            schedule = (
                MODEL_SELECTION_SCHEDULE if self.task == MODEL_SELECTION
                else DESK_SCHEDULE
            )
        schedule = tuple(int(n) for n in schedule)
        if any(b < a for a, b in zip(schedule, schedule[1:])) or not schedule:
            raise InputError("n_val schedule must be nondecreasing and non-empty")
        object.__setattr__(self, "n_val_schedule", schedule)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def full_profile(spec: ExperimentSpec) -> ExperimentSpec:
    """The paper-scale profile: 100 seeds, full n_val schedule."""
    if spec.task == MODEL_SELECTION:
        return replace(spec, seeds=MODEL_SELECTION_SEEDS)
    return replace(spec, seeds=FULL_SEEDS, n_val_schedule=FULL_SCHEDULE)


def _format_cell(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _result_row(seed, n_val, label, estimate: RiskEstimate, emp_risk,
                selected_model="") -> dict:
    value = estimate.value
    return {
        "seed": seed,
        "n_val": n_val,
        "estimator": label,
        "value": value,
        "empirical_risk": emp_risk,
        "abs_error": abs(value - emp_risk),
        "rel_error": (emp_risk - value) / emp_risk if emp_risk != 0 else "",
        "chosen_k": estimate.chosen_k if estimate.chosen_k is not None else "",
        "selected_model": selected_model,
    }


# ---------------------------------------------------------------------------
# Risk estimation experiments (grid and point tasks)
# ---------------------------------------------------------------------------


def _field_model_kernel(kind: str, spatial_ls=0.5, spatial_var=0.5,
                        cov_ls=1.0, cov_var=1.0) -> Sum:
    """Prediction kernel on rows [s1, s2, x1]: the data-generating response
    kernel family with only the first covariate retained."""
    base = Matern32 if kind == GRID else SquaredExponential
    return Sum((
        OnColumns(base(spatial_ls, spatial_var), (0, 1)),
        OnColumns(base(cov_ls, cov_var), (2,)),
    ))


def _fit_field_predictor(kind: str, dataset: GeneratedDataset,
                         optimize: bool = True) -> GPRegression:
    """GP posterior-mean predictor on [site, first covariate] features.

    The kernel keeps the data-generating family and structure but sees only
    the first covariate. Hyperparameters (both lengthscales and variances,
    plus the observation-noise variance) start at the data-generating
    values and are tuned by maximizing the training marginal likelihood,
    which lets the spatial term partly absorb the dropped covariate.
    """
    features = np.column_stack(
        [dataset.train.sites.points, dataset.train.covariates[:, 0]]
    )
    y = dataset.train.responses
    theta = np.log([0.5, 0.5, 1.0, 1.0, 0.1])
    if optimize:
        theta = _maximize_marginal_likelihood(kind, features, y, theta)
    spatial_ls, spatial_var, cov_ls, cov_var, noise = np.exp(theta)
    kernel = _field_model_kernel(kind, spatial_ls, spatial_var, cov_ls, cov_var)
    return GPRegression(kernel, noise_variance=float(noise)).fit(features, y)


def _maximize_marginal_likelihood(kind, features, y, theta0) -> np.ndarray:
    """L-BFGS-B over log(spatial_ls, spatial_var, cov_ls, cov_var, noise).

    Distance matrices are computed once per fit; each step rebuilds the
    covariance, refactorizes, and uses the closed-form gradient
    0.5 * tr((K^-1 - a a^T) dK) with a = K^-1 y.
    """
    from scipy.linalg import cho_factor, cho_solve
    from scipy.optimize import minimize
    from scipy.spatial.distance import pdist, squareform

    n = features.shape[0]
    d_spatial = squareform(pdist(features[:, :2]))
    d_cov = squareform(pdist(features[:, 2:3]))
    sqrt3 = np.sqrt(3.0)

    def part_and_grad(dists, ls, var):
        """Kernel block and its derivative w.r.t. log-lengthscale."""
        if kind == GRID:
            scaled = sqrt3 * dists / ls
            decay = np.exp(-scaled)
            return var * (1.0 + scaled) * decay, var * scaled**2 * decay
        sq = (dists * dists) / (2.0 * ls * ls)
        block = var * np.exp(-sq)
        return block, block * 2.0 * sq

    def objective(theta):
        spatial_ls, spatial_var, cov_ls, cov_var, noise = np.exp(theta)
        k_sp, dk_sp = part_and_grad(d_spatial, spatial_ls, spatial_var)
        k_cov, dk_cov = part_and_grad(d_cov, cov_ls, cov_var)
        gram = k_sp + k_cov
        gram[np.diag_indices_from(gram)] += noise + 1e-10
        try:
            factor = cho_factor(gram, lower=True)
        except np.linalg.LinAlgError:
            return 1e12, np.zeros_like(theta)
        alpha = cho_solve(factor, y)
        value = float(
            0.5 * y @ alpha + np.log(np.diag(factor[0])).sum()
            + 0.5 * n * np.log(2 * np.pi)
        )
        inv = cho_solve(factor, np.eye(n))
        trace_mat = inv - np.outer(alpha, alpha)  # d(-lml)/dK = 0.5 * this

        def direction(block):
            return 0.5 * float(np.sum(trace_mat * block))

        grad = np.array([
            direction(dk_sp),
            direction(k_sp),      # d/d log var is the block itself
            direction(dk_cov),
            direction(k_cov),
            0.5 * noise * float(np.trace(trace_mat)),
        ])
        return value, grad

    bounds = [(np.log(1e-2), np.log(1e2))] * 4 + [(np.log(1e-4), np.log(1e1))]
    result = minimize(objective, theta0, method="L-BFGS-B", jac=True,
                      bounds=bounds, options={"maxiter": 25})
    if result.fun < objective(np.asarray(theta0))[0]:
        return result.x
    return np.asarray(theta0)


def _predict_features(split) -> np.ndarray:
    return np.column_stack([split.sites.points, split.covariates[:, 0]])


def run_risk_seed(task_kind: str, seed: int, schedule, config: EstimatorConfig,
                  loss=truncated_squared) -> list[dict]:
    """All result rows for one seed of the grid or point task."""
    maker = grid_task if task_kind == GRID else point_task
    dataset = generate(maker(max(schedule), seed))
    predictor = _fit_field_predictor(task_kind, dataset)

    val_predictions = predictor.predict(_predict_features(dataset.val))
    losses_all = loss(dataset.val.responses, val_predictions)
    test_predictions = predictor.predict(_predict_features(dataset.test))
    if task_kind == POINT:
        # 2500 response draws at the single site
        emp_risk = empirical_test_risk(dataset.test.responses, test_predictions[0], loss)
    else:
        emp_risk = empirical_test_risk(dataset.test.responses, test_predictions, loss)

    test_sites = dataset.test.sites
    rows = []
    for n_val in schedule:
        val_sites = dataset.val.sites.prefix(n_val)
        sample = LossSample(losses_all[:n_val], loss_bound=config.loss_bound)
        rows.append(_result_row(seed, n_val, "holdout", holdout(sample), emp_risk))
        rows.append(_result_row(
            seed, n_val, "1nn", knn_estimate(sample, val_sites, test_sites, 1),
            emp_risk,
        ))
        rows.append(_result_row(
            seed, n_val, "snn", snn_estimate(sample, val_sites, test_sites, config),
            emp_risk,
        ))
    return rows


# ---------------------------------------------------------------------------
# Model selection experiment
# ---------------------------------------------------------------------------


def run_model_selection_seed(seed: int, schedule, config: EstimatorConfig) -> list[dict]:
    """All result rows for one seed of the model selection task."""
    dataset = generate(model_selection_task(seed, n_val=max(schedule)))
    h0 = ConstantPredictor(0.25)
    h1 = AffineL1Regression().fit(dataset.train.sites.points, dataset.train.responses)

    val_sites_all = dataset.val.sites
    test_sites = dataset.test.sites
    losses_by_model = {}
    emp_by_model = {}
    for name, model in (("h0", h0), ("h1", h1)):
        val_losses = absolute(dataset.val.responses, model.predict(val_sites_all.points))
        test_pred = model.predict(test_sites.points)
        losses_by_model[name] = val_losses
        emp_by_model[name] = empirical_test_risk(
            dataset.test.responses, test_pred, absolute
        )

    # Absolute loss can exceed the nominal bound of 1 used in the selection
    # constant; the loss container keeps the true range.
    container_bound = max(
        1.0, max(float(v.max()) for v in losses_by_model.values())
    )

    rows = []
    for n_val in schedule:
        val_sites = val_sites_all.prefix(n_val)
        estimates = {}
        for name in ("h0", "h1"):
            sample = LossSample(losses_by_model[name][:n_val], container_bound)
            estimates[name] = {
                "holdout": holdout(sample),
                "1nn": knn_estimate(sample, val_sites, test_sites, 1),
                "snn": snn_estimate(sample, val_sites, test_sites, config),
            }
        for label in ESTIMATOR_LABELS:
            selected = (
                "h0"
                if estimates["h0"][label].value < estimates["h1"][label].value
                else "h1"
            )
            rows.append(_result_row(
                seed, n_val, label, estimates[selected][label],
                emp_by_model[selected], selected_model=selected,
            ))
    return rows


# ---------------------------------------------------------------------------
# Sweeps and persistence
# ---------------------------------------------------------------------------


def _seed_worker(args):
    task, seed, schedule, config = args
    if task == MODEL_SELECTION:
        return run_model_selection_seed(seed, schedule, config)
    return run_risk_seed(task, seed, schedule, config)


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run all seeds of ``spec``; returns rows and appends them to spec.out.

    Seeds already present in the output CSV (by (seed, n_val, estimator)
    key) are not recomputed. ``jobs > 1`` fans seeds out to a process
    pool; output order is independent of completion order.
    """
    done = set()
    if spec.out and os.path.exists(spec.out):
        done = {
            (row["seed"], row["n_val"], row["estimator"])
            for row in read_results(spec.out)
        }

    pending = [
        seed for seed in spec.seeds
        if any(
            (seed, n_val, label) not in done
            for n_val in spec.n_val_schedule
            for label in ESTIMATOR_LABELS
        )
    ]
    tasks = [(spec.task, seed, spec.n_val_schedule, spec.config) for seed in pending]
    if spec.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            per_seed = list(pool.map(_seed_worker, tasks))
    else:
        per_seed = [_seed_worker(t) for t in tasks]

    rows = [
        row
        for seed_rows in per_seed
        for row in seed_rows
        if (row["seed"], row["n_val"], row["estimator"]) not in done
    ]
    if spec.out:
        append_results(spec.out, rows)
    return rows


def append_results(path, rows) -> None:
    new_file = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        if new_file:
            fh.write(RESULT_SCHEMA_LINE + "\n")
            fh.write(",".join(RESULT_COLUMNS) + "\n")
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([_format_cell(row[col]) for col in RESULT_COLUMNS])


def read_results(path) -> list[dict]:
    """Parse a result CSV back into typed rows."""
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise InputError(f"result file {path} lacks columns: {sorted(missing)}")
    for raw in reader:
        rows.append({
            "seed": int(raw["seed"]),
            "n_val": int(raw["n_val"]),
            "estimator": raw["estimator"],
            "value": float(raw["value"]),
            "empirical_risk": float(raw["empirical_risk"]),
            "abs_error": float(raw["abs_error"]),
            "rel_error": float(raw["rel_error"]) if raw["rel_error"] else None,
            "chosen_k": int(raw["chosen_k"]) if raw["chosen_k"] else None,
            "selected_model": raw["selected_model"],
        })
    return rows


# ---------------------------------------------------------------------------
# Ad-hoc estimation from user CSVs
# ---------------------------------------------------------------------------


def _parse_numeric_row(fields, path, line_no, expected=None):
    try:
        values = [float(f) for f in fields]
    except ValueError:
        raise InputError(
            f"{path}:{line_no}: expected numeric fields, got {fields!r}"
        ) from None
    if expected is not None and len(values) != expected:
        raise InputError(
            f"{path}:{line_no}: expected {expected} fields, got {len(values)}"
        )
    return values


def _read_csv_rows(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    with fh:
        rows = [
            (i + 1, row) for i, row in enumerate(csv.reader(fh))
            if row and any(f.strip() for f in row)
        ]
    if not rows:
        raise InputError(f"{path}: no data rows")
    # Optional header: first row that does not parse as numbers is skipped.
    first_line, first = rows[0]
    try:
        [float(f) for f in first]
    except ValueError:
        rows = rows[1:]
        if not rows:
            raise InputError(f"{path}: header only, no data rows (line {first_line})")
    return rows


def read_validation_csv(path, loss_bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Read ``s1[,s2,...],loss`` rows; enforces losses within [0, loss_bound]."""
    rows = _read_csv_rows(path)
    width = len(rows[0][1])
    if width < 2:
        raise InputError(f"{path}: need at least one coordinate and a loss column")
    coords, losses = [], []
    for line_no, fields in rows:
        values = _parse_numeric_row(fields, path, line_no, expected=width)
        loss = values[-1]
        if not 0.0 <= loss <= loss_bound:
            raise InputError(
                f"{path}:{line_no}: loss {loss} outside [0, {loss_bound}]"
            )
        coords.append(values[:-1])
        losses.append(loss)
    return np.asarray(coords), np.asarray(losses)


def read_sites_csv(path) -> np.ndarray:
    """Read ``s1[,s2,...]`` coordinate rows."""
    rows = _read_csv_rows(path)
    width = len(rows[0][1])
    return np.asarray(
        [_parse_numeric_row(fields, path, line_no, expected=width)
         for line_no, fields in rows]
    )


def _metric_for(name: str, dim: int, haversine_radius: float) -> Metric:
    if name == "euclidean":
        return Metric.euclidean(dim)
    if name == "haversine":
        if dim != 2:
            raise InputError("haversine requires exactly 2 coordinate columns")
        return Metric.haversine(haversine_radius)
    raise InputError(f"unknown metric {name!r}")


def estimate_from_csv(val_csv, test_csv, config: EstimatorConfig,
                      metric: str = "euclidean",
                      haversine_radius: float = 1.0) -> dict:
    """Holdout, 1-NN, and adaptive estimates from user CSV files."""
    coords, losses = read_validation_csv(val_csv, config.loss_bound)
    test_coords = read_sites_csv(test_csv)
    if test_coords.shape[1] != coords.shape[1]:
        raise InputError(
            f"coordinate arity mismatch: validation has {coords.shape[1]} "
            f"columns, test has {test_coords.shape[1]}"
        )
    m = _metric_for(metric, coords.shape[1], haversine_radius)
    val_sites = SiteSet(coords, m)
    test_sites = SiteSet(test_coords, m)
    sample = LossSample(losses, loss_bound=config.loss_bound)

    held = holdout(sample)
    one_nn = knn_estimate(sample, val_sites, test_sites, 1)
    snn = snn_estimate(sample, val_sites, test_sites, config)
    return {
        "holdout": {"value": held.value, "se": held.diagnostics["holdout_se"]},
        "one_nn": {"value": one_nn.value},
        "snn": {
            "value": snn.value,
            "k": snn.chosen_k,
            "rho_k": snn.diagnostics["rho_k"],
            "weight_l2": snn.diagnostics["weight_l2"],
            "objective": snn.diagnostics["objective"],
        },
    }


def format_estimate_table(result: dict) -> str:
    """Human-readable companion to the JSON estimate output."""
    se = result["holdout"]["se"]
    lines = [
        f"{'estimator':<10} {'value':>12}   notes",
        f"{'holdout':<10} {result['holdout']['value']:>12.6f}   "
        + (f"+/- {2 * se:.6f} (2 SE)" if se is not None else ""),
        f"{'1nn':<10} {result['one_nn']['value']:>12.6f}",
        f"{'snn':<10} {result['snn']['value']:>12.6f}   "
        f"k={result['snn']['k']}, rho_k={result['snn']['rho_k']:.6g}, "
        f"|w|_2={result['snn']['weight_l2']:.6g}, "
        f"objective={result['snn']['objective']:.6g}",
    ]
    return "\n".join(lines)


def bounds_report(val_csv, test_csv, k: int, lipschitz: float,
                  config: EstimatorConfig, metric: str = "euclidean",
                  haversine_radius: float = 1.0) -> dict:
    """Certified error bounds for the k-NN estimate on user CSV geometry."""
    coords, _ = read_validation_csv(val_csv, config.loss_bound)
    test_coords = read_sites_csv(test_csv)
    m = _metric_for(metric, coords.shape[1], haversine_radius)
    val_sites = SiteSet(coords, m)
    test_sites = SiteSet(test_coords, m)
    weights = knn_weights(val_sites, test_sites, k)
    return {
        "k": int(k),
        "rho_k": kth_order_fill_distance(val_sites, test_sites, k),
        "weight_l2": float(np.linalg.norm(weights)),
        "first_ub": first_form_bound(val_sites, test_sites, k, config, lipschitz),
        "second_ub": second_form_bound(val_sites, test_sites, k, config, lipschitz),
    }


def to_json(result: dict) -> str:
    return json.dumps(result, sort_keys=True)
