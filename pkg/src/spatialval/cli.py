"""Command-line interface.

Subcommands::

    spatialval estimate --val losses.csv --test sites.csv [options]
    spatialval simulate {grid,point,model-selection} --out results.csv [options]
    spatialval fill-distance --candidates a.csv --targets b.csv [--k K]
    spatialval bounds --val losses.csv --test sites.csv --k K [options]

Options may also come from a config file of ``key = value`` lines
(``--config``); command-line flags override file values. Exit codes:
0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .estimators import EstimatorConfig
from .exceptions import InputError, NumericalError
from .geometry import SiteSet, kth_order_fill_distance
from .harness import (
    DESK_SEEDS,
    ExperimentSpec,
    bounds_report,
    estimate_from_csv,
    format_estimate_table,
    full_profile,
    read_sites_csv,
    run_experiment,
    to_json,
)
from .simulate import GRID, MODEL_SELECTION, POINT, generate, grid_task, \
    model_selection_task, point_task, dataset_to_csv

_CONFIG_KEYS = {
    "delta", "loss_bound", "k_grid", "metric", "haversine_radius",
    "seeds", "out", "full", "jobs",
}


def parse_seeds(text: str) -> tuple:
    """Parse ``"0:20"`` (half-open range) or ``"0,3,7"`` or ``"5"``."""
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi)))
    return tuple(int(part) for part in text.split(",") if part.strip())


def parse_int_list(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part.strip())


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"cannot open config file {path}: {exc}") from None
    with fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise InputError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = value
    return values


def _merged_option(args, config_values, key, parse, default):
    flag_value = getattr(args, key, None)
    if flag_value is not None and flag_value is not False:
        return flag_value
    if key in config_values:
        return parse(config_values[key])
    return default


def _estimator_config(args, config_values) -> EstimatorConfig:
    delta = _merged_option(args, config_values, "delta", float, 0.1)
    loss_bound = _merged_option(args, config_values, "loss_bound", float, 1.0)
    k_grid = _merged_option(args, config_values, "k_grid", parse_int_list, None)
    if isinstance(k_grid, str):
        k_grid = parse_int_list(k_grid)
    return EstimatorConfig(delta=delta, loss_bound=loss_bound, k_grid=k_grid)


def _add_common_flags(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--delta", type=float, help="bound failure probability")
    parser.add_argument("--loss-bound", dest="loss_bound", type=float,
                        help="upper bound on the loss")
    parser.add_argument("--k-grid", dest="k_grid", type=parse_int_list,
                        help="comma-separated candidate neighbor counts")
    parser.add_argument("--metric", choices=("euclidean", "haversine"),
                        help="distance on site coordinates")
    parser.add_argument("--haversine-radius", dest="haversine_radius", type=float,
                        help="sphere radius for the haversine metric (default 1.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialval",
        description="Test-risk estimation for spatial predictions at fixed test sites",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate test risk from CSV files")
    est.add_argument("--val", required=True, help="validation CSV: s1[,s2,...],loss")
    est.add_argument("--test", required=True, help="test CSV: s1[,s2,...]")
    _add_common_flags(est)

    sim = sub.add_parser("simulate", help="run a synthetic experiment sweep")
    sim_sub = sim.add_subparsers(dest="task", required=True)
    for task_name in (GRID, POINT, MODEL_SELECTION):
        tp = sim_sub.add_parser(task_name)
        tp.add_argument("--seeds", type=parse_seeds,
                        help="'0:20' (half-open) or comma list")
        tp.add_argument("--out", help="result CSV path (appended, idempotent)")
        tp.add_argument("--n-val", dest="n_val", type=parse_int_list,
                        help="override the validation-size schedule")
        tp.add_argument("--full", action="store_true",
                        help="paper-scale profile (100 seeds, n_val up to 8000)")
        tp.add_argument("--jobs", type=int, help="parallel seed workers")
        tp.add_argument("--dump-data", dest="dump_data",
                        help="also write the first seed's dataset to this CSV")
        _add_common_flags(tp)

    fd = sub.add_parser("fill-distance", help="fill distance between two site files")
    fd.add_argument("--candidates", required=True)
    fd.add_argument("--targets", required=True)
    fd.add_argument("--k", type=int, default=1, help="neighbor order (default 1)")
    _add_common_flags(fd)

    bd = sub.add_parser("bounds", help="certified error bounds for a k-NN estimate")
    bd.add_argument("--val", required=True, help="validation CSV: s1[,s2,...],loss")
    bd.add_argument("--test", required=True, help="test CSV: s1[,s2,...]")
    bd.add_argument("--k", type=int, required=True)
    bd.add_argument("--lipschitz", type=float, default=1.0)
    _add_common_flags(bd)

    return parser


def _cmd_estimate(args, config_values) -> int:
    config = _estimator_config(args, config_values)
    metric = _merged_option(args, config_values, "metric", str, "euclidean")
    radius = _merged_option(args, config_values, "haversine_radius", float, 1.0)
    result = estimate_from_csv(args.val, args.test, config, metric, radius)
    print(format_estimate_table(result))
    print()
    print(to_json(result))
    return 0


def _cmd_simulate(args, config_values) -> int:
    config = _estimator_config(args, config_values)
    seeds = _merged_option(args, config_values, "seeds", parse_seeds, DESK_SEEDS)
    out = _merged_option(args, config_values, "out", str, None)
    jobs = _merged_option(args, config_values, "jobs", int, 1)
    schedule = args.n_val
    spec = ExperimentSpec(
        task=args.task, seeds=seeds, n_val_schedule=schedule,
        config=config, out=out, jobs=jobs,
    )
    if _merged_option(args, config_values, "full", lambda s: s.lower() == "true", False):
        spec = full_profile(spec)
    if args.dump_data:
        maker = {
            GRID: lambda: grid_task(max(spec.n_val_schedule), spec.seeds[0]),
            POINT: lambda: point_task(max(spec.n_val_schedule), spec.seeds[0]),
            MODEL_SELECTION: lambda: model_selection_task(
                spec.seeds[0], n_val=max(spec.n_val_schedule)),
        }[spec.task]
        dataset_to_csv(generate(maker()), args.dump_data)
    rows = run_experiment(spec)
    where = f" -> {spec.out}" if spec.out else ""
    print(f"{args.task}: wrote {len(rows)} result rows over "
          f"{len(spec.seeds)} seeds{where}")
    return 0


def _cmd_fill_distance(args, config_values) -> int:
    metric = _merged_option(args, config_values, "metric", str, "euclidean")
    radius = _merged_option(args, config_values, "haversine_radius", float, 1.0)
    from .harness import _metric_for

    cand = read_sites_csv(args.candidates)
    targ = read_sites_csv(args.targets)
    if cand.shape[1] != targ.shape[1]:
        raise InputError("candidate and target files have different coordinate arity")
    m = _metric_for(metric, cand.shape[1], radius)
    value = kth_order_fill_distance(SiteSet(cand, m), SiteSet(targ, m), args.k)
    print(json.dumps({"k": args.k, "fill_distance": value}))
    return 0


def _cmd_bounds(args, config_values) -> int:
    config = _estimator_config(args, config_values)
    metric = _merged_option(args, config_values, "metric", str, "euclidean")
    radius = _merged_option(args, config_values, "haversine_radius", float, 1.0)
    report = bounds_report(args.val, args.test, args.k, args.lipschitz,
                           config, metric, radius)
    print(to_json(report))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config_values = read_config_file(args.config) if getattr(args, "config", None) else {}
        if args.command == "estimate":
            return _cmd_estimate(args, config_values)
        if args.command == "simulate":
            return _cmd_simulate(args, config_values)
        if args.command == "fill-distance":
            return _cmd_fill_distance(args, config_values)
        if args.command == "bounds":
            return _cmd_bounds(args, config_values)
        raise InputError(f"unknown command {args.command!r}")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
