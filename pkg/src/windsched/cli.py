"""Command-line pipeline: analyze, fit, predict, impute, schedule.

Configuration lives in a JSON document (paths are resolved relative to the
config file); any value a flag also covers is overridden by the flag. All
commands are deterministic given their inputs, so repeated runs produce
byte-identical artifacts.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 infeasibility or search-space limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, impute, model, sched, stats
from .dataio import ATTRIBUTES, COLUMNS, CsvSpec
from .errors import ConfigError, DataError, SchedulingError

_WEATHER_FIELDS = ("timestamp",) + ATTRIBUTES
_ENERGY_FIELDS = ("timestamp", "wind_energy")

# Attribute pairs plotted against each other in the analysis extracts,
# besides the energy-vs-attribute panels.
_RELATION_PAIRS = (
    ("wind_direction", "wind_speed"),
    ("cloud_cover", "wind_speed"),
    ("air_pressure", "wind_speed"),
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise _UsageError(message)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _load_config(path_str: str) -> dict:
    path = Path(path_str)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    config["_dir"] = str(path.resolve().parent)
    return config


def _resolve(path_str: str, config: dict) -> Path:
    path = Path(path_str)
    if not path.is_absolute() and "_dir" in config:
        path = Path(config["_dir"]) / path
    return path


def _section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def _input_path(args_value, section: dict, config: dict, description: str) -> Path:
    if args_value:
        return Path(args_value)
    if "path" in section:
        return _resolve(section["path"], config)
    raise ConfigError(f"no {description} configured (flag or config path required)")


def _csv_spec(section: dict, fields) -> CsvSpec:
    columns = section.get("columns") or {f: f for f in fields}
    for f in fields:
        if f not in columns:
            raise ConfigError(f"column mapping lacks field {f!r}")
    return CsvSpec(
        columns=columns,
        timestamp_format=section.get("timestamp_format", "iso8601"),
        delimiter=section.get("delimiter", ","),
    )


def _load_aligned(args, config: dict, verbose: bool):
    weather_cfg = _section(config, "weather")
    energy_cfg = _section(config, "energy")
    weather_path = _input_path(getattr(args, "weather", None), weather_cfg, config, "weather CSV")
    energy_path = _input_path(getattr(args, "energy", None), energy_cfg, config, "energy CSV")
    weather = dataio.load_weather_csv(weather_path, _csv_spec(weather_cfg, _WEATHER_FIELDS))
    energy = dataio.load_energy_csv(energy_path, _csv_spec(energy_cfg, _ENERGY_FIELDS))
    tolerance = getattr(args, "tolerance", None)
    if tolerance is None:
        tolerance = _section(config, "align").get("tolerance_seconds", 1800.0)
    dataset, report = dataio.align(weather, energy, tolerance=float(tolerance))
    if verbose:
        print(
            f"aligned {report.matched} rows "
            f"(dropped {report.dropped_weather} weather, {report.dropped_energy} energy)",
            file=sys.stderr,
        )
    return dataset, report, energy


def _write_xy_csv(path: Path, x_name, y_name, x, y) -> None:
    lines = [f"{x_name},{y_name}"]
    for a, b in zip(x, y):
        xa = str(int(a)) if isinstance(a, (int, np.integer)) else repr(float(a))
        lines.append(f"{xa},{repr(float(b))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_analyze(args, config: dict, outdir: Path) -> int:
    dataset, report, energy = _load_aligned(args, config, args.verbose)
    _write_json(outdir / "join_report.json", report.to_json_dict())

    corr = stats.correlation_matrix(dataset)
    _write_json(outdir / "correlation.json", corr.to_json_dict())
    (outdir / "correlation.csv").write_text(corr.to_csv_text(), encoding="utf-8")

    bin_width = args.bin_width
    if bin_width is None:
        bin_width = _section(config, "histogram").get("bin_width_mw", 1.0)
    distributions = stats.monthly_distribution(energy, bin_width=float(bin_width))
    summary = ["month,count,min_mw,max_mw,mean_mw,median_mw"]
    bins = ["month,bin_low_mw,bin_high_mw,count"]
    for d in distributions:
        summary.append(
            f"{d.month},{d.count},{d.minimum!r},{d.maximum!r},{d.mean!r},{d.median!r}"
        )
        for lo, hi, c in zip(d.bin_edges[:-1], d.bin_edges[1:], d.counts):
            bins.append(f"{d.month},{float(lo)!r},{float(hi)!r},{int(c)}")
    (outdir / "monthly_summary.csv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    (outdir / "monthly_bins.csv").write_text("\n".join(bins) + "\n", encoding="utf-8")

    extracts = outdir / "extracts"
    extracts.mkdir(exist_ok=True)
    for attr in ATTRIBUTES:
        x, y = stats.relation_extract(dataset, attr, "wind_energy")
        _write_xy_csv(extracts / f"relation_wind_energy_vs_{attr}.csv", attr, "wind_energy", x, y)
    for x_name, y_name in _RELATION_PAIRS:
        x, y = stats.relation_extract(dataset, x_name, y_name)
        _write_xy_csv(extracts / f"relation_{y_name}_vs_{x_name}.csv", x_name, y_name, x, y)
    for name in COLUMNS:
        days, values = stats.seasonal_extract(dataset, name)
        _write_xy_csv(extracts / f"seasonal_{name}.csv", "day_of_year", name, days, values)

    if args.verbose:
        print(f"analysis artifacts written to {outdir}", file=sys.stderr)
    return 0


def cmd_fit(args, config: dict, outdir: Path) -> int:
    dataset, _, _ = _load_aligned(args, config, args.verbose)
    max_condition = args.max_condition
    if max_condition is None:
        max_condition = _section(config, "model").get("max_condition_number", model.DEFAULT_MAX_CONDITION)
    fitted = model.fit_correlation_regression(dataset, max_condition=float(max_condition))
    model.save_model(fitted, outdir / "model.json")

    fixed = model.eq1_fixed_model(fitted.standardization)
    metrics = {
        "fitted": model.evaluate(fitted, dataset).to_json_dict(),
        "fixed_eq1": model.evaluate(fixed, dataset).to_json_dict(),
    }
    _write_json(outdir / "metrics.json", metrics)
    if args.verbose:
        print(f"model and metrics written to {outdir}", file=sys.stderr)
    return 0


def cmd_predict(args, config: dict, outdir: Path) -> int:
    model_path = args.model
    if model_path is None:
        model_cfg = _section(config, "model")
        if "path" not in model_cfg:
            raise ConfigError("no model path configured")
        model_path = _resolve(model_cfg["path"], config)
    if not Path(model_path).is_file():
        raise DataError(f"no such file: {model_path}")
    fitted = model.load_model(model_path)

    forecast_cfg = _section(config, "forecast")
    forecast_path = _input_path(args.forecast, forecast_cfg, config, "forecast CSV")
    forecast = dataio.load_weather_csv(forecast_path, _csv_spec(forecast_cfg, _WEATHER_FIELDS))

    series = model.predict(fitted, forecast)
    lines = ["timestamp,predicted_wind_energy_mw,clamped"]
    for ts, value, clamped in zip(series.timestamps, series.values, series.clamped):
        lines.append(
            f"{dataio.format_timestamp(int(ts), 'iso8601')},{float(value)!r},{int(clamped)}"
        )
    (outdir / "predictions.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.verbose:
        print(f"{len(series)} predictions written to {outdir}", file=sys.stderr)
    return 0


def cmd_impute(args, config: dict, outdir: Path) -> int:
    impute_cfg = _section(config, "impute")
    target_cfg = impute_cfg.get("target", {})
    target_path = _input_path(args.target, target_cfg, config, "impute target CSV")
    spec = _csv_spec(target_cfg, _WEATHER_FIELDS)
    records = dataio.load_weather_csv(target_path, spec)

    gaussian_path = args.gaussian
    if gaussian_path is None and "model_path" in impute_cfg:
        gaussian_path = _resolve(impute_cfg["model_path"], config)
    if gaussian_path is not None:
        gauss = impute.load_gaussian(Path(gaussian_path))
    else:
        dataset, _, _ = _load_aligned(args, config, args.verbose)
        gauss = impute.fit_gaussian(dataset)
        impute.save_gaussian(gauss, outdir / "gaussian.json")

    filled = []
    flag_rows = []
    n_filled = 0
    for rec in records:
        completed, imputed_names = impute.impute_record(gauss, rec)
        filled.append(completed)
        flag_rows.append([1 if a in imputed_names else 0 for a in ATTRIBUTES])
        n_filled += len(imputed_names)

    stem = Path(target_path).stem
    dataio.write_weather_csv(filled, outdir / f"{stem}_filled.csv", spec)
    flag_lines = ["timestamp," + ",".join(ATTRIBUTES)]
    for rec, flags in zip(records, flag_rows):
        flag_lines.append(
            dataio.format_timestamp(rec.timestamp, spec.timestamp_format)
            + ","
            + ",".join(str(f) for f in flags)
        )
    (outdir / f"{stem}_flags.csv").write_text("\n".join(flag_lines) + "\n", encoding="utf-8")
    if args.verbose:
        print(f"filled {n_filled} cells across {len(records)} rows", file=sys.stderr)
    return 0


def _profile_from_predictions(path: Path, sched_cfg: dict) -> sched.EnergyProfile:
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    green = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "predicted_wind_energy_mw" not in reader.fieldnames:
            raise DataError(f"{path}: expected a predictions CSV")
        for row in reader:
            green.append(float(row["predicted_wind_energy_mw"]))
    if "datacenter_cap_mw" not in sched_cfg:
        raise ConfigError("schedule.datacenter_cap_mw is required to build a profile")
    return sched.EnergyProfile(
        green=np.asarray(green, dtype=np.float64),
        datacenter_cap=float(sched_cfg["datacenter_cap_mw"]),
        export_capacity=float(sched_cfg.get("export_capacity_mw", 0.0)),
        slot_length=float(sched_cfg.get("slot_length_seconds", 3600.0)),
    )


def cmd_schedule(args, config: dict, outdir: Path) -> int:
    sched_cfg = _section(config, "schedule")

    jobs_path = args.jobs
    if jobs_path is None:
        if "jobs_path" not in sched_cfg:
            raise ConfigError("no jobs file configured")
        jobs_path = _resolve(sched_cfg["jobs_path"], config)
    jobs = sched.jobs_from_json_dict(_read_json(Path(jobs_path)))

    if args.profile:
        profile = sched.EnergyProfile.from_json_dict(_read_json(Path(args.profile)))
    elif args.predictions:
        profile = _profile_from_predictions(Path(args.predictions), sched_cfg)
    elif "profile_path" in sched_cfg:
        profile = sched.EnergyProfile.from_json_dict(
            _read_json(_resolve(sched_cfg["profile_path"], config))
        )
    elif "predictions_path" in sched_cfg:
        profile = _profile_from_predictions(_resolve(sched_cfg["predictions_path"], config), sched_cfg)
    else:
        raise ConfigError("no energy profile configured (profile or predictions)")

    algorithm = args.algorithm or sched_cfg.get("algorithm", "greedy")
    lam = args.lam if args.lam is not None else float(sched_cfg.get("lambda", sched.DEFAULT_LAMBDA))
    seed = args.seed if args.seed is not None else int(sched_cfg.get("seed", 0))
    k = args.rcl_size if args.rcl_size is not None else int(sched_cfg.get("rcl_size", sched.DEFAULT_RCL_SIZE))
    limit = args.limit if args.limit is not None else int(
        sched_cfg.get("brute_force_limit", sched.DEFAULT_BRUTE_FORCE_LIMIT)
    )

    if algorithm == "greedy":
        schedule = sched.greedy(jobs, profile, lam)
    elif algorithm == "randomized-greedy":
        schedule = sched.randomized_greedy(jobs, profile, lam, seed=seed, k=k)
    elif algorithm == "brute-force":
        schedule = sched.brute_force(jobs, profile, lam, limit=limit)
    else:
        raise ConfigError(f"unknown algorithm {algorithm!r}")

    document = schedule.to_json_dict()
    document["algorithm"] = algorithm
    document["lambda"] = lam
    if algorithm == "randomized-greedy":
        document["seed"] = seed
        document["rcl_size"] = k
    _write_json(outdir / "schedule.json", document)
    (outdir / "schedule.csv").write_text(
        sched.schedule_to_csv_text(schedule, profile), encoding="utf-8"
    )
    if args.verbose:
        print(f"{algorithm} schedule cost {schedule.cost}", file=sys.stderr)
    return 0


_DISPATCH = {
    "analyze": cmd_analyze,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "impute": cmd_impute,
    "schedule": cmd_schedule,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="windsched", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized algorithms")
    parser.add_argument("--verbose", action="store_true", help="progress notes on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="correlations, monthly distributions, plot extracts")
    fit = sub.add_parser("fit", help="fit the regression model and evaluate it")
    predict = sub.add_parser("predict", help="predict wind energy from a forecast CSV")
    impute_cmd = sub.add_parser("impute", help="fill missing cells of a weather CSV")
    schedule = sub.add_parser("schedule", help="schedule jobs against an energy profile")

    for p in (analyze, fit, impute_cmd):
        p.add_argument("--weather", help="weather CSV path")
        p.add_argument("--energy", help="energy CSV path")
        p.add_argument("--tolerance", type=float, default=None, help="join tolerance in seconds")
    analyze.add_argument("--bin-width", type=float, default=None, help="histogram bin width in MW")
    fit.add_argument("--max-condition", type=float, default=None, help="collinearity bound")

    predict.add_argument("--model", help="model JSON path")
    predict.add_argument("--forecast", help="forecast weather CSV path")

    impute_cmd.add_argument("--target", help="weather CSV to fill")
    impute_cmd.add_argument("--gaussian", help="pre-fitted gaussian model JSON")

    schedule.add_argument("--jobs", help="jobs JSON path")
    schedule.add_argument("--profile", help="energy profile JSON path")
    schedule.add_argument("--predictions", help="predictions CSV to build the profile from")
    schedule.add_argument(
        "--algorithm", choices=["greedy", "randomized-greedy", "brute-force"], default=None
    )
    schedule.add_argument("--lambda", dest="lam", type=float, default=None, help="curtailment weight")
    schedule.add_argument("--rcl-size", type=int, default=None, help="candidate list size")
    schedule.add_argument("--limit", type=int, default=None, help="brute-force combination limit")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        config = _load_config(args.config) if args.config else {}
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.command](args, config, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SchedulingError as exc:
        print(f"scheduling error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
