"""Command-line front end for scheduling experiments.

Commands mirror the pipeline: validate an instance, inspect series, score
forecasts, perturb an actual into synthetic forecasts, optimize a schedule,
evaluate it against the actual, fit the asymmetric cost weights plus linear
correction, apply a correction, and aggregate run directories into a report
with figures.

Exit codes: 0 success, 1 domain violation (infeasible, invalid, degenerate
inputs), 2 input error (missing or malformed files and arguments).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import sys
from pathlib import Path

import numpy as np

from .instance import InstanceFormatError, parse_instance, validate_instance
from .series import (Calendar, NetLoadSeries, SeriesFormatError,
                     descriptive_stats, load_price_csv, load_series_csv,
                     net_load)
from .metrics import DEFAULT_SEASON, error_report, pearson
from .evaluator import (check_feasibility, schedule_from_json,
                        schedule_to_json)
from .policies import BatteryPolicy
from .scheduler import (OptimizerConfig, evaluate_against_actual, optimize)
from .correction import (LinearCorrection, PerturbationSpec, apply_correction,
                         fit_correction_run, perturb)
from . import plots

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INPUT = 2

METRIC_COLUMNS = ("mase", "mae", "mean_under", "mean_over")


class InputError(Exception):
    """Missing or malformed input; maps to exit code 2."""


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(obj) -> None:
    sys.stdout.write(_json_text(obj))


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def _calendar(args) -> Calendar:
    if args.month:
        if args.start_date or args.days:
            raise InputError("--month conflicts with --start-date/--days")
        try:
            year, month = (int(x) for x in args.month.split("-"))
            return Calendar.for_month(year, month)
        except (ValueError, TypeError) as exc:
            raise InputError(f"bad --month {args.month!r} (expect YYYY-MM)") from exc
    if args.start_date and args.days:
        try:
            start = dt.date.fromisoformat(args.start_date)
        except ValueError as exc:
            raise InputError(f"bad --start-date {args.start_date!r}") from exc
        if args.days < 1:
            raise InputError("--days must be >= 1")
        return Calendar.from_start(start, args.days)
    raise InputError("specify --month YYYY-MM, or --start-date and --days")


def _read_value_rows(path, *, allow_missing: bool) -> tuple[list[str], np.ndarray]:
    """Loose `timestamp,value` reader keeping rows in file order."""
    text = _read_text(path)
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or [c.strip() for c in rows[0]] != ["timestamp", "value"]:
        raise InputError(f"{path}: expected header 'timestamp,value'")
    stamps: list[str] = []
    values: list[float] = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise InputError(f"{path} line {i}: expected 2 fields")
        stamps.append(row[0])
        token = row[1].strip()
        if not token:
            values.append(np.nan)
            continue
        try:
            values.append(float(token))
        except ValueError as exc:
            raise InputError(f"{path} line {i}: bad value {token!r}") from exc
    arr = np.array(values, dtype=float)
    if not allow_missing and np.isnan(arr).any():
        raise ValueError(f"{path}: series has missing values")
    if not stamps:
        raise InputError(f"{path}: no data rows")
    return stamps, arr


def _read_values(path) -> np.ndarray:
    return _read_value_rows(path, allow_missing=False)[1]


def _write_value_rows(output, stamps: list[str], values: np.ndarray) -> None:
    lines = ["timestamp,value"]
    lines.extend(f"{ts},{float(v)!r}" for ts, v in zip(stamps, values))
    text = "\n".join(lines) + "\n"
    if output is None:
        sys.stdout.write(text)
    else:
        _write_text(output, text)


def _dense_net(path, cal: Calendar, what: str) -> NetLoadSeries:
    raw = load_series_csv(path, cal)
    dense = raw.to_dense(cal.horizon)
    if np.isnan(dense).any():
        raise ValueError(f"{what} series has missing periods; a complete "
                         "net-load series is required")
    return NetLoadSeries(dense)


def _net_from_components(args, cal: Calendar, single_flag: str, what: str) -> NetLoadSeries:
    single = getattr(args, single_flag.replace("-", "_"), None)
    if single:
        if args.buildings or args.solars:
            raise InputError(f"--{single_flag} conflicts with --buildings/--solars")
        return _dense_net(single, cal, what)
    if not args.buildings:
        raise InputError(f"provide --{single_flag} or at least one --buildings file")
    buildings = [load_series_csv(p, cal) for p in args.buildings]
    solars = [load_series_csv(p, cal) for p in args.solars or []]
    return net_load(buildings, solars, cal)


# ---------------------------------------------------------------------------
# commands

def cmd_parse(args) -> int:
    inst = parse_instance(_read_text(args.instance))
    violations = validate_instance(inst)
    _emit({
        "counts": {
            "buildings": len(inst.buildings),
            "solars": len(inst.solars),
            "batteries": len(inst.batteries),
            "recurring": len(inst.recurring),
            "onceoff": len(inst.onceoff),
        },
        "valid": not violations,
        "violations": [{"kind": v.kind, "message": v.message} for v in violations],
    })
    return EXIT_OK if not violations else EXIT_DOMAIN


def cmd_stats(args) -> int:
    out = {}
    for path in args.files:
        _, values = _read_value_rows(path, allow_missing=True)
        out[str(path)] = descriptive_stats(values)
    _emit(out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    actual = _read_values(args.actual)
    forecast = _read_values(args.forecast)
    train = _read_values(args.train) if args.train else None
    report = error_report(actual, forecast, train=train, season=args.season)
    _emit(report.as_dict())
    return EXIT_OK


def cmd_perturb(args) -> int:
    stamps, actual = _read_value_rows(args.actual, allow_missing=False)
    spec = PerturbationSpec(args.factor, max_abs_factor=args.max_factor)
    _write_value_rows(args.output, stamps, perturb(actual, spec))
    return EXIT_OK


def cmd_optimize(args) -> int:
    cal = _calendar(args)
    inst = parse_instance(_read_text(args.instance))
    forecast = _net_from_components(args, cal, "forecast", "forecast net-load")
    prices = load_price_csv(args.prices, cal)
    policy = BatteryPolicy(args.policy)
    config = OptimizerConfig(num_warm_starts=args.warm_starts,
                             local_search_iterations=args.iters,
                             random_seed=args.seed,
                             time_limit=args.time_limit)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sink: dict = {}
    schedule, cost = optimize(inst, cal, forecast, prices, policy, config,
                              report_sink=sink)
    _write_text(out_dir / "schedule.json", schedule_to_json(schedule))
    _write_text(out_dir / "run_report.json", _json_text(sink))
    _emit({"cost": cost, "out": str(out_dir)})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cal = _calendar(args)
    inst = parse_instance(_read_text(args.instance))
    try:
        schedule = schedule_from_json(_read_text(args.schedule))
    except ValueError as exc:
        raise InputError(f"bad schedule file {args.schedule}: {exc}") from exc
    actual = _net_from_components(args, cal, "actual", "actual net-load")
    prices = load_price_csv(args.prices, cal)
    policy = BatteryPolicy(args.policy) if args.policy else None
    violations = check_feasibility(inst, cal, schedule, policy=policy)
    if violations:
        _emit({"feasible": False,
               "violations": [{"kind": v.kind, "message": v.message}
                              for v in violations]})
        return EXIT_DOMAIN
    cost = evaluate_against_actual(schedule, actual, prices, inst, cal)
    record: dict = {"cost": cost, "feasible": True}
    if args.forecast:
        forecast = _dense_net(args.forecast, cal, "forecast net-load")
        train = _read_values(args.train) if args.train else None
        report = error_report(actual.values, forecast.values,
                              train=train, season=args.season)
        record["metrics"] = report.as_dict()
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_text(out_dir / "record.json", _json_text(record))
    _emit(record)
    return EXIT_OK


def cmd_fit_correction(args) -> int:
    try:
        manifest = json.loads(_read_text(args.manifest))
    except json.JSONDecodeError as exc:
        raise InputError(f"bad manifest JSON: {exc}") from exc
    base = Path(args.manifest).parent
    try:
        actual_path = base / manifest["actual_csv"]
        pair_items = manifest["pairs"]
        paths = [base / item["forecast_csv"] for item in pair_items]
        costs = [float(item["cost"]) for item in pair_items]
    except (KeyError, TypeError) as exc:
        raise InputError(f"manifest needs actual_csv and pairs "
                         f"[{{forecast_csv, cost}}]: {exc}") from exc
    actual = _read_values(actual_path)
    forecasts = [_read_values(p) for p in paths]
    result = fit_correction_run(actual, forecasts, costs)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_text(out_dir / "correction.json", _json_text(result))
    _emit(result)
    return EXIT_OK


def cmd_correct(args) -> int:
    try:
        params = json.loads(_read_text(args.params))
        corr = LinearCorrection(float(params["alpha"]), float(params["beta"]))
    except json.JSONDecodeError as exc:
        raise InputError(f"bad params JSON: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise InputError(f"params file needs alpha and beta: {exc}") from exc
    stamps, forecast = _read_value_rows(args.forecast, allow_missing=False)
    _write_value_rows(args.output, stamps, apply_correction(forecast, corr))
    return EXIT_OK


def _collect_runs(runs_dir: Path) -> list[dict]:
    if not runs_dir.is_dir():
        raise InputError(f"{runs_dir} is not a directory")
    rows = []
    for sub in sorted(runs_dir.iterdir()):
        record_path = sub / "record.json"
        if not record_path.is_file():
            continue
        try:
            record = json.loads(record_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read {record_path}: {exc}") from exc
        row = {"run": sub.name, "cost": float(record["cost"])}
        for name in METRIC_COLUMNS:
            value = record.get("metrics", {}).get(name)
            if value is not None:
                row[name] = float(value)
        rows.append(row)
    return rows


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    rows = _collect_runs(runs_dir)
    if not rows:
        raise ValueError(f"no run records found under {runs_dir}")
    out_dir = Path(args.out) if args.out else runs_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    header = ["run", "cost", *METRIC_COLUMNS]
    lines = [",".join(header)]
    for row in rows:
        cells = [row["run"], repr(row["cost"])]
        cells += [repr(row[m]) if m in row else "" for m in METRIC_COLUMNS]
        lines.append(",".join(cells))
    _write_text(out_dir / "report.csv", "\n".join(lines) + "\n")

    costs = [row["cost"] for row in rows]
    correlations: dict[str, float] = {}
    for name in METRIC_COLUMNS:
        if not all(name in row for row in rows) or len(rows) < 2:
            continue
        values = [row[name] for row in rows]
        if len(set(values)) < 2 or len(set(costs)) < 2:
            continue
        correlations[name] = pearson(values, costs)
    _write_text(out_dir / "correlations.json", _json_text(correlations))

    if not args.no_figures:
        labels = [row["run"] for row in rows]
        for name in correlations:
            values = [row[name] for row in rows]
            plots.save_metric_scatter(out_dir / f"cost_vs_{name}.png",
                                      name, values, costs, labels=labels)
        if correlations:
            plots.save_correlation_bars(out_dir / "correlations.png", correlations)
    _emit({"runs": len(rows), "correlations": correlations, "out": str(out_dir)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_calendar_flags(sub) -> None:
    sub.add_argument("--month", help="calendar month as YYYY-MM")
    sub.add_argument("--start-date", help="first day as YYYY-MM-DD (with --days)")
    sub.add_argument("--days", type=int, help="number of days (with --start-date)")


def _add_net_flags(sub, single_flag: str, what: str) -> None:
    sub.add_argument(f"--{single_flag}", help=f"{what} net-load CSV")
    sub.add_argument("--buildings", action="append", default=[],
                     help="building demand CSV (repeatable)")
    sub.add_argument("--solars", action="append", default=[],
                     help="solar generation CSV (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridsched",
        description="Schedule recurring activities and batteries against a "
                    "net-load forecast, and analyze forecast error costs.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("parse", help="validate an instance file")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_parse)

    p = subs.add_parser("stats", help="descriptive statistics of series CSVs")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("metrics", help="forecast error report")
    p.add_argument("--actual", required=True)
    p.add_argument("--forecast", required=True)
    p.add_argument("--train", help="in-sample history CSV enabling the scaled error")
    p.add_argument("--season", type=int, default=DEFAULT_SEASON)
    p.set_defaults(func=cmd_metrics)

    p = subs.add_parser("perturb", help="scale an actual series into a synthetic forecast")
    p.add_argument("--actual", required=True)
    p.add_argument("--factor", type=float, required=True)
    p.add_argument("--max-factor", type=float, default=0.5)
    p.add_argument("--output", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_perturb)

    p = subs.add_parser("optimize", help="build a schedule for a forecast")
    p.add_argument("--instance", required=True)
    _add_net_flags(p, "forecast", "forecast")
    p.add_argument("--prices", required=True, help="half-hourly price CSV")
    _add_calendar_flags(p)
    p.add_argument("--policy", choices=[x.value for x in BatteryPolicy],
                   default=BatteryPolicy.CONSERVATIVE.value)
    p.add_argument("--warm-starts", type=int, default=46)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = subs.add_parser("evaluate", help="score a schedule against an actual series")
    p.add_argument("--instance", required=True)
    p.add_argument("--schedule", required=True)
    _add_net_flags(p, "actual", "actual")
    p.add_argument("--prices", required=True)
    _add_calendar_flags(p)
    p.add_argument("--policy", choices=[x.value for x in BatteryPolicy],
                   help="also check policy compliance")
    p.add_argument("--forecast", help="forecast net-load CSV; adds error metrics")
    p.add_argument("--train", help="in-sample history CSV enabling the scaled error")
    p.add_argument("--season", type=int, default=DEFAULT_SEASON)
    p.add_argument("--out", help="directory for record.json")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("fit-correction",
                        help="fit cost weights and a linear correction")
    p.add_argument("--manifest", required=True,
                   help="JSON: {actual_csv, pairs: [{forecast_csv, cost}]}")
    p.add_argument("--out", help="directory for correction.json")
    p.set_defaults(func=cmd_fit_correction)

    p = subs.add_parser("correct", help="apply a linear correction to a forecast")
    p.add_argument("--forecast", required=True)
    p.add_argument("--params", required=True, help="JSON with alpha and beta")
    p.add_argument("--output", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_correct)

    p = subs.add_parser("report", help="aggregate run records into a table and figures")
    p.add_argument("--runs", required=True, help="directory of run subdirectories")
    p.add_argument("--out", help="output directory (default: the runs directory)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InstanceFormatError, SeriesFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
