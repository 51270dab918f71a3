"""Command-line workflow: ingest -> prepare -> train -> evaluate /
export-plot, plus a kernel benchmark.

Every command writes a manifest.json into its output directory
recording the effective config, input file hashes, produced artifacts,
tool version, and a timestamp.  Option precedence is command-line flag,
then JSON config file (--config), then built-in defaults; the training
seed additionally falls back to the QUAKECAST_SEED environment
variable.  All outputs are UTF-8 CSV or JSON.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, series
from .autodiff import Tensor, no_grad
from .catalog import (
    CatalogEvent,
    RegionGrid,
    assign_region,
    deduplicate,
    filter_events,
    parse_catalog,
    parse_time,
)
from .errors import ConfigError, QuakecastError
from .metrics import evaluate
from .model import ARCHITECTURES, ModelSpec, load_checkpoint, save_checkpoint, spec_to_dict
from .series import CASES
from .train import ProtocolReport, SplitDataset, TrainConfig, run_repeats

DEFAULTS = {
    "min_mag": 3.5,
    "bbox": "23,45,75,119",
    "start": "1966-01-15",
    "end": "2021-05-22",
    "case": "count",
    "window": 12,
    "split": 0.8,
    "arch": "cnn-bilstm-am",
    "region": "all",
    "repeats": 10,
    "epochs": 150,
    "batch_size": 32,
    "lr_start": 1e-3,
    "lr_end": 1e-4,
    "dropout": 0.2,
    "combine": "sum",
    "pool_size": 2,
    "pool_stride": 1,
    "jobs": 1,
}

CHECKPOINT_NAME = "checkpoint.qckpt"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_now() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible runs.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        when = datetime.now(timezone.utc)
    return when.isoformat(timespec="seconds")


def _write_manifest(out_dir: Path, command: str, config: dict, inputs, outputs) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": _manifest_now(),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in sorted(inputs, key=str)},
        "outputs": sorted(str(p) for p in outputs),
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _opt(args, config: dict, key: str, cast=None):
    """Resolve one option: CLI flag, then config file, then default."""
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, DEFAULTS.get(key))
    if value is None:
        return None
    return cast(value) if cast else value


def _seed(args, config: dict) -> int:
    value = getattr(args, "seed", None)
    if value is None:
        value = config.get("seed")
    if value is None:
        value = os.environ.get("QUAKECAST_SEED")
    return int(value) if value is not None else 0


def _parse_bbox(text: str) -> tuple[float, float, float, float]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 4:
        raise ConfigError(f"bbox must be lat_min,lat_max,lon_min,lon_max, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _parse_when(text: str, end_of_day: bool) -> datetime:
    text = str(text).strip()
    if "T" in text or " " in text:
        return parse_time(text)
    when = parse_time(f"{text}T00:00:00Z")
    if end_of_day:
        when = when.replace(hour=23, minute=59, second=59)
    return when


def _month_of(text: str) -> str:
    return str(text).strip()[:7]


def _regions(value) -> list[int]:
    if str(value).lower() == "all":
        return list(range(1, 10))
    region = int(value)
    if not 1 <= region <= 9:
        raise ConfigError(f"region must be 1..9 or 'all', got {value}")
    return [region]


def _float_cell(value: float) -> str:
    return str(float(value))


# ---------------------------------------------------------------- ingest


def cmd_ingest(args, config: dict) -> int:
    catalog_path = Path(args.catalog)
    out_dir = Path(args.out)
    min_mag = _opt(args, config, "min_mag", float)
    bbox = _parse_bbox(_opt(args, config, "bbox"))
    start_text = _opt(args, config, "start")
    end_text = _opt(args, config, "end")
    time_range = (_parse_when(start_text, False), _parse_when(end_text, True))
    grid = RegionGrid(lat_min=bbox[0], lat_max=bbox[1], lon_min=bbox[2], lon_max=bbox[3])

    events, rejects = parse_catalog(catalog_path)
    events = deduplicate(events)
    events = filter_events(events, min_mag, time_range, grid)
    if not events:
        print("error: no events survived deduplication and filtering", file=sys.stderr)
        return 1

    out_dir.mkdir(parents=True, exist_ok=True)
    events_path = out_dir / "events.csv"
    with open(events_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "latitude", "longitude", "depth", "mag", "region"])
        for event in events:
            writer.writerow(
                [
                    event.time.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    _float_cell(event.latitude),
                    _float_cell(event.longitude),
                    "" if event.depth is None else _float_cell(event.depth),
                    _float_cell(event.magnitude),
                    assign_region(event, grid),
                ]
            )
    rejects_path = out_dir / "rejects.csv"
    with open(rejects_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line", "reason"])
        for reject in rejects:
            writer.writerow([reject.line, reject.reason])

    meta = {
        "bbox": list(bbox),
        "min_mag": min_mag,
        "start": start_text,
        "end": end_text,
        "start_month": _month_of(start_text),
        "end_month": _month_of(end_text),
        "events": len(events),
        "rejects": len(rejects),
    }
    meta_path = out_dir / "ingest.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out_dir, "ingest", meta, [catalog_path], [events_path, rejects_path, meta_path]
    )
    print(f"ingested {len(events)} events ({len(rejects)} rejected rows) -> {out_dir}")
    return 0


# --------------------------------------------------------------- prepare


def _load_tagged_events(events_dir: Path) -> list[tuple[int, CatalogEvent]]:
    events_path = events_dir / "events.csv"
    if not events_path.exists():
        raise FileNotFoundError(f"ingest output not found: {events_path}")
    tagged = []
    with open(events_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            event = CatalogEvent(
                time=parse_time(row["time"]),
                latitude=float(row["latitude"]),
                longitude=float(row["longitude"]),
                magnitude=float(row["mag"]),
                depth=float(row["depth"]) if row.get("depth") else None,
            )
            tagged.append((int(row["region"]), event))
    return tagged


def cmd_prepare(args, config: dict) -> int:
    events_dir = Path(args.events)
    out_dir = Path(args.out) if args.out else events_dir
    case = _opt(args, config, "case")
    if case not in CASES:
        raise ConfigError(f"case must be one of {CASES}, got {case!r}")
    window = _opt(args, config, "window", int)
    ratio = _opt(args, config, "split", float)

    meta_path = events_dir / "ingest.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"ingest metadata not found: {meta_path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    start_month, end_month = meta["start_month"], meta["end_month"]

    tagged = _load_tagged_events(events_dir)
    outputs = []
    for region in range(1, 10):
        region_events = [event for tag, event in tagged if tag == region]
        monthly = series.aggregate_monthly(
            region_events, region, case, start_month=start_month, end_month=end_month
        )
        prepared = series.prepare_dataset(monthly, ratio=ratio, window=window)
        outputs.extend(series.save_prepared(out_dir, prepared))
    snapshot = {"case": case, "window": window, "split": ratio, "events": str(events_dir)}
    _write_manifest(out_dir, "prepare", snapshot, [events_dir / "events.csv", meta_path], outputs)
    print(f"prepared 9 regions (case={case}, window={window}) -> {out_dir}")
    return 0


# ----------------------------------------------------------------- train


def _report_payload(report: ProtocolReport, data_dir: str) -> dict:
    runs = [
        {
            "run": r.run_index,
            "seed": r.run_seed,
            "final_train_loss": r.final_train_loss,
            "rmse": r.metrics.rmse,
            "mae": r.metrics.mae,
            "r2": r.metrics.r2,
            "n": r.metrics.n,
            "space": r.metrics.space,
        }
        for r in report.runs
    ]
    return {
        "version": __version__,
        "region": report.region,
        "case": report.case,
        "architecture": report.spec.architecture,
        "data_dir": data_dir,
        "spec": spec_to_dict(report.spec),
        "config": dataclasses.asdict(report.config),
        "checkpoint_run": report.runs[-1].run_index,
        "runs": runs,
        "aggregates": report.aggregate(),
    }


def _train_region(task: tuple) -> list[str]:
    """Train one (region, case) and write its artifacts; returns paths."""
    data_dir, out_root, arch, region, case, spec_kwargs, config = task
    prepared = series.load_prepared(data_dir, region, case)
    spec = ModelSpec(architecture=arch, window=prepared.window, **spec_kwargs)
    data = SplitDataset(prepared.train_windows(), prepared.test_windows())
    runs = []
    last_model = None
    for result, model in run_repeats(spec, data, config):
        runs.append(result)
        last_model = model
    report = ProtocolReport(region=region, case=case, spec=spec, config=config, runs=runs)

    region_dir = Path(out_root) / arch / f"region{region}_{case}"
    region_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    report_path = region_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(_report_payload(report, str(data_dir)), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(report_path)

    runs_path = region_dir / "runs.csv"
    with open(runs_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "case", "run", "rmse", "mae", "r2"])
        for r in runs:
            writer.writerow(
                [
                    region,
                    case,
                    r.run_index,
                    _float_cell(r.metrics.rmse),
                    _float_cell(r.metrics.mae),
                    _float_cell(r.metrics.r2),
                ]
            )
    outputs.append(runs_path)

    for r in runs:
        log_path = region_dir / f"train_log_run{r.run_index}.csv"
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "lr", "train_loss"])
            for epoch, lr, loss in r.log:
                writer.writerow([epoch, _float_cell(lr), _float_cell(loss)])
        outputs.append(log_path)

    months = prepared.test_months()
    predictions_path = region_dir / "predictions.csv"
    with open(predictions_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "month", "actual", "predicted"])
        for r in runs:
            for month, actual, predicted in zip(months, data.test.targets, r.predictions):
                writer.writerow(
                    [r.run_index, month, _float_cell(actual), _float_cell(predicted)]
                )
    outputs.append(predictions_path)

    if last_model.last_attention is not None:
        attention_path = region_dir / "attention.csv"
        with open(attention_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "timestep", "weight"])
            weights = last_model.last_attention
            for sample in range(weights.shape[0]):
                for timestep in range(weights.shape[1]):
                    writer.writerow([sample, timestep, _float_cell(weights[sample, timestep])])
        outputs.append(attention_path)

    checkpoint_path = region_dir / CHECKPOINT_NAME
    save_checkpoint(last_model, checkpoint_path)
    outputs.append(checkpoint_path)
    return [str(p) for p in outputs]


def cmd_train(args, config: dict) -> int:
    data_dir = Path(args.data)
    out_root = Path(args.out) if args.out else data_dir / "reports"
    arch = _opt(args, config, "arch")
    if arch not in ARCHITECTURES:
        raise ConfigError(f"arch must be one of {ARCHITECTURES}, got {arch!r}")
    case = _opt(args, config, "case")
    regions = _regions(_opt(args, config, "region"))
    jobs = _opt(args, config, "jobs", int)
    train_config = TrainConfig(
        epochs=_opt(args, config, "epochs", int),
        batch_size=_opt(args, config, "batch_size", int),
        lr_start=_opt(args, config, "lr_start", float),
        lr_end=_opt(args, config, "lr_end", float),
        repeats=_opt(args, config, "repeats", int),
        seed=_seed(args, config),
    )
    spec_kwargs = {
        "dropout": _opt(args, config, "dropout", float),
        "combine": _opt(args, config, "combine"),
        "pool_size": _opt(args, config, "pool_size", int),
        "pool_stride": _opt(args, config, "pool_stride", int),
    }
    tasks = [
        (data_dir, out_root, arch, region, case, spec_kwargs, train_config)
        for region in regions
    ]
    out_root.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            produced = list(pool.map(_train_region, tasks))
    else:
        produced = [_train_region(task) for task in tasks]

    outputs = [path for paths in produced for path in paths]
    inputs = []
    for region in regions:
        inputs.append(data_dir / f"region{region}_{case}.csv")
        inputs.append(data_dir / f"region{region}_{case}.json")
    snapshot = {
        "arch": arch,
        "case": case,
        "regions": regions,
        "jobs": jobs,
        "config": dataclasses.asdict(train_config),
        "spec_overrides": spec_kwargs,
    }
    _write_manifest(out_root, "train", snapshot, inputs, outputs)
    print(
        f"trained {arch} on {len(regions)} region(s), case={case}, "
        f"repeats={train_config.repeats} -> {out_root}"
    )
    return 0


# -------------------------------------------------------------- evaluate


def cmd_evaluate(args, config: dict) -> int:
    report_dir = Path(args.report)
    report_path = report_dir / "report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"report not found: {report_path}")
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)
    data_dir = Path(args.data) if args.data else Path(report["data_dir"])
    prepared = series.load_prepared(data_dir, report["region"], report["case"])
    model = load_checkpoint(report_dir / CHECKPOINT_NAME)
    test = prepared.test_windows()
    with no_grad():
        predictions = model.forward(Tensor(test.inputs)).data.reshape(-1)
    recomputed = evaluate(test.targets, predictions)
    stored = report["runs"][report["checkpoint_run"]]
    matches = (
        recomputed.rmse == stored["rmse"]
        and recomputed.mae == stored["mae"]
        and recomputed.r2 == stored["r2"]
    )
    payload = {
        "checkpoint_run": report["checkpoint_run"],
        "recomputed": {
            "rmse": recomputed.rmse,
            "mae": recomputed.mae,
            "r2": recomputed.r2,
        },
        "stored": {k: stored[k] for k in ("rmse", "mae", "r2")},
        "matches_report": matches,
    }
    out_path = report_dir / "evaluation.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"evaluated checkpoint run {report['checkpoint_run']}: "
        f"rmse={recomputed.rmse:.6f} mae={recomputed.mae:.6f} r2={recomputed.r2:.6f} "
        f"(matches report: {matches})"
    )
    return 0 if matches else 1


# ----------------------------------------------------------- export-plot


def cmd_export_plot(args, config: dict) -> int:
    report_root = Path(args.report)
    out_dir = Path(args.out)
    case = _opt(args, config, "case")
    region = int(getattr(args, "region", None) or config.get("region", 1))

    found: list[tuple[str, Path]] = []
    for arch in ARCHITECTURES:
        region_dir = report_root / arch / f"region{region}_{case}"
        if (region_dir / "report.json").exists():
            found.append((arch, region_dir))
    if not found:
        print(
            f"error: no reports for region {region}, case {case} under {report_root}",
            file=sys.stderr,
        )
        return 1

    columns: dict[str, dict[str, str]] = {}
    months: list[str] = []
    actual: dict[str, str] = {}
    for arch, region_dir in found:
        with open(region_dir / "report.json", encoding="utf-8") as fh:
            checkpoint_run = json.load(fh)["checkpoint_run"]
        predicted: dict[str, str] = {}
        with open(region_dir / "predictions.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if int(row["run"]) != checkpoint_run:
                    continue
                predicted[row["month"]] = row["predicted"]
                actual.setdefault(row["month"], row["actual"])
                if row["month"] not in months:
                    months.append(row["month"])
        columns[arch] = predicted

    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    plot_path = out_dir / "pred_vs_actual.csv"
    with open(plot_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        archs = [arch for arch, _ in found]
        writer.writerow(["month", "actual"] + [f"predicted_{arch}" for arch in archs])
        for month in months:
            writer.writerow(
                [month, actual[month]] + [columns[arch].get(month, "") for arch in archs]
            )
    outputs.append(plot_path)

    for arch, region_dir in found:
        source = region_dir / "attention.csv"
        if source.exists():
            attention_path = out_dir / "attention.csv"
            attention_path.write_bytes(source.read_bytes())
            outputs.append(attention_path)
            break

    inputs = [region_dir / "report.json" for _, region_dir in found]
    snapshot = {"region": region, "case": case, "report": str(report_root)}
    _write_manifest(out_dir, "export-plot", snapshot, inputs, outputs)
    print(f"exported {len(months)} months for region {region} ({case}) -> {out_dir}")
    return 0


# ----------------------------------------------------------------- bench


def cmd_bench(args, config: dict) -> int:
    from . import benchmark

    repeats = int(getattr(args, "repeats", None) or config.get("bench_repeats", 20))
    results = benchmark.run(repeats=repeats)
    print(benchmark.format_report(results))
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {out_path}")
    return 0


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quakecast",
        description="Regional earthquake forecasting from catalog-derived monthly series.",
    )
    parser.add_argument("--version", action="version", version=f"quakecast {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse, dedup, filter, and region-tag a catalog")
    p.add_argument("--catalog", required=True, help="catalog CSV path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-mag", dest="min_mag", type=float, help="magnitude threshold (default 3.5)")
    p.add_argument("--bbox", help="lat_min,lat_max,lon_min,lon_max (default 23,45,75,119)")
    p.add_argument("--start", help="inclusive start date (default 1966-01-15)")
    p.add_argument("--end", help="inclusive end date (default 2021-05-22)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prepare", parents=[common], help="build per-region monthly datasets")
    p.add_argument("--events", required=True, help="ingest output directory")
    p.add_argument("--out", help="output directory (default: events dir)")
    p.add_argument("--case", choices=CASES, help="count or maxmag (default count)")
    p.add_argument("--window", type=int, help="lookback window in months (default 12)")
    p.add_argument("--split", type=float, help="train fraction (default 0.8)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train and evaluate with repeats")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--out", help="report directory (default: <data>/reports)")
    p.add_argument("--arch", choices=ARCHITECTURES, help="architecture (default cnn-bilstm-am)")
    p.add_argument("--case", choices=CASES, help="count or maxmag (default count)")
    p.add_argument("--region", help="region 1..9 or 'all' (default all)")
    p.add_argument("--repeats", type=int, help="independent runs (default 10)")
    p.add_argument("--seed", type=int, help="base seed (default: QUAKECAST_SEED or 0)")
    p.add_argument("--epochs", type=int, help="training epochs (default 150)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="mini-batch size (default 32)")
    p.add_argument("--lr-start", dest="lr_start", type=float, help="initial learning rate (default 0.001)")
    p.add_argument("--lr-end", dest="lr_end", type=float, help="final learning rate (default 0.0001)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0.2)")
    p.add_argument("--combine", choices=("sum", "concat"), help="BiLSTM combine mode (default sum)")
    p.add_argument("--pool-size", dest="pool_size", type=int, help="max-pool window (default 2)")
    p.add_argument("--pool-stride", dest="pool_stride", type=int, help="max-pool stride (default 1)")
    p.add_argument("--jobs", type=int, help="parallel region workers (default 1)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="re-score a checkpoint against its report")
    p.add_argument("--report", required=True, help="region report directory")
    p.add_argument("--data", help="prepared dataset directory (default: from report)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-plot", parents=[common], help="emit plot-ready CSV series")
    p.add_argument("--report", required=True, help="train output root")
    p.add_argument("--out", required=True, help="directory for the CSV files")
    p.add_argument("--region", type=int, help="region to export (default 1)")
    p.add_argument("--case", choices=CASES, help="count or maxmag (default count)")
    p.set_defaults(func=cmd_export_plot)

    p = sub.add_parser("bench", parents=[common], help="compare kernel backends")
    p.add_argument("--repeats", type=int, help="timing repeats per case (default 20)")
    p.add_argument("--out", help="optional JSON results path")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = {}
    if getattr(args, "config", None):
        config_path = Path(args.config)
        if not config_path.exists():
            print(f"error: config file not found: {config_path}", file=sys.stderr)
            return 1
        with open(config_path, encoding="utf-8") as fh:
            config = json.load(fh)
    try:
        return args.func(args, config)
    except (QuakecastError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
