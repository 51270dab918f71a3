"""Monthly series construction and the dataset preparation pipeline.

Region events become per-month values (event count or maximum
magnitude, zero for quiet months).  Preparation then runs, in order:
chronological split, zero-order-hold imputation on the training side
only, min-max scaling fitted on the imputed training side only, and
stride-1 sliding windows built independently per side.  Prepared
datasets persist as one CSV per (region, case) plus a JSON sidecar
holding the scaler and window length.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

CASES = ("count", "maxmag")


def parse_month(text: str) -> int:
    """'YYYY-MM' to a linear month index."""
    try:
        year_s, month_s = text.split("-")
        year, month = int(year_s), int(month_s)
    except ValueError:
        raise DomainError(f"month must look like 'YYYY-MM', got {text!r}") from None
    if not 1 <= month <= 12:
        raise DomainError(f"month out of range in {text!r}")
    return year * 12 + (month - 1)


def format_month(index: int) -> str:
    return f"{index // 12:04d}-{index % 12 + 1:02d}"


def months_between(start: str, end: str) -> int:
    """Inclusive count of calendar months from start to end."""
    span = parse_month(end) - parse_month(start) + 1
    if span < 1:
        raise DomainError(f"month range {start}..{end} is empty")
    return span


def month_sequence(start: str, count: int) -> list[str]:
    base = parse_month(start)
    return [format_month(base + i) for i in range(count)]


@dataclass(frozen=True)
class MonthlySeries:
    """One region's univariate monthly sequence."""

    region: int
    case: str
    start_month: str
    values: np.ndarray

    @property
    def months(self) -> list[str]:
        return month_sequence(self.start_month, len(self.values))


@dataclass(frozen=True)
class ScalerParams:
    """Min-max bounds fitted on the training split."""

    min: float
    max: float


@dataclass(frozen=True)
class WindowedDataset:
    """Stride-1 sliding windows with next-month targets."""

    inputs: np.ndarray
    targets: np.ndarray
    window: int


def aggregate_monthly(
    events,
    region: int,
    case: str,
    start_month: str | None = None,
    end_month: str | None = None,
) -> MonthlySeries:
    """Collapse one region's events into a monthly value per calendar month.

    'count' counts events per month; 'maxmag' takes the maximum
    magnitude, with 0 for quiet months.  The month range defaults to
    the span of the events but is normally passed explicitly so every
    region shares the same axis.
    """
    if case not in CASES:
        raise ConfigError(f"case must be one of {CASES}, got {case!r}")
    events = list(events)
    indices = [event.time.year * 12 + (event.time.month - 1) for event in events]
    if start_month is None or end_month is None:
        if not events:
            raise DomainError(
                "cannot infer a month range from zero events; pass start/end months"
            )
        first = min(indices) if start_month is None else parse_month(start_month)
        last = max(indices) if end_month is None else parse_month(end_month)
    else:
        first, last = parse_month(start_month), parse_month(end_month)
    if last < first:
        raise DomainError("end month precedes start month")
    length = last - first + 1
    values = np.zeros(length)
    for event, index in zip(events, indices):
        offset = index - first
        if not 0 <= offset < length:
            continue
        if case == "count":
            values[offset] += 1.0
        else:
            values[offset] = max(values[offset], event.magnitude)
    return MonthlySeries(
        region=region, case=case, start_month=format_month(first), values=values
    )


def zoh_impute(values) -> np.ndarray:
    """Replace each zero with the most recent preceding non-zero value.

    Leading zeros have no predecessor and stay zero; the result is
    idempotent under re-application.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("zoh_impute needs a non-empty sequence")
    out = values.copy()
    held = 0.0
    for i in range(out.size):
        if out[i] != 0.0:
            held = out[i]
        elif held != 0.0:
            out[i] = held
    return out


def fit_scaler(train_values) -> ScalerParams:
    """Min-max bounds of the training values only (leakage guard)."""
    train_values = np.asarray(train_values, dtype=np.float64)
    if train_values.size == 0:
        raise DomainError("fit_scaler needs a non-empty training sequence")
    return ScalerParams(min=float(train_values.min()), max=float(train_values.max()))


def apply_scaler(values, params: ScalerParams) -> np.ndarray:
    """Map values to [0, 1] by the fitted bounds; degenerate bounds give 0."""
    values = np.asarray(values, dtype=np.float64)
    span = params.max - params.min
    if span == 0.0:
        return np.zeros_like(values)
    return (values - params.min) / span


def invert_scaler(scaled, params: ScalerParams) -> np.ndarray:
    """Exact inverse of apply_scaler on the same params."""
    scaled = np.asarray(scaled, dtype=np.float64)
    span = params.max - params.min
    if span == 0.0:
        return np.full_like(scaled, params.min)
    return scaled * span + params.min


def split_train_test(
    values, ratio: float, window: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Chronological split: first floor(ratio * T) months train, rest test."""
    values = np.asarray(values, dtype=np.float64)
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    cut = int(len(values) * ratio)
    train, test = values[:cut], values[cut:]
    if window is not None and (len(train) < window + 1 or len(test) < window + 1):
        raise ConfigError(
            f"split {len(train)}/{len(test)} leaves fewer than window + 1 = "
            f"{window + 1} months on one side"
        )
    return train, test


def make_windows(values, window: int) -> WindowedDataset:
    """All stride-1 windows of length `window`, each targeting the next value."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    if len(values) <= window:
        raise DomainError(
            f"need more than window = {window} values to build samples, "
            f"got {len(values)}"
        )
    count = len(values) - window
    inputs = np.empty((count, window))
    for i in range(count):
        inputs[i] = values[i:i + window]
    targets = values[window:].copy()
    return WindowedDataset(inputs=inputs, targets=targets, window=window)


@dataclass(frozen=True)
class PreparedDataset:
    """Fully preprocessed series for one (region, case), ready to window."""

    region: int
    case: str
    window: int
    ratio: float
    start_month: str
    scaler: ScalerParams
    raw: np.ndarray
    imputed: np.ndarray
    scaled: np.ndarray
    split: tuple[str, ...]

    @property
    def months(self) -> list[str]:
        return month_sequence(self.start_month, len(self.raw))

    @property
    def train_size(self) -> int:
        return sum(1 for s in self.split if s == "train")

    def train_windows(self) -> WindowedDataset:
        return make_windows(self.scaled[: self.train_size], self.window)

    def test_windows(self) -> WindowedDataset:
        return make_windows(self.scaled[self.train_size:], self.window)

    def test_months(self) -> list[str]:
        """Months of the test targets (one per test window)."""
        return self.months[self.train_size + self.window:]


def prepare_dataset(
    monthly: MonthlySeries, ratio: float = 0.8, window: int = 12
) -> PreparedDataset:
    """Split, impute (train side only), scale (train-fitted), and package."""
    values = np.asarray(monthly.values, dtype=np.float64)
    train_raw, test_raw = split_train_test(values, ratio, window=window)
    train_imputed = zoh_impute(train_raw)
    scaler = fit_scaler(train_imputed)
    imputed = np.concatenate([train_imputed, test_raw])
    scaled = apply_scaler(imputed, scaler)
    split = ("train",) * len(train_raw) + ("test",) * len(test_raw)
    return PreparedDataset(
        region=monthly.region,
        case=monthly.case,
        window=window,
        ratio=ratio,
        start_month=monthly.start_month,
        scaler=scaler,
        raw=values,
        imputed=imputed,
        scaled=scaled,
        split=split,
    )


def _basename(region: int, case: str) -> str:
    return f"region{region}_{case}"


def save_prepared(directory, prepared: PreparedDataset) -> tuple[Path, Path]:
    """Write the per-month CSV and the JSON sidecar; returns both paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = _basename(prepared.region, prepared.case)
    csv_path = directory / f"{base}.csv"
    json_path = directory / f"{base}.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "raw", "imputed", "scaled", "split"])
        for month, raw, imputed, scaled, split in zip(
            prepared.months, prepared.raw, prepared.imputed, prepared.scaled, prepared.split
        ):
            writer.writerow(
                [month, str(float(raw)), str(float(imputed)), str(float(scaled)), split]
            )
    sidecar = {
        "region": prepared.region,
        "case": prepared.case,
        "window": prepared.window,
        "ratio": prepared.ratio,
        "start_month": prepared.start_month,
        "scaler": {"min": prepared.scaler.min, "max": prepared.scaler.max},
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_prepared(directory, region: int, case: str) -> PreparedDataset:
    """Read back what save_prepared wrote; raises if either file is missing."""
    directory = Path(directory)
    base = _basename(region, case)
    csv_path = directory / f"{base}.csv"
    json_path = directory / f"{base}.json"
    for path in (csv_path, json_path):
        if not path.exists():
            raise FileNotFoundError(f"prepared dataset file not found: {path}")
    with open(json_path, encoding="utf-8") as fh:
        sidecar = json.load(fh)
    raw, imputed, scaled, split = [], [], [], []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            raw.append(float(row["raw"]))
            imputed.append(float(row["imputed"]))
            scaled.append(float(row["scaled"]))
            split.append(row["split"])
    return PreparedDataset(
        region=int(sidecar["region"]),
        case=sidecar["case"],
        window=int(sidecar["window"]),
        ratio=float(sidecar["ratio"]),
        start_month=sidecar["start_month"],
        scaler=ScalerParams(
            min=float(sidecar["scaler"]["min"]), max=float(sidecar["scaler"]["max"])
        ),
        raw=np.array(raw),
        imputed=np.array(imputed),
        scaled=np.array(scaled),
        split=tuple(split),
    )
