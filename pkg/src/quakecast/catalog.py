"""Earthquake catalog ingestion.

Parses USGS-style CSV catalogs into events, deduplicates exact repeats,
filters by magnitude, time range, and bounding box, and assigns each
event to one cell of an equal-width 3x3 grid over the study area.

Grid cells are half-open intervals [edge_i, edge_{i+1}) on both axes
with the top edge of the last cell closed, so every in-box point lands
in exactly one cell.  Region ids run 1..9 row-major from the northwest
cell.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

MANDATORY_COLUMNS = ("time", "latitude", "longitude", "mag")

_EPOCH_FLOOR = datetime(1900, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class CatalogEvent:
    """One deduplicated earthquake record (UTC time, second resolution)."""

    time: datetime
    latitude: float
    longitude: float
    magnitude: float
    depth: float | None = None


@dataclass(frozen=True)
class Reject:
    """A catalog row that failed to parse, kept for the reject report."""

    line: int
    reason: str


@dataclass(frozen=True)
class RegionGrid:
    """Equal-width partition of the study bounding box into rows x cols cells."""

    lat_min: float = 23.0
    lat_max: float = 45.0
    lon_min: float = 75.0
    lon_max: float = 119.0
    rows: int = 3
    cols: int = 3

    def __post_init__(self):
        if not self.lat_min < self.lat_max:
            raise ConfigError(f"need lat_min < lat_max, got {self.lat_min}, {self.lat_max}")
        if not self.lon_min < self.lon_max:
            raise ConfigError(f"need lon_min < lon_max, got {self.lon_min}, {self.lon_max}")
        if self.rows * self.cols != 9:
            raise ConfigError(f"grid must have 9 cells, got {self.rows}x{self.cols}")

    @property
    def lat_edges(self) -> np.ndarray:
        return np.linspace(self.lat_min, self.lat_max, self.rows + 1)

    @property
    def lon_edges(self) -> np.ndarray:
        return np.linspace(self.lon_min, self.lon_max, self.cols + 1)

    def contains(self, latitude: float, longitude: float) -> bool:
        return (
            self.lat_min <= latitude <= self.lat_max
            and self.lon_min <= longitude <= self.lon_max
        )

    def region_of(self, latitude: float, longitude: float) -> int:
        """Region id 1..9, row-major from the northwest cell."""
        if not self.contains(latitude, longitude):
            raise DomainError(
                f"point ({latitude}, {longitude}) outside grid box "
                f"[{self.lat_min}, {self.lat_max}] x [{self.lon_min}, {self.lon_max}]"
            )
        cell_h = (self.lat_max - self.lat_min) / self.rows
        cell_w = (self.lon_max - self.lon_min) / self.cols
        from_south = min(int(math.floor((latitude - self.lat_min) / cell_h)), self.rows - 1)
        col = min(int(math.floor((longitude - self.lon_min) / cell_w)), self.cols - 1)
        row = self.rows - 1 - from_south
        return row * self.cols + col + 1


def assign_region(event: CatalogEvent, grid: RegionGrid) -> int:
    """Grid cell of an in-box event; out-of-box raises."""
    return grid.region_of(event.latitude, event.longitude)


def parse_time(text: str) -> datetime:
    """ISO-8601 timestamp (Z suffix allowed) to an aware UTC datetime."""
    value = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    value = value.astimezone(timezone.utc).replace(microsecond=0)
    if value < _EPOCH_FLOOR:
        raise ValueError(f"time {text!r} precedes 1900-01-01")
    return value


def _open_source(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    return source


def parse_catalog(
    source, columns: dict[str, str] | None = None
) -> tuple[list[CatalogEvent], list[Reject]]:
    """Read a header-first CSV catalog into events plus a reject list.

    ``source`` is a file path, raw bytes, or an open text stream.
    ``columns`` optionally remaps the USGS default column names
    (time, latitude, longitude, mag, depth).  Malformed rows become
    Reject entries carrying their line number; they are never silently
    dropped.
    """
    names = {
        "time": "time",
        "latitude": "latitude",
        "longitude": "longitude",
        "mag": "mag",
        "depth": "depth",
    }
    if columns:
        names.update(columns)
    stream = _open_source(source)
    close = isinstance(source, (str, Path, bytes))
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames or []
        for key in MANDATORY_COLUMNS:
            if names[key] not in header:
                raise ConfigError(f"catalog is missing mandatory column {names[key]!r}")
        has_depth = names["depth"] in header
        events: list[CatalogEvent] = []
        rejects: list[Reject] = []
        for row in reader:
            line = reader.line_num
            try:
                time = parse_time(row[names["time"]])
                latitude = float(row[names["latitude"]])
                longitude = float(row[names["longitude"]])
                magnitude = float(row[names["mag"]])
                depth_text = (row.get(names["depth"]) or "").strip() if has_depth else ""
                depth = float(depth_text) if depth_text else None
            except (ValueError, TypeError) as exc:
                rejects.append(Reject(line=line, reason=str(exc)))
                continue
            if not -90.0 <= latitude <= 90.0:
                rejects.append(Reject(line=line, reason=f"latitude {latitude} out of range"))
                continue
            if not -180.0 <= longitude <= 180.0:
                rejects.append(Reject(line=line, reason=f"longitude {longitude} out of range"))
                continue
            if not math.isfinite(magnitude) or magnitude < 0.0:
                rejects.append(Reject(line=line, reason=f"bad magnitude {magnitude}"))
                continue
            if depth is not None and depth < 0.0:
                rejects.append(Reject(line=line, reason=f"negative depth {depth}"))
                continue
            events.append(
                CatalogEvent(
                    time=time,
                    latitude=latitude,
                    longitude=longitude,
                    magnitude=magnitude,
                    depth=depth,
                )
            )
        return events, rejects
    finally:
        if close:
            stream.close()


def serialize_catalog(events) -> str:
    """CSV text that parse_catalog reads back unchanged."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["time", "latitude", "longitude", "depth", "mag"])
    for event in events:
        writer.writerow(
            [
                event.time.strftime("%Y-%m-%dT%H:%M:%SZ"),
                str(float(event.latitude)),
                str(float(event.longitude)),
                "" if event.depth is None else str(float(event.depth)),
                str(float(event.magnitude)),
            ]
        )
    return out.getvalue()


def deduplicate(events) -> list[CatalogEvent]:
    """Drop exact (time, latitude, longitude, magnitude) repeats.

    First occurrence wins; order is preserved.
    """
    seen: set[tuple] = set()
    unique: list[CatalogEvent] = []
    for event in events:
        key = (event.time, event.latitude, event.longitude, event.magnitude)
        if key in seen:
            continue
        seen.add(key)
        unique.append(event)
    return unique


def filter_events(
    events,
    min_magnitude: float,
    time_range: tuple[datetime, datetime],
    grid: RegionGrid,
) -> list[CatalogEvent]:
    """Keep events with magnitude >= threshold, time inside the closed
    range, and location inside the (closed) grid bounding box."""
    start, end = time_range
    if start.tzinfo is None:
        start = start.replace(tzinfo=timezone.utc)
    if end.tzinfo is None:
        end = end.replace(tzinfo=timezone.utc)
    if not start < end:
        raise ConfigError(f"time range start {start} must precede end {end}")
    if not math.isfinite(min_magnitude):
        raise ConfigError(f"min_magnitude must be finite, got {min_magnitude}")
    return [
        event
        for event in events
        if event.magnitude >= min_magnitude
        and start <= event.time <= end
        and grid.contains(event.latitude, event.longitude)
    ]
