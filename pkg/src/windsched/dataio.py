"""CSV ingestion and time alignment of weather and wind-energy series.

Column layouts are configured, not hardcoded: a ``CsvSpec`` maps record
fields to CSV header names, so arbitrary file layouts ingest without code
changes. Missing values are first-class: an empty or unparseable numeric
cell becomes ``None`` on the record (never a silent zero), and ``align``
carries it through as NaN in the array form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields as dc_fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, MissingColumnError, RowError

# Fixed attribute order used everywhere downstream (matrices, models, JSON).
ATTRIBUTES = (
    "temperature",
    "cloud_cover",
    "air_pressure",
    "wind_speed",
    "wind_direction",
    "precipitation",
    "sunshine",
)

# Column order of AlignedDataset.values: energy first, then the attributes.
COLUMNS = ("wind_energy",) + ATTRIBUTES

# (lower bound, upper bound, upper bound exclusive?) per bounded field.
_FIELD_BOUNDS = {
    "cloud_cover": (0.0, 1.0, False),
    "wind_direction": (0.0, 360.0, True),
    "wind_speed": (0.0, None, False),
    "precipitation": (0.0, None, False),
    "sunshine": (0.0, None, False),
    "wind_energy": (0.0, None, False),
}


def _check_bounds(name: str, value: float) -> None:
    bounds = _FIELD_BOUNDS.get(name)
    if bounds is None:
        return
    lo, hi, hi_exclusive = bounds
    if value < lo:
        raise ValueError(f"{name} must be >= {lo}, got {value}")
    if hi is not None:
        if hi_exclusive and value >= hi:
            raise ValueError(f"{name} must be < {hi}, got {value}")
        if not hi_exclusive and value > hi:
            raise ValueError(f"{name} must be <= {hi}, got {value}")


@dataclass(frozen=True)
class WeatherRecord:
    """One weather observation. ``None`` marks a missing field."""

    timestamp: int
    temperature: Optional[float] = None
    cloud_cover: Optional[float] = None
    air_pressure: Optional[float] = None
    wind_speed: Optional[float] = None
    wind_direction: Optional[float] = None
    precipitation: Optional[float] = None
    sunshine: Optional[float] = None

    def __post_init__(self):
        for name in ATTRIBUTES:
            value = getattr(self, name)
            if value is not None:
                _check_bounds(name, value)

    def value(self, name: str) -> Optional[float]:
        if name not in ATTRIBUTES:
            raise KeyError(name)
        return getattr(self, name)

    def missing_fields(self) -> tuple[str, ...]:
        return tuple(name for name in ATTRIBUTES if getattr(self, name) is None)

    @property
    def complete(self) -> bool:
        return not self.missing_fields()


@dataclass(frozen=True)
class EnergyRecord:
    """One wind-energy measurement in MW. ``None`` marks a missing value."""

    timestamp: int
    wind_energy: Optional[float] = None

    def __post_init__(self):
        if self.wind_energy is not None:
            _check_bounds("wind_energy", self.wind_energy)


@dataclass(frozen=True)
class CsvSpec:
    """Column mapping for one CSV file.

    ``columns`` maps record field names (``timestamp`` plus the fields the
    loader needs) to header names in the file. ``timestamp_format`` is
    ``"iso8601"`` or ``"epoch"`` (integer seconds).
    """

    columns: Mapping[str, str]
    timestamp_format: str = "iso8601"
    delimiter: str = ","

    def __post_init__(self):
        if self.timestamp_format not in ("iso8601", "epoch"):
            raise ValueError(f"unknown timestamp_format {self.timestamp_format!r}")
        if "timestamp" not in self.columns:
            raise ValueError("column mapping must include 'timestamp'")


WEATHER_DEFAULT_SPEC = CsvSpec(columns={"timestamp": "timestamp", **{a: a for a in ATTRIBUTES}})
ENERGY_DEFAULT_SPEC = CsvSpec(columns={"timestamp": "timestamp", "wind_energy": "wind_energy"})


def parse_timestamp(text: str, timestamp_format: str) -> int:
    """Parse a timestamp cell to epoch seconds (UTC). Raises ValueError."""
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    if timestamp_format == "epoch":
        return int(text)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    moment = datetime.fromisoformat(text)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return int(moment.timestamp())


def format_timestamp(ts: int, timestamp_format: str) -> str:
    if timestamp_format == "epoch":
        return str(int(ts))
    moment = datetime.fromtimestamp(int(ts), tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_cell(text: str) -> Optional[float]:
    # Unparseable or non-finite numeric cells are missing, never failures.
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def format_cell(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return ""
    return repr(float(value))


def _read_rows(path, spec: CsvSpec, needed_fields: Sequence[str]):
    """Yield (line_number, {field: cell_text}) for each data row."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle, delimiter=spec.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        positions = {}
        for fname in needed_fields:
            column = spec.columns.get(fname)
            if column is None:
                raise MissingColumnError(fname, path)
            if column not in header:
                raise MissingColumnError(column, path)
            positions[fname] = header.index(column)
        width = len(header)
        for row in reader:
            if not row:
                continue  # blank line
            if len(row) != width:
                raise RowError(reader.line_num, f"expected {width} cells, got {len(row)}")
            yield reader.line_num, {f: row[i] for f, i in positions.items()}


def load_weather_csv(path, spec: CsvSpec = WEATHER_DEFAULT_SPEC) -> list[WeatherRecord]:
    """Load weather records in file order.

    Unparseable numeric cells become missing flags. A bad timestamp or an
    out-of-range value (e.g. cloud cover above 1) is a row-level error with
    the offending line number.
    """
    records = []
    for line, cells in _read_rows(path, spec, ("timestamp",) + ATTRIBUTES):
        try:
            ts = parse_timestamp(cells["timestamp"], spec.timestamp_format)
        except ValueError as exc:
            raise RowError(line, f"bad timestamp {cells['timestamp']!r}: {exc}") from exc
        values = {name: _parse_cell(cells[name]) for name in ATTRIBUTES}
        try:
            records.append(WeatherRecord(timestamp=ts, **values))
        except ValueError as exc:
            raise RowError(line, str(exc)) from exc
    return records


def load_energy_csv(path, spec: CsvSpec = ENERGY_DEFAULT_SPEC) -> list[EnergyRecord]:
    """Load energy records in file order. Negative energy is a row-level error."""
    records = []
    for line, cells in _read_rows(path, spec, ("timestamp", "wind_energy")):
        try:
            ts = parse_timestamp(cells["timestamp"], spec.timestamp_format)
        except ValueError as exc:
            raise RowError(line, f"bad timestamp {cells['timestamp']!r}: {exc}") from exc
        try:
            records.append(EnergyRecord(timestamp=ts, wind_energy=_parse_cell(cells["wind_energy"])))
        except ValueError as exc:
            raise RowError(line, str(exc)) from exc
    return records


def write_weather_csv(records: Iterable[WeatherRecord], path, spec: CsvSpec = WEATHER_DEFAULT_SPEC) -> None:
    """Write records in the canonical form the loaders round-trip byte-identically."""
    _write_csv(path, spec, ("timestamp",) + ATTRIBUTES, records)


def write_energy_csv(records: Iterable[EnergyRecord], path, spec: CsvSpec = ENERGY_DEFAULT_SPEC) -> None:
    _write_csv(path, spec, ("timestamp", "wind_energy"), records)


def _write_csv(path, spec, field_names, records):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter=spec.delimiter, lineterminator="\n")
        writer.writerow([spec.columns[f] for f in field_names])
        for rec in records:
            row = [format_timestamp(rec.timestamp, spec.timestamp_format)]
            for name in field_names[1:]:
                row.append(format_cell(getattr(rec, name)))
            writer.writerow(row)


@dataclass(eq=False)
class AlignedDataset:
    """Time-joined weather and energy samples.

    ``values`` is a float array of shape (n, 8) in ``COLUMNS`` order with
    NaN marking missing cells. Timestamps are strictly increasing epoch
    seconds.
    """

    timestamps: np.ndarray
    values: np.ndarray

    column_names = COLUMNS
    attribute_names = ATTRIBUTES

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(COLUMNS):
            raise ValueError(f"values must have shape (n, {len(COLUMNS)})")
        if self.timestamps.shape != (self.values.shape[0],):
            raise ValueError("timestamps and values row counts differ")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DataError("aligned timestamps must be strictly increasing")
        self.timestamps.setflags(write=False)
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, COLUMNS.index(name)]

    @property
    def energy(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def attribute_matrix(self) -> np.ndarray:
        return self.values[:, 1:]

    def complete_mask(self) -> np.ndarray:
        return np.all(np.isfinite(self.values), axis=1)

    def weather_records(self) -> list[WeatherRecord]:
        out = []
        for ts, row in zip(self.timestamps, self.values):
            vals = {n: (None if not np.isfinite(v) else float(v)) for n, v in zip(ATTRIBUTES, row[1:])}
            out.append(WeatherRecord(timestamp=int(ts), **vals))
        return out

    def energy_records(self) -> list[EnergyRecord]:
        return [
            EnergyRecord(timestamp=int(ts), wind_energy=None if not np.isfinite(v) else float(v))
            for ts, v in zip(self.timestamps, self.values[:, 0])
        ]


@dataclass(frozen=True)
class JoinReport:
    """Counts emitted by ``align``; drops are reported, never fatal."""

    weather_rows: int
    energy_rows: int
    matched: int
    dropped_weather: int
    dropped_energy: int
    tolerance_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "weather_rows": self.weather_rows,
            "energy_rows": self.energy_rows,
            "matched": self.matched,
            "dropped_weather": self.dropped_weather,
            "dropped_energy": self.dropped_energy,
            "tolerance_seconds": self.tolerance_seconds,
        }


def align(
    weather: Sequence[WeatherRecord],
    energy: Sequence[EnergyRecord],
    tolerance: float = 1800.0,
) -> tuple[AlignedDataset, JoinReport]:
    """Join energy records to their nearest weather record within ``tolerance`` seconds.

    The join is one-to-one and monotone: each weather record matches at most
    one energy record, so the output never exceeds min(len(weather),
    len(energy)) rows. Equidistant weather neighbours resolve to the earlier
    timestamp. Unmatched records on either side are dropped and counted in
    the report. Row timestamps come from the energy series.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    w_times = [r.timestamp for r in weather]
    e_times = [r.timestamp for r in energy]
    if any(b < a for a, b in zip(w_times, w_times[1:])):
        raise DataError("weather records must be sorted by timestamp")
    if any(b <= a for a, b in zip(e_times, e_times[1:])):
        raise DataError("energy timestamps must be strictly increasing")

    timestamps = []
    rows = []
    i = 0
    for rec in energy:
        # Advance while the next unconsumed weather record is strictly closer;
        # a skipped record can never be nearest for any later energy time.
        while i + 1 < len(weather) and abs(w_times[i + 1] - rec.timestamp) < abs(w_times[i] - rec.timestamp):
            i += 1
        if i < len(weather) and abs(w_times[i] - rec.timestamp) <= tolerance:
            w = weather[i]
            row = [np.nan if rec.wind_energy is None else rec.wind_energy]
            row.extend(np.nan if w.value(a) is None else w.value(a) for a in ATTRIBUTES)
            timestamps.append(rec.timestamp)
            rows.append(row)
            i += 1

    matched = len(rows)
    dataset = AlignedDataset(
        timestamps=np.asarray(timestamps, dtype=np.int64),
        values=np.asarray(rows, dtype=np.float64).reshape(matched, len(COLUMNS)),
    )
    report = JoinReport(
        weather_rows=len(weather),
        energy_rows=len(energy),
        matched=matched,
        dropped_weather=len(weather) - matched,
        dropped_energy=len(energy) - matched,
        tolerance_seconds=float(tolerance),
    )
    return dataset, report
