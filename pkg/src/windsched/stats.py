"""Descriptive statistics over aligned weather and energy data.

Conventions, stated once and used consistently:

* Correlations use pairwise deletion: each pair of series is compared over
  the rows where both values are present.
* Standardization uses the population (divide-by-n) standard deviation.
  The regression solve downstream is invariant to this choice as long as it
  is applied consistently.
* Wind direction is treated as a plain linear variable in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .dataio import ATTRIBUTES, COLUMNS, AlignedDataset, EnergyRecord
from .errors import (
    ConstantSeriesError,
    InsufficientDataError,
    ZeroVarianceError,
)


def pearson(x, y) -> float:
    """Sample Pearson correlation of the complete pairs of two series.

    Rows where either value is NaN are deleted pairwise before computing.
    Raises InsufficientDataError with fewer than 2 complete pairs and
    ConstantSeriesError if either series is constant on them.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    mask = np.isfinite(x) & np.isfinite(y)
    xm = x[mask]
    ym = y[mask]
    if xm.size < 2:
        raise InsufficientDataError(f"need >= 2 complete pairs, have {xm.size}")
    dx = xm - xm.mean()
    dy = ym - ym.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ConstantSeriesError("correlation undefined for a constant series")
    return float(np.dot(dx, dy)) / math.sqrt(sxx * syy)


@dataclass(eq=False)
class CorrelationMatrix:
    """Symmetric Pearson matrix over ``COLUMNS`` (wind energy first)."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise ValueError("matrix shape does not match labels")
        if not np.array_equal(self.values, self.values.T):
            raise ValueError("correlation matrix must be exactly symmetric")
        if not np.all(self.values.diagonal() == 1.0):
            raise ValueError("correlation matrix must have a unit diagonal")
        if np.any(np.abs(self.values) > 1.0 + 1e-12):
            raise ValueError("correlation entries must lie in [-1, 1]")
        self.values.setflags(write=False)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def value(self, a: str, b: str) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def energy_vector(self) -> np.ndarray:
        """Correlation of each weather attribute with wind energy."""
        return self.values[1:, 0].copy()

    def attribute_submatrix(self) -> np.ndarray:
        """The attribute-by-attribute block (everything but wind energy)."""
        return self.values[1:, 1:].copy()

    def to_json_dict(self) -> dict:
        return {"labels": list(self.labels), "values": [[float(v) for v in row] for row in self.values]}

    @classmethod
    def from_json_dict(cls, data: dict) -> "CorrelationMatrix":
        return cls(labels=tuple(data["labels"]), values=np.asarray(data["values"], dtype=np.float64))

    def to_csv_text(self) -> str:
        lines = ["," + ",".join(self.labels)]
        for label, row in zip(self.labels, self.values):
            lines.append(label + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def correlation_matrix(data: AlignedDataset) -> CorrelationMatrix:
    """All pairwise correlations of the aligned columns, each pair computed once.

    The result is exactly symmetric with an exactly unit diagonal. Errors
    from ``pearson`` propagate tagged with the offending column pair.
    """
    n = len(COLUMNS)
    values = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            try:
                r = pearson(data.values[:, i], data.values[:, j])
            except (ConstantSeriesError, InsufficientDataError) as exc:
                raise type(exc)(f"{COLUMNS[i]} vs {COLUMNS[j]}: {exc}") from exc
            values[i, j] = r
            values[j, i] = r
    return CorrelationMatrix(labels=COLUMNS, values=values)


@dataclass(eq=False)
class StandardizationParams:
    """Per-column mean and population standard deviation in original units."""

    labels: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (len(self.labels),) or self.std.shape != (len(self.labels),):
            raise ValueError("mean/std shape does not match labels")
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.std)):
            raise ValueError("standardization parameters must be finite")
        if np.any(self.std <= 0.0):
            raise ValueError("every stored standard deviation must be > 0")
        self.mean.setflags(write=False)
        self.std.setflags(write=False)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def transform(self, label: str, value):
        i = self.index(label)
        return (value - self.mean[i]) / self.std[i]

    def inverse(self, label: str, z):
        i = self.index(label)
        return z * self.std[i] + self.mean[i]

    def to_json_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "StandardizationParams":
        return cls(labels=tuple(data["labels"]), mean=data["mean"], std=data["std"])


def standardization_params(data: AlignedDataset) -> StandardizationParams:
    """Mean and population stddev of every column over its non-missing rows."""
    means = np.empty(len(COLUMNS))
    stds = np.empty(len(COLUMNS))
    for i, name in enumerate(COLUMNS):
        col = data.values[:, i]
        vals = col[np.isfinite(col)]
        if vals.size == 0:
            raise InsufficientDataError(f"column {name!r} has no values")
        means[i] = vals.mean()
        stds[i] = math.sqrt(float(np.mean((vals - means[i]) ** 2)))
        if stds[i] == 0.0:
            raise ZeroVarianceError(f"column {name!r} is constant")
    return StandardizationParams(labels=COLUMNS, mean=means, std=stds)


def standardize(data: AlignedDataset) -> tuple[AlignedDataset, StandardizationParams]:
    """Replace each non-missing value by (value - mean) / stddev per column.

    Missing flags are preserved. The returned params invert the transform.
    """
    params = standardization_params(data)
    z = (data.values - params.mean) / params.std
    return AlignedDataset(timestamps=data.timestamps.copy(), values=z), params


def destandardize(data: AlignedDataset, params: StandardizationParams) -> AlignedDataset:
    """Invert ``standardize`` using the stored parameters."""
    raw = data.values * params.std + params.mean
    return AlignedDataset(timestamps=data.timestamps.copy(), values=raw)


@dataclass(eq=False)
class MonthlyDistribution:
    """Histogram and summary of wind energy for one month-of-year."""

    month: int
    bin_edges: np.ndarray
    counts: np.ndarray
    count: int
    minimum: float
    maximum: float
    mean: float
    median: float

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if not 1 <= self.month <= 12:
            raise ValueError("month must be in 1..12")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if int(self.counts.sum()) != self.count:
            raise ValueError("bin counts must sum to the month's sample count")


def monthly_distribution(
    energy: Iterable[EnergyRecord], bin_width: float = 1.0
) -> list[MonthlyDistribution]:
    """Per-month-of-year wind-energy distributions, pooled across years.

    Bins start at 0 MW with the given width; records with a missing value
    are skipped. Returns one entry per month present, in calendar order.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    by_month: dict[int, list[float]] = {}
    for rec in energy:
        if rec.wind_energy is None:
            continue
        month = datetime.fromtimestamp(rec.timestamp, tz=timezone.utc).month
        by_month.setdefault(month, []).append(rec.wind_energy)

    out = []
    for month in sorted(by_month):
        vals = np.asarray(by_month[month], dtype=np.float64)
        top = float(vals.max())
        n_bins = max(1, math.ceil(top / bin_width))
        while n_bins * bin_width < top:  # guard against float round-down
            n_bins += 1
        edges = np.arange(n_bins + 1, dtype=np.float64) * bin_width
        counts, _ = np.histogram(vals, bins=edges)
        out.append(
            MonthlyDistribution(
                month=month,
                bin_edges=edges,
                counts=counts,
                count=vals.size,
                minimum=float(vals.min()),
                maximum=top,
                mean=float(vals.mean()),
                median=float(np.median(vals)),
            )
        )
    return out


def relation_extract(data: AlignedDataset, x_name: str, y_name: str) -> tuple[np.ndarray, np.ndarray]:
    """x/y columns of the complete pairs of two columns, for external plotting."""
    x = data.column(x_name)
    y = data.column(y_name)
    mask = np.isfinite(x) & np.isfinite(y)
    return x[mask], y[mask]


def seasonal_extract(data: AlignedDataset, name: str) -> tuple[np.ndarray, np.ndarray]:
    """(day-of-year mod 365, value) pairs for one column, pooled across years."""
    col = data.column(name)
    mask = np.isfinite(col)
    days = np.array(
        [
            datetime.fromtimestamp(int(ts), tz=timezone.utc).timetuple().tm_yday % 365
            for ts in data.timestamps[mask]
        ],
        dtype=np.int64,
    )
    return days, col[mask]
