"""Linear wind-energy model: fit, predict, evaluate.

The fit solves R_xx * beta = r_xy, where R_xx is the attribute-by-attribute
correlation block and r_xy the attribute-to-energy correlation vector. On
complete data with population standardization this is algebraically
ordinary least squares on standardized variables with no intercept:
Z'Z / n equals R_xx and Z'z_y / n equals r_xy, so the two solves share a
solution (the test suite checks this equivalence directly).

Coefficients therefore live in standardized space; predictions standardize
the inputs, apply the coefficients, and map back through the stored energy
mean and stddev. Raw negative predictions clamp to zero, flagged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataio import ATTRIBUTES, COLUMNS, AlignedDataset, WeatherRecord
from .errors import (
    CollinearityError,
    ConstantSeriesError,
    InsufficientDataError,
    MissingFieldError,
)
from .stats import (
    CorrelationMatrix,
    StandardizationParams,
    correlation_matrix,
    pearson,
    standardization_params,
)

# Published fixed coefficients, one per attribute in ATTRIBUTES order.
EQ1_COEFFICIENTS = (-0.84, -0.96, -0.89, 0.71, -0.15, -0.78, -1.02)

PROVENANCE_FITTED = "fitted"
PROVENANCE_FIXED_EQ1 = "fixed-eq1"

DEFAULT_MAX_CONDITION = 1e8


@dataclass(eq=False)
class RegressionModel:
    """Standardized-space coefficients plus the standardization to raw units."""

    coefficients: np.ndarray
    standardization: StandardizationParams
    provenance: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape != (len(ATTRIBUTES),):
            raise ValueError(f"expected {len(ATTRIBUTES)} coefficients")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")
        if self.provenance not in (PROVENANCE_FITTED, PROVENANCE_FIXED_EQ1):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if tuple(self.standardization.labels) != COLUMNS:
            raise ValueError("standardization must cover wind energy plus all attributes")
        self.coefficients.setflags(write=False)

    def to_json_dict(self) -> dict:
        return {
            "format": "windsched.model",
            "version": 1,
            "attributes": list(ATTRIBUTES),
            "coefficients": [float(c) for c in self.coefficients],
            "standardization": self.standardization.to_json_dict(),
            "provenance": self.provenance,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RegressionModel":
        if data.get("format") != "windsched.model":
            raise ValueError("not a model document")
        if list(data.get("attributes", [])) != list(ATTRIBUTES):
            raise ValueError("model attribute order does not match this build")
        return cls(
            coefficients=np.asarray(data["coefficients"], dtype=np.float64),
            standardization=StandardizationParams.from_json_dict(data["standardization"]),
            provenance=data["provenance"],
            metadata=dict(data.get("metadata", {})),
        )


def save_model(model: RegressionModel, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model.to_json_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_model(path) -> RegressionModel:
    with open(path, encoding="utf-8") as handle:
        return RegressionModel.from_json_dict(json.load(handle))


def _worst_pair(corr: CorrelationMatrix) -> tuple[str, str, float]:
    block = corr.attribute_submatrix()
    off = np.abs(block - np.eye(len(ATTRIBUTES)))
    i, j = np.unravel_index(int(np.argmax(off)), off.shape)
    return ATTRIBUTES[i], ATTRIBUTES[j], float(block[i, j])


def solve_correlation_system(
    corr: CorrelationMatrix, max_condition: float = DEFAULT_MAX_CONDITION
) -> np.ndarray:
    """Solve R_xx * beta = r_xy for the standardized coefficients.

    Raises CollinearityError, naming the most correlated attribute pair,
    when the attribute block is singular or its condition number exceeds
    the bound.
    """
    r_xx = corr.attribute_submatrix()
    r_xy = corr.energy_vector()
    condition = float(np.linalg.cond(r_xx))
    if not np.isfinite(condition) or condition > max_condition:
        a, b, r = _worst_pair(corr)
        raise CollinearityError(
            f"attribute correlations are ill-conditioned (cond={condition:.3g}); "
            f"worst pair {a} / {b} at r={r:.4f}",
            worst_pair=(a, b),
        )
    return np.linalg.solve(r_xx, r_xy)


def fit_correlation_regression(
    data: AlignedDataset, max_condition: float = DEFAULT_MAX_CONDITION
) -> RegressionModel:
    """Fit the model from aligned history and capture its standardization."""
    corr = correlation_matrix(data)
    beta = solve_correlation_system(corr, max_condition=max_condition)
    params = standardization_params(data)
    r_xx = corr.attribute_submatrix()
    return RegressionModel(
        coefficients=beta,
        standardization=params,
        provenance=PROVENANCE_FITTED,
        metadata={"n_rows": len(data), "condition_number": float(np.linalg.cond(r_xx))},
    )


def eq1_fixed_model(standardization: StandardizationParams) -> RegressionModel:
    """The published fixed-coefficient model over caller-supplied standardization."""
    return RegressionModel(
        coefficients=np.asarray(EQ1_COEFFICIENTS, dtype=np.float64),
        standardization=standardization,
        provenance=PROVENANCE_FIXED_EQ1,
    )


@dataclass(eq=False)
class PredictedEnergySeries:
    """Per-slot predicted wind energy in MW, clamped at zero where flagged."""

    timestamps: np.ndarray
    values: np.ndarray
    clamped: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.clamped = np.asarray(self.clamped, dtype=bool)
        n = self.timestamps.shape[0]
        if self.values.shape != (n,) or self.clamped.shape != (n,):
            raise ValueError("series arrays must share one length")
        if n > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("prediction timestamps must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("clamped predictions cannot be negative")
        for arr in (self.timestamps, self.values, self.clamped):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)


def _standardized_attributes(model: RegressionModel, raw: np.ndarray) -> np.ndarray:
    params = model.standardization
    mean = params.mean[1:]
    std = params.std[1:]
    return (raw - mean) / std


def _predict_raw(model: RegressionModel, raw: np.ndarray) -> np.ndarray:
    """Raw (unclamped) MW predictions for rows of attribute values."""
    z = _standardized_attributes(model, raw)
    y_std = z @ model.coefficients
    return model.standardization.inverse("wind_energy", y_std)


def predict(model: RegressionModel, forecast: Sequence[WeatherRecord]) -> PredictedEnergySeries:
    """Predict wind energy for complete forecast records.

    A record with missing attributes raises MissingFieldError listing them;
    impute first if the forecast has gaps.
    """
    rows = np.empty((len(forecast), len(ATTRIBUTES)))
    timestamps = np.empty(len(forecast), dtype=np.int64)
    for k, rec in enumerate(forecast):
        missing = rec.missing_fields()
        if missing:
            raise MissingFieldError(
                f"forecast record at t={rec.timestamp} is missing: {', '.join(missing)}",
                fields=missing,
            )
        timestamps[k] = rec.timestamp
        rows[k] = [rec.value(a) for a in ATTRIBUTES]
    raw = _predict_raw(model, rows)
    clamped = raw < 0.0
    return PredictedEnergySeries(
        timestamps=timestamps, values=np.where(clamped, 0.0, raw), clamped=clamped
    )


@dataclass(frozen=True)
class EvaluationMetrics:
    """Error metrics of a model against aligned truth, in MW."""

    rmse: float
    mae: float
    pearson_r: Optional[float]
    n_rows: int

    def to_json_dict(self) -> dict:
        return {
            "rmse_mw": self.rmse,
            "mae_mw": self.mae,
            "pearson_r": self.pearson_r,
            "n_rows": self.n_rows,
        }


def evaluate(model: RegressionModel, data: AlignedDataset) -> EvaluationMetrics:
    """RMSE, MAE and predicted-vs-actual correlation over the complete rows.

    Predictions are the clamped values the model would actually emit. A
    constant prediction series yields ``pearson_r=None`` rather than an
    error.
    """
    mask = data.complete_mask()
    if int(mask.sum()) < 2:
        raise InsufficientDataError(f"need >= 2 complete rows, have {int(mask.sum())}")
    actual = data.values[mask, 0]
    raw = _predict_raw(model, data.values[mask][:, 1:])
    predicted = np.maximum(raw, 0.0)
    err = predicted - actual
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    try:
        r = pearson(predicted, actual)
    except ConstantSeriesError:
        r = None
    return EvaluationMetrics(rmse=rmse, mae=mae, pearson_r=r, n_rows=int(mask.sum()))
