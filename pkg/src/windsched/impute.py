"""Gap filling via a multivariate Gaussian over energy plus weather attributes.

A model is fit from the complete rows of an aligned dataset (no EM; the fit
is deterministic). Missing fields of a row are then set to their conditional
mean given the observed fields:

    fill = mu_m + Sigma_mo @ pinv(Sigma_oo) @ (x_o - mu_o)

The observed-block inverse is a tolerance-thresholded pseudo-inverse
(singular values below 1e-10 of the largest are dropped), so exactly
collinear training data still reproduces its linear relations, and a
rank-deficient observed block degrades toward the marginal means instead of
failing. Degraded fills raise DegradedImputationWarning.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .dataio import ATTRIBUTES, COLUMNS, AlignedDataset, WeatherRecord, _FIELD_BOUNDS
from .errors import InsufficientDataError

# Relative singular-value cutoff for the observed-block pseudo-inverse.
PINV_RCOND = 1e-10


class DegradedImputationWarning(UserWarning):
    """Observed-block covariance was rank deficient; fill quality is reduced."""


@dataclass(eq=False)
class GaussianModel:
    """Sample mean vector and covariance matrix in original units."""

    labels: tuple[str, ...]
    mean: np.ndarray
    covariance: np.ndarray
    n_rows: int
    singular: bool

    def __post_init__(self):
        self.labels = tuple(self.labels)
        d = len(self.labels)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.mean.shape != (d,) or self.covariance.shape != (d, d):
            raise ValueError("mean/covariance shape does not match labels")
        if not np.array_equal(self.covariance, self.covariance.T):
            raise ValueError("covariance must be symmetric")
        if np.any(self.covariance.diagonal() < 0):
            raise ValueError("covariance diagonal must be >= 0")
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)

    def to_json_dict(self) -> dict:
        return {
            "format": "windsched.gaussian",
            "version": 1,
            "labels": list(self.labels),
            "mean": [float(v) for v in self.mean],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "n_rows": self.n_rows,
            "singular": self.singular,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GaussianModel":
        if data.get("format") != "windsched.gaussian":
            raise ValueError("not a gaussian model document")
        return cls(
            labels=tuple(data["labels"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            covariance=np.asarray(data["covariance"], dtype=np.float64),
            n_rows=int(data["n_rows"]),
            singular=bool(data["singular"]),
        )


def save_gaussian(model: GaussianModel, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model.to_json_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_gaussian(path) -> GaussianModel:
    with open(path, encoding="utf-8") as handle:
        return GaussianModel.from_json_dict(json.load(handle))


def fit_gaussian(data: AlignedDataset) -> GaussianModel:
    """Fit mean and sample covariance (ddof=1) over the complete rows only.

    Requires more complete rows than dimensions (at least 9). A singular
    covariance is allowed at fit time and flagged on the model.
    """
    mask = data.complete_mask()
    rows = data.values[mask]
    needed = len(COLUMNS) + 1
    if rows.shape[0] < needed:
        raise InsufficientDataError(
            f"need >= {needed} complete rows to fit, have {rows.shape[0]}"
        )
    mean = rows.mean(axis=0)
    cov = np.cov(rows, rowvar=False, ddof=1)
    cov = (cov + cov.T) / 2.0  # force exact symmetry
    s = np.linalg.svd(cov, compute_uv=False)
    singular = bool(s[0] == 0.0 or s[-1] <= PINV_RCOND * s[0])
    return GaussianModel(
        labels=COLUMNS, mean=mean, covariance=cov, n_rows=int(rows.shape[0]), singular=singular
    )


@dataclass(frozen=True)
class ImputedRow:
    """A completed row plus per-field fill flags."""

    values: np.ndarray
    imputed: np.ndarray  # bool per column, True where a value was filled
    degraded: bool


def impute_row(model: GaussianModel, values: Sequence) -> ImputedRow:
    """Fill the missing entries of one row (NaN or None marks missing).

    Observed entries are returned untouched. With nothing observed the
    marginal means are used. Fills are raw conditional means; no domain
    clipping happens here.
    """
    x = np.array(
        [np.nan if v is None else float(v) for v in values], dtype=np.float64
    )
    if x.shape != model.mean.shape:
        raise ValueError(f"row must have {model.mean.shape[0]} entries")
    observed = np.isfinite(x)
    missing = ~observed
    if not missing.any():
        return ImputedRow(values=x, imputed=missing, degraded=False)
    out = x.copy()
    if not observed.any():
        out[:] = model.mean
        return ImputedRow(values=out, imputed=missing, degraded=False)

    sigma_oo = model.covariance[np.ix_(observed, observed)]
    sigma_mo = model.covariance[np.ix_(missing, observed)]
    s = np.linalg.svd(sigma_oo, compute_uv=False)
    degraded = bool(s[0] == 0.0 or s[-1] <= PINV_RCOND * s[0])
    if degraded:
        warnings.warn(
            "observed-block covariance is rank deficient; "
            "fills degrade toward marginal means",
            DegradedImputationWarning,
            stacklevel=2,
        )
    gain = sigma_mo @ np.linalg.pinv(sigma_oo, rcond=PINV_RCOND, hermitian=True)
    out[missing] = model.mean[missing] + gain @ (x[observed] - model.mean[observed])
    return ImputedRow(values=out, imputed=missing, degraded=degraded)


def _clip_to_domain(name: str, value: float) -> float:
    bounds = _FIELD_BOUNDS.get(name)
    if bounds is None:
        return value
    lo, hi, hi_exclusive = bounds
    if value < lo:
        return lo
    if hi is not None:
        if hi_exclusive and value >= hi:
            return float(np.nextafter(hi, lo))
        if not hi_exclusive and value > hi:
            return hi
    return value


def impute_record(
    model: GaussianModel, record: WeatherRecord
) -> tuple[WeatherRecord, tuple[str, ...]]:
    """Fill the missing attributes of a weather record.

    Wind energy is treated as unobserved (this is the forecast-completion
    path). Filled values are clipped into each field's declared domain so
    the returned record satisfies its own invariants.
    """
    row = [np.nan]  # wind energy unknown
    row.extend(record.value(a) for a in ATTRIBUTES)
    result = impute_row(model, row)
    filled = {}
    imputed_names = []
    for i, name in enumerate(ATTRIBUTES, start=1):
        if result.imputed[i]:
            filled[name] = _clip_to_domain(name, float(result.values[i]))
            imputed_names.append(name)
    if not filled:
        return record, ()
    return replace(record, **filled), tuple(imputed_names)
