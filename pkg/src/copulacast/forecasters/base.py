"""Shared forecaster task description and trained-model container.

Every forecaster in the bank trains on the completed panel restricted to the
task's training span, tracks a validation error per training round, and
produces two forecast paths: the validation span forecast recursively from
the end of training (final round), and the holdout span forecast recursively
from the end of validation.  Multi-step paths feed model forecasts back in
place of unseen actuals; covariate columns, where a model uses them, are
read from the completed panel (they are realized by forecast time in the
retrospective protocol).
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import FitError


@dataclass(frozen=True)
class ForecastTask:
    """Forecast specification over a completed panel.

    Ranges are half-open [start, stop) row spans; validation follows
    training and the holdout covers the `horizon` rows after validation.

    Attributes:
        target_column: index of the series to forecast.
        horizon: number of holdout periods, >= 1.
        train_range: training span.
        validation_range: validation span, starting at train_range[1].
        feature_columns: covariate column indices; never includes the target.
    """

    target_column: int
    horizon: int
    train_range: tuple
    validation_range: tuple
    feature_columns: tuple = ()

    def __post_init__(self):
        t0, t1 = self.train_range
        v0, v1 = self.validation_range
        if not (0 <= t0 < t1):
            raise ValueError("train_range must be non-empty with start >= 0")
        if v0 != t1 or v1 <= v0:
            raise ValueError("validation_range must be non-empty and start "
                             "where train_range stops")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.target_column in self.feature_columns:
            raise ValueError("target column cannot appear among the features")

    @property
    def train_stop(self):
        return self.train_range[1]

    @property
    def validation_stop(self):
        return self.validation_range[1]

    @property
    def n_validation(self):
        return self.validation_range[1] - self.validation_range[0]

    @property
    def holdout_indices(self):
        return tuple(range(self.validation_stop, self.validation_stop + self.horizon))

    def required_rows(self):
        return self.validation_stop

    def check_matrix(self, matrix):
        """Validate a completed panel against this task."""
        if not matrix.mask.all():
            raise FitError("forecasters require a completed (fully observed) panel")
        if matrix.n_rows < self.required_rows():
            raise FitError(f"panel has {matrix.n_rows} rows but the task needs "
                           f"{self.required_rows()}")
        cols = (self.target_column,) + tuple(self.feature_columns)
        if max(cols) >= matrix.n_cols or min(cols) < 0:
            raise FitError("task references columns outside the panel")


@dataclass
class TrainedForecaster:
    """A fitted model with its round-wise validation errors and forecasts.

    Attributes:
        name: roster name of the model.
        round_errors: validation MAPE after each training round, length >= 2.
        validation_forecast: final-round forecast over the validation span.
        holdout_forecast: forecast over the holdout span.
        validation_start: first row index of the validation span.
        holdout_start: first row index of the holdout span.
        hyper: hyperparameters the model was trained with.
        params: fitted parameters, JSON-serializable.
    """

    name: str
    round_errors: np.ndarray
    validation_forecast: np.ndarray
    holdout_forecast: np.ndarray
    validation_start: int
    holdout_start: int
    hyper: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.round_errors = np.asarray(self.round_errors, dtype=float)
        self.validation_forecast = np.asarray(self.validation_forecast, dtype=float)
        self.holdout_forecast = np.asarray(self.holdout_forecast, dtype=float)
        if self.round_errors.size < 2:
            raise ValueError("round_errors must cover at least two rounds")
        if np.any(~np.isfinite(self.round_errors)) or np.any(self.round_errors < 0):
            raise ValueError("round_errors must be finite and non-negative")

    @property
    def n_rounds(self):
        return int(self.round_errors.size)

    def predict(self, t):
        """Forecast for absolute row index t within the validation or holdout span."""
        v0 = self.validation_start
        if v0 <= t < v0 + self.validation_forecast.size:
            return float(self.validation_forecast[t - v0])
        h0 = self.holdout_start
        if h0 <= t < h0 + self.holdout_forecast.size:
            return float(self.holdout_forecast[t - h0])
        raise ValueError(f"no forecast stored for row {t}")

    def to_json(self):
        return {"name": self.name,
                "round_errors": [float(v) for v in self.round_errors],
                "validation_forecast": [float(v) for v in self.validation_forecast],
                "holdout_forecast": [float(v) for v in self.holdout_forecast],
                "validation_start": int(self.validation_start),
                "holdout_start": int(self.holdout_start),
                "hyper": self.hyper, "params": self.params}

    @classmethod
    def from_json(cls, obj):
        return cls(name=obj["name"],
                   round_errors=np.asarray(obj["round_errors"], dtype=float),
                   validation_forecast=np.asarray(obj["validation_forecast"],
                                                  dtype=float),
                   holdout_forecast=np.asarray(obj["holdout_forecast"], dtype=float),
                   validation_start=int(obj["validation_start"]),
                   holdout_start=int(obj["holdout_start"]),
                   hyper=obj.get("hyper", {}), params=obj.get("params", {}))


def validation_mape(actual, forecast):
    """Mean absolute percentage error of a validation path, in percent."""
    actual = np.asarray(actual, dtype=float)
    forecast = np.asarray(forecast, dtype=float)
    if np.any(actual == 0):
        raise ValueError("validation actuals contain a zero; MAPE is undefined")
    return float(np.mean(np.abs(actual - forecast) / np.abs(actual)) * 100.0)


def pad_rounds(errors):
    """Repeat the last error so every model reports at least two rounds."""
    errors = list(errors)
    while len(errors) < 2:
        errors.append(errors[-1])
    return np.asarray(errors, dtype=float)
