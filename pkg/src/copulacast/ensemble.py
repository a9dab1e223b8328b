"""Adaptive exponential weighting of the forecaster bank.

Each model t carries a validation error stream err^t(1..R_t).  The ensemble
forms cumulative errors CE^t(r), a per-model equilibrium factor
lambda_t = sqrt(1 / ln R_t), and softmin weights

    w^t(r) = exp(-lambda_t CE^t(r)) / sum_n exp(-lambda_n CE^n(r)),

then combines the models' holdout forecasts with the final-round weights.
Models with fewer rounds than the longest stream hold their CE fixed at
CE^t(R_t) for the remaining rounds.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np


def cumulative_error(errs, r):
    """Prefix sum CE(r) of the first r round errors (1-indexed).

    Args:
        errs: per-round errors, all >= 0.
        r: round, 1 <= r <= len(errs).
    """
    errs = np.asarray(errs, dtype=float)
    if errs.ndim != 1 or errs.size == 0:
        raise ValueError("errs must be a non-empty 1-d sequence")
    if np.any(errs < 0) or np.any(~np.isfinite(errs)):
        raise ValueError("errors must be finite and non-negative")
    if not 1 <= r <= errs.size:
        raise ValueError(f"round {r} out of range 1..{errs.size}")
    return float(errs[:r].sum())


def compute_lambda(n_rounds):
    """Equilibrium factor sqrt(1 / ln R) for a model with R training rounds.

    Args:
        n_rounds: R >= 2 (ln R must be positive).
    """
    if n_rounds <= 1:
        raise ValueError("n_rounds must be >= 2: ln R is not positive below that")
    return math.sqrt(1.0 / math.log(n_rounds))


def update_weights(ce, lambdas):
    """Softmin weights from cumulative errors and per-model factors.

    Computed in log space with max subtraction so large lambda * CE products
    never underflow the whole vector.

    Args:
        ce: length-N cumulative errors, finite and >= 0.
        lambdas: length-N equilibrium factors.

    Returns:
        Length-N weight vector on the simplex.
    """
    ce = np.asarray(ce, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if ce.ndim != 1 or ce.size == 0:
        raise ValueError("ce must be a non-empty 1-d sequence")
    if ce.shape != lambdas.shape:
        raise ValueError("ce and lambdas must have the same length")
    if np.any(~np.isfinite(ce)) or np.any(ce < 0):
        raise ValueError("ce must be finite and non-negative")
    scores = -lambdas * ce
    scores -= scores.max()
    expd = np.exp(scores)
    return expd / expd.sum()


def aggregate(preds, weights):
    """Weighted sum of the models' forecasts for one period."""
    preds = np.asarray(preds, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if preds.shape != weights.shape or preds.ndim != 1:
        raise ValueError("preds and weights must be 1-d of equal length")
    if np.any(~np.isfinite(preds)):
        raise ValueError("preds must be finite")
    return float(preds @ weights)


@dataclass
class EnsembleState:
    """Full weighting history of one ensemble run.

    err and ce hold each model's own stream (length R_t); weights holds one
    simplex vector per aligned round 1..max_t R_t.
    """

    model_names: tuple
    err: list
    ce: list
    lambdas: np.ndarray
    weights: np.ndarray
    final_weights: np.ndarray

    def __post_init__(self):
        n = len(self.model_names)
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.final_weights = np.asarray(self.final_weights, dtype=float)
        if len(self.err) != n or len(self.ce) != n or self.lambdas.size != n:
            raise ValueError("per-model fields disagree on model count")
        if self.weights.ndim != 2 or self.weights.shape[1] != n:
            raise ValueError("weights must be rounds x models")
        sums = self.weights.sum(axis=1)
        if np.any(self.weights < 0) or np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("every weight vector must lie on the simplex")

    @property
    def n_rounds(self):
        return self.weights.shape[0]


@dataclass
class ConvergenceTrace:
    """Per-round errors, cumulative errors, and weights, aligned across models."""

    model_names: tuple
    rounds: np.ndarray
    err: np.ndarray
    ce: np.ndarray
    weights: np.ndarray

    def to_csv(self, path):
        """Write plot-ready columns: round, then err/ce/w per model."""
        names = self.model_names
        header = (["round"]
                  + [f"err_{n}" for n in names]
                  + [f"ce_{n}" for n in names]
                  + [f"w_{n}" for n in names])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, r in enumerate(self.rounds):
                row = [int(r)]
                row.extend(repr(float(v)) for v in self.err[i])
                row.extend(repr(float(v)) for v in self.ce[i])
                row.extend(repr(float(v)) for v in self.weights[i])
                writer.writerow(row)


def run_ensemble(models, task):
    """Weight the bank round by round and combine its holdout forecasts.

    Args:
        models: non-empty list of TrainedForecaster, each with >= 2 rounds.
        task: ForecastTask the models were fitted on.

    Returns:
        (forecasts, EnsembleState, ConvergenceTrace) where forecasts is a
        length-horizon array combining the models' holdout forecasts with
        the final-round weights.
    """
    if not models:
        raise ValueError("model list must be non-empty")
    names = tuple(m.name for m in models)
    err_streams = [np.asarray(m.round_errors, dtype=float) for m in models]
    lambdas = np.array([compute_lambda(e.size) for e in err_streams])
    r_max = max(e.size for e in err_streams)

    ce_streams = [np.cumsum(e) for e in err_streams]
    err_rows = np.empty((r_max, len(models)))
    ce_rows = np.empty((r_max, len(models)))
    weight_rows = np.empty((r_max, len(models)))
    for r in range(1, r_max + 1):
        for t, (errs, ces) in enumerate(zip(err_streams, ce_streams)):
            own_r = min(r, errs.size)
            err_rows[r - 1, t] = errs[own_r - 1]
            ce_rows[r - 1, t] = ces[own_r - 1]
        weight_rows[r - 1] = update_weights(ce_rows[r - 1], lambdas)

    final_weights = weight_rows[-1]
    horizon = task.horizon
    if any(m.holdout_forecast.size != horizon for m in models):
        raise ValueError("a model's holdout forecast does not cover the task horizon")
    forecasts = np.array([
        aggregate(np.array([m.holdout_forecast[i] for m in models]), final_weights)
        for i in range(horizon)])

    state = EnsembleState(model_names=names, err=err_streams, ce=ce_streams,
                          lambdas=lambdas, weights=weight_rows,
                          final_weights=final_weights)
    trace = ConvergenceTrace(model_names=names,
                             rounds=np.arange(1, r_max + 1),
                             err=err_rows, ce=ce_rows, weights=weight_rows)
    return forecasts, state, trace


def ablation_order(models, task):
    """Merit order for the ablation path.

    Ascending final validation MAPE; ties broken by larger final adaptive
    weight in the full ensemble, then by name.
    """
    _, state, _ = run_ensemble(models, task)
    keyed = []
    for t, m in enumerate(models):
        keyed.append((float(m.round_errors[-1]), -float(state.final_weights[t]),
                      m.name, t))
    return [k[-1] for k in sorted(keyed)]


def ablation(models, task, actuals):
    """Grow the ensemble one model at a time and score each prefix.

    Args:
        models: list of TrainedForecaster (>= 1).
        task: ForecastTask.
        actuals: true target values over the holdout span, no zeros.

    Returns:
        List of (prefix_size, model_names, mape) triples, one per prefix in
        merit order.
    """
    from .evaluation import mape

    if not models:
        raise ValueError("model list must be non-empty")
    actuals = np.asarray(actuals, dtype=float)
    order = ablation_order(models, task)
    path = []
    for size in range(1, len(order) + 1):
        prefix = [models[i] for i in order[:size]]
        forecasts, _, _ = run_ensemble(prefix, task)
        path.append((size, tuple(m.name for m in prefix),
                     mape(actuals, forecasts)))
    return path


def ablation_to_csv(path_rows, path):
    """Write ablation rows as CSV (prefix_size, models, mape)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prefix_size", "models", "mape"])
        for size, names, value in path_rows:
            writer.writerow([int(size), "+".join(names), repr(float(value))])
