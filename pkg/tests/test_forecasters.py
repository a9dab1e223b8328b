"""Tests for the five-forecaster bank and its shared task plumbing."""

import math

import numpy as np
import pytest

from copulacast.dataset import gen_seasonal_load
from copulacast.errors import FitError
from copulacast.forecasters.base import (
    ForecastTask,
    TrainedForecaster,
    pad_rounds,
    validation_mape,
)
from copulacast.forecasters.baselines import fit_ridge_ar, naive_seasonal
from copulacast.forecasters.gbt import fit_gbt, fit_gbt_arrays
from copulacast.forecasters.tcn import (
    _init_params,
    _loss_and_grads,
    dilated_causal_conv,
    fit_tcn,
    receptive_field,
)
from copulacast.forecasters.trmf import (
    extrapolate_factors,
    fit_trmf,
    fit_trmf_forecaster,
    forecast_trmf,
)
from copulacast.rng import rng_for


def benchmark_task(n_features=12):
    return ForecastTask(target_column=0, horizon=12, train_range=(0, 84),
                        validation_range=(84, 96),
                        feature_columns=tuple(range(1, n_features + 1)))


def benchmark_panel():
    return gen_seasonal_load(n_periods=108, n_features=12, seed=11)


# ------------------------------------------------------------------- task

def test_forecast_task_validation_rules():
    with pytest.raises(ValueError):
        ForecastTask(target_column=0, horizon=12, train_range=(0, 84),
                     validation_range=(85, 96))
    with pytest.raises(ValueError):
        ForecastTask(target_column=0, horizon=0, train_range=(0, 84),
                     validation_range=(84, 96))
    with pytest.raises(ValueError):
        ForecastTask(target_column=1, horizon=12, train_range=(0, 84),
                     validation_range=(84, 96), feature_columns=(1, 2))


def test_check_matrix_rejects_incomplete_panel():
    panel = benchmark_panel()
    masked = panel.copy()
    masked.mask[3, 0] = False
    masked.values[3, 0] = np.nan
    with pytest.raises(FitError):
        benchmark_task().check_matrix(masked)


def test_trained_forecaster_predict_spans_and_round_trip():
    tf = TrainedForecaster(name="toy",
                           round_errors=np.array([3.0, 2.0]),
                           validation_forecast=np.array([1.0, 2.0]),
                           holdout_forecast=np.array([5.0, 6.0, 7.0]),
                           validation_start=10, holdout_start=12)
    assert tf.predict(10) == 1.0
    assert tf.predict(11) == 2.0
    assert tf.predict(12) == 5.0
    assert tf.predict(14) == 7.0
    with pytest.raises(ValueError):
        tf.predict(15)
    back = TrainedForecaster.from_json(tf.to_json())
    assert back.name == tf.name
    assert np.array_equal(back.round_errors, tf.round_errors)
    assert np.array_equal(back.holdout_forecast, tf.holdout_forecast)
    assert back.validation_start == tf.validation_start


def test_validation_mape_oracle_and_pad_rounds():
    assert validation_mape(np.array([100.0, 200.0]),
                           np.array([110.0, 180.0])) == 10.0
    padded = pad_rounds(np.array([5.0]))
    assert padded.tolist() == [5.0, 5.0]
    assert pad_rounds(np.array([4.0, 3.0])).tolist() == [4.0, 3.0]


# --------------------------------------------------------------- baselines

def test_naive_seasonal_is_exact_on_periodic_series():
    panel = gen_seasonal_load(n_periods=108, noise_sd=0.0, trend=0.0, seed=0)
    task = benchmark_task()
    tf = naive_seasonal(task, panel)
    actual_val = panel.values[84:96, 0]
    actual_hold = panel.values[96:108, 0]
    assert np.allclose(tf.validation_forecast, actual_val, atol=1e-9)
    assert np.allclose(tf.holdout_forecast, actual_hold, atol=1e-9)
    assert tf.round_errors.size >= 2
    assert float(tf.round_errors[-1]) < 1e-9


def test_naive_seasonal_requires_enough_history():
    panel = gen_seasonal_load(n_periods=30, seed=0)
    task = ForecastTask(target_column=0, horizon=2, train_range=(0, 10),
                        validation_range=(10, 12))
    with pytest.raises(FitError):
        naive_seasonal(task, panel, period=12)


def test_ridge_ar_learns_noiseless_ar_process():
    # y_t = 10 + 0.7 y_{t-1}; from y_0 = 50 the series stays well away from 0.
    n = 108
    y = np.empty(n)
    y[0] = 50.0
    for t in range(1, n):
        y[t] = 10.0 + 0.7 * y[t - 1]
    values = y[:, None]
    panel = gen_seasonal_load(n_periods=n, n_features=1, seed=0).copy()
    panel.values[:, 0] = values[:, 0]
    panel.values[:, 1] = 1.0 + np.arange(n)  # benign covariate
    task = ForecastTask(target_column=0, horizon=12, train_range=(0, 84),
                        validation_range=(84, 96))
    tf = fit_ridge_ar(task, panel, lags=(1, 2), ridge=1e-8, use_features=False)
    actual = panel.values[84:96, 0]
    assert validation_mape(actual, tf.validation_forecast) < 0.1


def test_ridge_ar_singular_design_raises_fit_error():
    n = 60
    panel = gen_seasonal_load(n_periods=n, n_features=1, seed=0).copy()
    panel.values[:, 0] = 4.0
    panel.values[:, 1] = 1.0 + np.arange(n)
    task = ForecastTask(target_column=0, horizon=4, train_range=(0, 48),
                        validation_range=(48, 52))
    # A constant target centers every lag column to exactly zero, so the
    # unridged normal equations are exactly singular.
    with pytest.raises(FitError, match="ridge"):
        fit_ridge_ar(task, panel, lags=(1, 2), ridge=0.0, use_features=False)


def test_ridge_ar_feature_mode_needs_holdout_coverage():
    panel = gen_seasonal_load(n_periods=100, n_features=2, seed=1)
    task = ForecastTask(target_column=0, horizon=12, train_range=(0, 84),
                        validation_range=(84, 96), feature_columns=(1, 2))
    with pytest.raises(FitError):
        fit_ridge_ar(task, panel, use_features=True)


def test_ridge_ar_beats_naive_on_benchmark():
    panel = benchmark_panel()
    task = benchmark_task()
    ar = fit_ridge_ar(task, panel)
    nv = naive_seasonal(task, panel)
    actual = panel.values[84:96, 0]
    assert validation_mape(actual, ar.validation_forecast) < \
        validation_mape(actual, nv.validation_forecast)


# --------------------------------------------------------------------- tcn

def test_receptive_field_formula():
    assert receptive_field(((3, 1),)) == 3
    assert receptive_field(((3, 1), (3, 2))) == 7
    assert receptive_field(((3, 1), (3, 2), (3, 4))) == 15
    assert receptive_field(((2, 1), (2, 2), (2, 4), (2, 8))) == 16


def test_dilated_conv_matches_direct_sum():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    k = np.array([0.5, -1.0, 2.0])
    y = dilated_causal_conv(x, k, dilation=2)
    # y[s] = 0.5 x[s] - 1.0 x[s-2] + 2.0 x[s-4], zeros before the start.
    expected = np.array([
        0.5 * 1.0,
        0.5 * 2.0,
        0.5 * 3.0 - 1.0 * 1.0,
        0.5 * 4.0 - 1.0 * 2.0,
        0.5 * 5.0 - 1.0 * 3.0 + 2.0 * 1.0,
    ])
    assert np.allclose(y, expected)


@pytest.mark.parametrize("layer_shapes", [
    ((2, 1),),
    ((3, 1), (3, 2)),
    ((3, 1), (3, 2), (3, 4)),
    ((2, 1), (2, 2), (2, 4)),
])
def test_dilated_conv_stack_is_causal(layer_shapes):
    rng = rng_for(5, "tcn-causal")
    n = 40
    x = rng.normal(size=n)
    kernels = [rng.normal(size=k) for k, _ in layer_shapes]

    def stack(series):
        h = series
        for kernel, (_, dil) in zip(kernels, layer_shapes):
            h = np.tanh(dilated_causal_conv(h, kernel, dil))
        return h

    base = stack(x)
    for pos in (0, 7, 23, n - 1):
        bumped = x.copy()
        bumped[pos] += 1.0
        out = stack(bumped)
        assert np.array_equal(out[:pos], base[:pos])
        assert out[pos] != base[pos] or kernels[0][0] == 0.0


def test_tcn_gradients_match_finite_differences():
    rng = rng_for(6, "tcn-fd")
    layer_shapes = ((3, 1), (3, 2))
    dilations = [d for _, d in layer_shapes]
    params = _init_params(layer_shapes, seed=3)
    x = rng.normal(size=30)
    _, grads = _loss_and_grads(params, x, dilations)
    eps = 1e-6

    def loss_of(p):
        return _loss_and_grads(p, x, dilations)[0]

    for li, kernel in enumerate(params["kernels"]):
        for i in range(kernel.size):
            up = {"kernels": [k.copy() for k in params["kernels"]],
                  "biases": list(params["biases"]),
                  "head_w": params["head_w"], "head_b": params["head_b"]}
            up["kernels"][li][i] += eps
            down = {"kernels": [k.copy() for k in params["kernels"]],
                    "biases": list(params["biases"]),
                    "head_w": params["head_w"], "head_b": params["head_b"]}
            down["kernels"][li][i] -= eps
            fd = (loss_of(up) - loss_of(down)) / (2 * eps)
            an = grads["kernels"][li][i]
            assert abs(fd - an) <= 1e-4 * max(1.0, abs(fd))


def test_fit_tcn_runs_and_respects_shapes():
    panel = benchmark_panel()
    task = benchmark_task()
    tf = fit_tcn(task, panel, epochs=30, seed=0)
    assert tf.validation_forecast.shape == (12,)
    assert tf.holdout_forecast.shape == (12,)
    assert tf.round_errors.size >= 2
    assert np.all(np.isfinite(tf.holdout_forecast))


def test_fit_tcn_rejects_oversized_receptive_field():
    panel = gen_seasonal_load(n_periods=30, seed=0)
    task = ForecastTask(target_column=0, horizon=2, train_range=(0, 12),
                        validation_range=(12, 14))
    with pytest.raises(FitError):
        fit_tcn(task, panel, layer_shapes=((3, 1), (3, 2), (3, 4)), epochs=5)


def test_fit_tcn_is_deterministic():
    panel = benchmark_panel()
    task = benchmark_task()
    a = fit_tcn(task, panel, epochs=10, seed=4)
    b = fit_tcn(task, panel, epochs=10, seed=4)
    assert np.array_equal(a.holdout_forecast, b.holdout_forecast)
    assert np.array_equal(a.round_errors, b.round_errors)


# --------------------------------------------------------------------- gbt

def test_gbt_stump_oracle_exact():
    x = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([1.0, 1.0, 10.0, 10.0])
    model = fit_gbt_arrays(x, y, n_rounds=1, max_depth=1, min_leaf=2,
                           reg_alpha=0.0, reg_gamma=0.0, learn_rate=1.0)
    assert np.allclose(model.predict(x), y, atol=1e-12)


def test_gbt_training_loss_is_monotone():
    rng = rng_for(7, "gbt-mono")
    x = rng.normal(size=(80, 4))
    y = x[:, 0] * 2.0 + np.sin(x[:, 1]) + 0.1 * rng.normal(size=80)
    model = fit_gbt_arrays(x, y, n_rounds=40, max_depth=3, learn_rate=0.3)
    losses = model.train_losses
    assert len(losses) >= 1
    assert all(b <= a + 1e-10 for a, b in zip(losses, losses[1:]))


def test_gbt_no_candidate_split_raises():
    x = np.zeros((10, 2))
    y = np.arange(10, dtype=float)
    with pytest.raises(FitError):
        fit_gbt_arrays(x, y, n_rounds=3)


def test_gbt_constant_target_predicts_base_score():
    x = np.arange(12, dtype=float)[:, None]
    y = np.full(12, 7.0)
    model = fit_gbt_arrays(x, y, n_rounds=5)
    assert np.allclose(model.predict(x), 7.0, atol=1e-12)


def test_gbt_is_deterministic():
    rng = rng_for(8, "gbt-det")
    x = rng.normal(size=(60, 3))
    y = x @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=60)
    a = fit_gbt_arrays(x, y, n_rounds=20)
    b = fit_gbt_arrays(x, y, n_rounds=20)
    assert np.array_equal(a.predict(x), b.predict(x))


def test_fit_gbt_on_benchmark_panel():
    panel = benchmark_panel()
    task = benchmark_task()
    tf = fit_gbt(task, panel)
    assert tf.round_errors.size >= 2
    assert tf.validation_forecast.shape == (12,)
    assert tf.holdout_forecast.shape == (12,)
    actual = panel.values[84:96, 0]
    assert validation_mape(actual, tf.validation_forecast) < 20.0


# -------------------------------------------------------------------- trmf

def test_trmf_recovers_rank_one_matrix():
    rng = rng_for(9, "trmf-r1")
    u = rng.uniform(1.0, 2.0, size=6)
    v = rng.uniform(1.0, 2.0, size=40)
    x = np.outer(u, v)
    model = fit_trmf(x, k=1, lags=(1,), lambda_reg=1e-9, kappa_reg=0.0,
                     sweeps=60, seed=0)
    rel = np.linalg.norm(model.loadings @ model.factors - x) / np.linalg.norm(x)
    assert rel < 1e-6


def test_trmf_recovers_rank_two_matrix():
    rng = rng_for(10, "trmf-r2")
    u = rng.normal(size=(6, 2))
    v = rng.normal(size=(2, 40))
    x = u @ v
    model = fit_trmf(x, k=2, lags=(1,), lambda_reg=1e-9, kappa_reg=0.0,
                     sweeps=80, seed=0)
    rel = np.linalg.norm(model.loadings @ model.factors - x) / np.linalg.norm(x)
    assert rel < 1e-6


def test_trmf_objective_is_monotone_nonincreasing():
    rng = rng_for(11, "trmf-mono")
    x = rng.normal(size=(8, 50)) + 5.0
    model = fit_trmf(x, k=3, lags=(1, 12), lambda_reg=0.1, kappa_reg=0.1,
                     sweeps=30, seed=2)
    obj = model.objective_trace
    assert len(obj) == 30
    assert all(b <= a + 1e-8 for a, b in zip(obj, obj[1:]))


def test_trmf_on_sweep_callback_sees_every_sweep():
    rng = rng_for(12, "trmf-cb")
    x = rng.normal(size=(5, 30)) + 3.0
    seen = []
    fit_trmf(x, k=2, lags=(1,), sweeps=7, seed=0,
             on_sweep=lambda loadings, factors, ar: seen.append(factors.shape))
    assert len(seen) == 7
    assert seen[0] == (2, 30)


def test_extrapolate_factors_follows_ar_recursion():
    factors = np.array([[1.0, 2.0, 4.0]])
    ar_weights = np.array([[2.0]])
    future = extrapolate_factors(factors, ar_weights, (1,), 3)
    assert np.allclose(future, [[8.0, 16.0, 32.0]])


def test_forecast_trmf_row_selection():
    rng = rng_for(13, "trmf-row")
    x = rng.normal(size=(4, 40)) + 10.0
    model = fit_trmf(x, k=2, lags=(1,), sweeps=20, seed=1)
    block = forecast_trmf(model, 5)
    assert block.shape == (4, 5)
    row2 = forecast_trmf(model, 5, row=2)
    assert np.array_equal(row2, block[2])


def test_trmf_rejects_bad_hyperparameters():
    x = np.ones((3, 10)) + np.arange(10)
    with pytest.raises(ValueError):
        fit_trmf(x, k=0)
    with pytest.raises(ValueError):
        fit_trmf(x, k=1, lags=(10,))
    with pytest.raises(ValueError):
        fit_trmf(x, k=1, lambda_reg=0.0)


def test_fit_trmf_forecaster_on_benchmark():
    panel = benchmark_panel()
    task = benchmark_task()
    tf = fit_trmf_forecaster(task, panel, seed=0)
    assert tf.validation_forecast.shape == (12,)
    assert tf.holdout_forecast.shape == (12,)
    assert tf.round_errors.size >= 2
    actual = panel.values[84:96, 0]
    assert validation_mape(actual, tf.validation_forecast) < 25.0
