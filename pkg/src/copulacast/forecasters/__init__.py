"""Forecaster bank: five heterogeneous models behind one fit signature.

Each entry point takes (task, matrix, **hyper) and returns a
TrainedForecaster; FORECASTERS maps roster names to those entry points.
"""

from .base import ForecastTask, TrainedForecaster
from .baselines import fit_ridge_ar, naive_seasonal
from .gbt import fit_gbt, fit_gbt_arrays, GBTModel
from .tcn import dilated_causal_conv, fit_tcn, receptive_field
from .trmf import (TRMFModel, extrapolate_factors, fit_trmf,
                   fit_trmf_forecaster, forecast_trmf)

FORECASTERS = {
    "naive_seasonal": naive_seasonal,
    "ridge_ar": fit_ridge_ar,
    "trmf": fit_trmf_forecaster,
    "gbt": fit_gbt,
    "tcn": fit_tcn,
}

__all__ = [
    "FORECASTERS", "ForecastTask", "TrainedForecaster", "GBTModel",
    "TRMFModel", "dilated_causal_conv", "extrapolate_factors", "fit_gbt",
    "fit_gbt_arrays", "fit_ridge_ar", "fit_tcn", "fit_trmf",
    "fit_trmf_forecaster", "forecast_trmf", "naive_seasonal",
    "receptive_field",
]
