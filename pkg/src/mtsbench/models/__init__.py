from .baselines import predict_historical_average, predict_naive_last, predict_seasonal_naive
from .checkpoint import load_model, save_model
from .linear import (Forecaster, ForecasterSpec, LinearModel, LinearWeights, build_forecaster,
                     dlinear_decompose, fit_linear_closed_form, nlinear_shift, nlinear_unshift)
from .training import EpochRecord, TrainerConfig, early_stop, masked_mae_on, sgd_fit

__all__ = [
    "Forecaster", "ForecasterSpec", "LinearModel", "LinearWeights", "TrainerConfig", "EpochRecord",
    "build_forecaster", "dlinear_decompose", "nlinear_shift", "nlinear_unshift",
    "fit_linear_closed_form", "sgd_fit", "early_stop", "masked_mae_on",
    "predict_naive_last", "predict_seasonal_naive", "predict_historical_average",
    "save_model", "load_model",
]
