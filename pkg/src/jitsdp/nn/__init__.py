"""From-scratch numpy neural kernel and the three defect models."""

from .core import Adam, bce_with_logits, mse, sigmoid
from .models import (
    DeepICPModel,
    ForecastModel,
    LogisticModel,
    LstmStack,
    clone_model,
    init_deepicp_model,
    init_forecast_model,
    init_logistic_model,
    init_stack,
    load_model,
    params_of,
    predict,
    save_model,
)
from .train import (
    TrainConfig,
    WindowedBatch,
    backprop_and_step,
    incremental_update,
    sliding_windows,
    train_deepicp,
    train_forecaster,
    train_logistic,
)

__all__ = [
    "Adam",
    "DeepICPModel",
    "ForecastModel",
    "LogisticModel",
    "LstmStack",
    "TrainConfig",
    "WindowedBatch",
    "backprop_and_step",
    "bce_with_logits",
    "clone_model",
    "incremental_update",
    "init_deepicp_model",
    "init_forecast_model",
    "init_logistic_model",
    "init_stack",
    "load_model",
    "mse",
    "params_of",
    "predict",
    "save_model",
    "sigmoid",
    "sliding_windows",
    "train_deepicp",
    "train_forecaster",
    "train_logistic",
]
