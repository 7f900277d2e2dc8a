"""Training loops: forecaster, fused defect model, logistic baseline.

All randomness (weight init, dropout masks, batch shuffling) flows from
config.seed through named substreams, so a run is a pure function of its
inputs and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, NumericFailureError
from ..rng import named_rng
from .core import Adam, bce_with_logits, mse, sigmoid
from .models import (
    DeepICPModel,
    ForecastModel,
    LogisticModel,
    clone_model,
    deepicp_backward,
    deepicp_forward,
    forecast_backward,
    forecast_forward,
    init_deepicp_model,
    init_forecast_model,
    init_logistic_model,
    logistic_backward,
    logistic_forward,
    params_of,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    early_stop_patience: int = 10
    dropout_rate: float = 0.2
    hidden_size: int = 32
    num_layers: int = 3

    def __post_init__(self) -> None:
        if min(self.epochs, self.batch_size, self.early_stop_patience) < 1:
            raise ValueError("epochs, batch_size and early_stop_patience must be >= 1")
        if min(self.hidden_size, self.num_layers) < 1:
            raise ValueError("hidden_size and num_layers must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass(frozen=True)
class WindowedBatch:
    """Rows paired with the window of rows that preceded each of them.

    x: (n, m) current-row features; windows: (n, lookback, m+1) preceding
    feature+label rows; y: (n,) 0/1 labels."""

    x: np.ndarray
    windows: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.x) == len(self.windows) == len(self.y)):
            raise ValueError("x, windows and y disagree on length")
        if self.windows.ndim != 3 or self.windows.shape[2] != self.x.shape[1] + 1:
            raise ValueError("windows must be (n, lookback, n_features + 1)")

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx: np.ndarray) -> "WindowedBatch":
        return WindowedBatch(self.x[idx], self.windows[idx], self.y[idx])


def sliding_windows(z: np.ndarray, lookback: int) -> tuple[np.ndarray, np.ndarray]:
    """Cut an arrival-ordered sequence of rows into (window, next row) pairs.

    z: (t, d). Returns windows (t - lookback, lookback, d) and targets
    (t - lookback, d); the target row is never part of its own window."""
    z = np.asarray(z, dtype=np.float64)
    if len(z) < lookback + 1:
        raise InsufficientDataError(
            f"need at least {lookback + 1} rows for lookback {lookback}, got {len(z)}"
        )
    n = len(z) - lookback
    windows = np.stack([z[i : i + lookback] for i in range(n)])
    return windows, z[lookback:]


def backprop_and_step(model, batch: tuple, optimizer: Adam, rng=None) -> float:
    """One gradient step on one batch; mutates `model` in place.

    Batch layout by model type: ForecastModel (windows, target rows) with
    squared error on feature columns plus cross-entropy on the label column;
    DeepICPModel (x, windows, y) and LogisticModel (x, y) with plain
    cross-entropy. Returns the batch loss."""
    train_mode = rng is not None
    if isinstance(model, ForecastModel):
        windows, targets = batch
        pred, cache = forecast_forward(model, windows, train_mode, rng)
        m = model.n_features
        loss_f, dpred_f = mse(pred[:, :m], targets[:, :m])
        loss_l, dpred_l = bce_with_logits(pred[:, m], targets[:, m])
        loss = loss_f + loss_l
        dpred = np.concatenate([dpred_f, dpred_l[:, None]], axis=1)
        grads = forecast_backward(model, cache, dpred)
    elif isinstance(model, DeepICPModel):
        x, windows, y = batch
        logits, cache = deepicp_forward(model, x, windows, train_mode, rng)
        loss, dlogits = bce_with_logits(logits, y)
        grads = deepicp_backward(model, cache, dlogits)
    elif isinstance(model, LogisticModel):
        x, y = batch
        logits = logistic_forward(model, x)
        loss, dlogits = bce_with_logits(logits, y)
        grads = logistic_backward(model, x, dlogits)
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    if not np.isfinite(loss):
        raise NumericFailureError(
            f"loss diverged to {loss} at optimizer step {optimizer.step_count + 1}"
        )
    optimizer.step(params_of(model), grads)
    return loss


def _shuffled_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_forecaster(
    windows: np.ndarray, targets: np.ndarray, config: TrainConfig | None = None
) -> ForecastModel:
    """Fit the next-row forecaster on (window, next row) pairs."""
    config = config or TrainConfig()
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(windows) == 0:
        raise InsufficientDataError("no training windows")
    lookback, dim = windows.shape[1], windows.shape[2]
    model = init_forecast_model(
        dim - 1, lookback, config.hidden_size, config.num_layers,
        config.dropout_rate, named_rng(config.seed, "init"),
    )
    dropout_rng = named_rng(config.seed, "dropout") if config.dropout_rate > 0 else None
    shuffle_rng = named_rng(config.seed, "shuffle")
    optimizer = Adam(learning_rate=config.learning_rate)
    for _ in range(config.epochs):
        for idx in _shuffled_batches(len(windows), config.batch_size, shuffle_rng):
            backprop_and_step(model, (windows[idx], targets[idx]), optimizer, dropout_rng)
    return model


def _deepicp_val_loss(model: DeepICPModel, val: WindowedBatch) -> float:
    windows = val.windows if model.part_a is not None else None
    logits, _ = deepicp_forward(model, val.x, windows, train_mode=False)
    loss, _ = bce_with_logits(logits, val.y)
    return loss


def _fit_deepicp(
    model: DeepICPModel, train: WindowedBatch, val: WindowedBatch | None, config: TrainConfig
) -> DeepICPModel:
    """Shared loop: epochs over shuffled batches, early stopping on val loss
    with best-model restore when a validation set is provided."""
    dropout_rng = named_rng(config.seed, "dropout") if config.dropout_rate > 0 else None
    shuffle_rng = named_rng(config.seed, "shuffle")
    optimizer = Adam(learning_rate=config.learning_rate)
    use_windows = model.part_a is not None
    best = clone_model(model) if val is not None else None
    best_loss = np.inf
    stale = 0
    for _ in range(config.epochs):
        for idx in _shuffled_batches(len(train), config.batch_size, shuffle_rng):
            batch = (
                train.x[idx],
                train.windows[idx] if use_windows else None,
                train.y[idx],
            )
            backprop_and_step(model, batch, optimizer, dropout_rng)
        if val is None:
            continue
        val_loss = _deepicp_val_loss(model, val)
        if val_loss < best_loss:
            best_loss = val_loss
            best = clone_model(model)
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    return best if best is not None else model


def train_deepicp(
    train: WindowedBatch,
    val: WindowedBatch | None,
    config: TrainConfig | None = None,
    use_forecast: bool = True,
) -> DeepICPModel:
    """Train the fused model; returns the best-validation snapshot when a
    validation set is given, else the final state."""
    config = config or TrainConfig()
    if len(train) == 0:
        raise InsufficientDataError("empty training data")
    model = init_deepicp_model(
        train.x.shape[1], train.windows.shape[1], config.hidden_size,
        config.num_layers, config.dropout_rate, named_rng(config.seed, "init"),
        use_forecast=use_forecast,
    )
    return _fit_deepicp(model, train, val, config)


def incremental_update(
    model: DeepICPModel,
    train: WindowedBatch,
    val: WindowedBatch | None = None,
    config: TrainConfig | None = None,
) -> DeepICPModel:
    """Continue training a snapshot on a newly arrived segment only.

    Warm-starts from the current parameters with fresh optimizer moments;
    the given model is left untouched."""
    config = config or TrainConfig()
    if len(train) == 0:
        raise InsufficientDataError("empty update segment")
    return _fit_deepicp(clone_model(model), train, val, config)


def train_logistic(
    x: np.ndarray, y: np.ndarray, config: TrainConfig | None = None
) -> LogisticModel:
    """Fit logistic regression by minibatch gradient descent on cross-entropy."""
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        raise InsufficientDataError("empty training data")
    model = init_logistic_model(x.shape[1])
    shuffle_rng = named_rng(config.seed, "shuffle")
    optimizer = Adam(learning_rate=config.learning_rate)
    for _ in range(config.epochs):
        for idx in _shuffled_batches(len(x), config.batch_size, shuffle_rng):
            backprop_and_step(model, (x[idx], y[idx]), optimizer)
    return model
