"""Model containers, forward/backward passes, and checkpoint round-trips.

Three models share the LSTM/dense kernel:

* ForecastModel: LSTM stack over a window of past rows, dense head that
  predicts the next row (feature columns plus a label logit).
* DeepICPModel: one stack over the preceding-row window, one over the
  current row, final hidden states concatenated into a dense chain ending
  in a single logit. The window stack can be ablated.
* LogisticModel: plain logistic regression.

Models are treated as immutable snapshots: training code deep-copies a model,
mutates the copy's arrays in place through the flat `params_of` view, and
returns the copy.
"""

from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass

import numpy as np

from .core import (
    dense_backward,
    dense_forward,
    init_dense_layer,
    init_lstm_layer,
    relu,
    sigmoid,
    stack_backward,
    stack_forward,
)

CHECKPOINT_FORMAT = "jitsdp-model"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LstmStack:
    layers: list[dict[str, np.ndarray]]
    hidden_size: int
    num_layers: int
    dropout_rate: float

    def __post_init__(self) -> None:
        if self.num_layers != len(self.layers):
            raise ValueError("num_layers disagrees with the layer list")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        for layer in self.layers:
            if layer["wh"].shape != (self.hidden_size, 4 * self.hidden_size):
                raise ValueError("gate weight shapes disagree with hidden_size")
            for arr in layer.values():
                if not np.all(np.isfinite(arr)):
                    raise ValueError("non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layers[0]["wx"].shape[0]


def init_stack(
    input_dim: int, hidden: int, num_layers: int, dropout: float, rng: np.random.Generator
) -> LstmStack:
    layers = []
    dim = input_dim
    for _ in range(num_layers):
        layers.append(init_lstm_layer(dim, hidden, rng))
        dim = hidden
    return LstmStack(layers=layers, hidden_size=hidden, num_layers=num_layers, dropout_rate=dropout)


@dataclass(frozen=True)
class ForecastModel:
    stack: LstmStack
    head: dict[str, np.ndarray]  # dense hidden -> n_features + 1
    lookback: int

    def __post_init__(self) -> None:
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if self.head["w"].shape[0] != self.stack.hidden_size:
            raise ValueError("head input dim disagrees with stack hidden size")

    @property
    def n_features(self) -> int:
        return self.head["w"].shape[1] - 1


@dataclass(frozen=True)
class DeepICPModel:
    part_a: LstmStack | None  # window stack; None disables the forecast path
    part_b: LstmStack  # current-row stack
    part_c: list[dict[str, np.ndarray]]  # dense chain ending in one logit
    lookback: int

    def __post_init__(self) -> None:
        fused = self.part_b.hidden_size
        if self.part_a is not None:
            fused += self.part_a.hidden_size
        if self.part_c[0]["w"].shape[0] != fused:
            raise ValueError("dense-chain input dim disagrees with fused hidden size")
        if self.part_c[-1]["w"].shape[1] != 1:
            raise ValueError("dense chain must end in a single output")

    @property
    def n_features(self) -> int:
        return self.part_b.input_dim


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # (n_features,)
    bias: np.ndarray  # scalar, kept 0-d so optimizer updates apply in place

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite parameters")


def init_forecast_model(
    n_features: int, lookback: int, hidden: int, num_layers: int, dropout: float,
    rng: np.random.Generator,
) -> ForecastModel:
    stack = init_stack(n_features + 1, hidden, num_layers, dropout, rng)
    head = init_dense_layer(hidden, n_features + 1, rng)
    return ForecastModel(stack=stack, head=head, lookback=lookback)


def init_deepicp_model(
    n_features: int, lookback: int, hidden: int, num_layers: int, dropout: float,
    rng: np.random.Generator,
    use_forecast: bool = True,
    dense_sizes: tuple[int, ...] = (32, 16),
) -> DeepICPModel:
    part_a = init_stack(n_features + 1, hidden, num_layers, dropout, rng) if use_forecast else None
    part_b = init_stack(n_features, hidden, num_layers, dropout, rng)
    fused = hidden * (2 if use_forecast else 1)
    part_c = []
    dim = fused
    for size in dense_sizes:
        part_c.append(init_dense_layer(dim, size, rng))
        dim = size
    part_c.append(init_dense_layer(dim, 1, rng))
    return DeepICPModel(part_a=part_a, part_b=part_b, part_c=part_c, lookback=lookback)


def init_logistic_model(n_features: int) -> LogisticModel:
    return LogisticModel(weights=np.zeros(n_features), bias=np.zeros(()))


# ------------------------------------------------------------- flat views


def params_of(model) -> dict[str, np.ndarray]:
    """Flat name -> array view of a model's parameters.

    The arrays are the model's own: in-place updates through this mapping
    update the model. Key order is deterministic."""
    out: dict[str, np.ndarray] = {}
    if isinstance(model, LogisticModel):
        out["w"] = model.weights
        out["b"] = model.bias
        return out
    if isinstance(model, ForecastModel):
        _add_stack(out, "l", model.stack)
        out["head.w"] = model.head["w"]
        out["head.b"] = model.head["b"]
        return out
    if isinstance(model, DeepICPModel):
        if model.part_a is not None:
            _add_stack(out, "a", model.part_a)
        _add_stack(out, "b", model.part_b)
        for i, layer in enumerate(model.part_c):
            out[f"c{i}.w"] = layer["w"]
            out[f"c{i}.b"] = layer["b"]
        return out
    raise TypeError(f"unknown model type {type(model).__name__}")


def _add_stack(out: dict[str, np.ndarray], prefix: str, stack: LstmStack) -> None:
    for i, layer in enumerate(stack.layers):
        for key in ("wx", "wh", "b"):
            out[f"{prefix}{i}.{key}"] = layer[key]


def clone_model(model):
    return copy.deepcopy(model)


# ------------------------------------------------------------- forwards


def forecast_forward(
    model: ForecastModel,
    windows: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """windows: (batch, lookback, n_features+1) -> (batch, n_features+1).

    Output columns: feature forecasts (linear), then one label logit."""
    h_seq, caches = stack_forward(
        model.stack.layers, windows, model.stack.dropout_rate, train_mode, rng
    )
    h_last = h_seq[:, -1]
    pred = dense_forward(h_last, model.head["w"], model.head["b"])
    return pred, {"stack": caches, "h_last": h_last, "h_shape": h_seq.shape}


def forecast_backward(model: ForecastModel, cache: dict, dpred: np.ndarray) -> dict[str, np.ndarray]:
    dh_last, dw, db = dense_backward(dpred, cache["h_last"], model.head["w"])
    dh_seq = np.zeros(cache["h_shape"])
    dh_seq[:, -1] = dh_last
    _, stack_grads = stack_backward(dh_seq, cache["stack"])
    grads = {}
    for i, layer_grads in enumerate(stack_grads):
        for key, value in layer_grads.items():
            grads[f"l{i}.{key}"] = value
    grads["head.w"] = dw
    grads["head.b"] = db
    return grads


def deepicp_forward(
    model: DeepICPModel,
    x: np.ndarray,
    windows: np.ndarray | None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """x: (batch, n_features); windows: (batch, lookback, n_features+1) or
    None when the window stack is ablated. Returns (logits (batch,), cache)."""
    cache: dict = {}
    parts = []
    if model.part_a is not None:
        if windows is None:
            raise ValueError("model has a window stack but no windows were given")
        a_seq, a_caches = stack_forward(
            model.part_a.layers, windows, model.part_a.dropout_rate, train_mode, rng
        )
        cache["a"] = a_caches
        cache["a_shape"] = a_seq.shape
        parts.append(a_seq[:, -1])
    b_seq, b_caches = stack_forward(
        model.part_b.layers, x[:, None, :], model.part_b.dropout_rate, train_mode, rng
    )
    cache["b"] = b_caches
    cache["b_shape"] = b_seq.shape
    parts.append(b_seq[:, -1])
    fused = np.concatenate(parts, axis=1)

    activations = [fused]
    for layer in model.part_c[:-1]:
        activations.append(relu(dense_forward(activations[-1], layer["w"], layer["b"])))
    logits = dense_forward(activations[-1], model.part_c[-1]["w"], model.part_c[-1]["b"])
    cache["dense_inputs"] = activations
    return logits[:, 0], cache


def deepicp_backward(model: DeepICPModel, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    dout = dlogits[:, None]
    inputs = cache["dense_inputs"]
    for i in range(len(model.part_c) - 1, -1, -1):
        x_in = inputs[i]
        dout, dw, db = dense_backward(dout, x_in, model.part_c[i]["w"])
        grads[f"c{i}.w"] = dw
        grads[f"c{i}.b"] = db
        if i > 0:  # undo the relu applied to this layer's input
            dout = dout * (x_in > 0.0)

    a_hidden = model.part_a.hidden_size if model.part_a is not None else 0
    if model.part_a is not None:
        da_seq = np.zeros(cache["a_shape"])
        da_seq[:, -1] = dout[:, :a_hidden]
        _, a_grads = stack_backward(da_seq, cache["a"])
        for i, layer_grads in enumerate(a_grads):
            for key, value in layer_grads.items():
                grads[f"a{i}.{key}"] = value
    db_seq = np.zeros(cache["b_shape"])
    db_seq[:, -1] = dout[:, a_hidden:]
    _, b_grads = stack_backward(db_seq, cache["b"])
    for i, layer_grads in enumerate(b_grads):
        for key, value in layer_grads.items():
            grads[f"b{i}.{key}"] = value
    return grads


def logistic_forward(model: LogisticModel, x: np.ndarray) -> np.ndarray:
    return x @ model.weights + model.bias


def logistic_backward(model: LogisticModel, x: np.ndarray, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    return {"w": x.T @ dlogits, "b": np.asarray(dlogits.sum())}


def predict(model, x: np.ndarray | None = None, windows: np.ndarray | None = None) -> np.ndarray:
    """Defect probability in eval mode (no dropout), batched or single row.

    ForecastModel scores from `windows` alone (label column of the forecast);
    DeepICPModel needs `x` and, unless ablated, `windows`; LogisticModel
    needs `x`. Single inputs (one row / one window) return a 0-d array."""
    if isinstance(model, LogisticModel):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        logits = logistic_forward(model, np.atleast_2d(x))
        probs = sigmoid(logits)
        return probs[0] if single else probs
    if isinstance(model, ForecastModel):
        if windows is None:
            raise ValueError("ForecastModel predicts from windows")
        windows = np.asarray(windows, dtype=np.float64)
        single = windows.ndim == 2
        if single:
            windows = windows[None]
        pred, _ = forecast_forward(model, windows, train_mode=False)
        probs = sigmoid(pred[:, -1])
        return probs[0] if single else probs
    if isinstance(model, DeepICPModel):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None]
            if windows is not None:
                windows = np.asarray(windows, dtype=np.float64)[None]
        elif windows is not None:
            windows = np.asarray(windows, dtype=np.float64)
        logits, _ = deepicp_forward(model, x, windows, train_mode=False)
        probs = sigmoid(logits)
        return probs[0] if single else probs
    raise TypeError(f"unknown model type {type(model).__name__}")


# ------------------------------------------------------------- checkpoints


def _encode(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])


def _meta_of(model) -> dict:
    if isinstance(model, LogisticModel):
        return {"kind": "logistic", "n_features": int(model.weights.shape[0])}
    if isinstance(model, ForecastModel):
        return {
            "kind": "forecast",
            "n_features": model.n_features,
            "lookback": model.lookback,
            "hidden_size": model.stack.hidden_size,
            "num_layers": model.stack.num_layers,
            "dropout_rate": model.stack.dropout_rate,
        }
    if isinstance(model, DeepICPModel):
        return {
            "kind": "deepicp",
            "n_features": model.n_features,
            "lookback": model.lookback,
            "hidden_size": model.part_b.hidden_size,
            "num_layers": model.part_b.num_layers,
            "dropout_rate": model.part_b.dropout_rate,
            "use_forecast": model.part_a is not None,
            "dense_sizes": [layer["w"].shape[1] for layer in model.part_c[:-1]],
        }
    raise TypeError(f"unknown model type {type(model).__name__}")


def save_model(model, path: str) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": _meta_of(model),
        "params": {name: _encode(arr) for name, arr in params_of(model).items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path: str):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError("unrecognised checkpoint format")
    meta = payload["meta"]
    rng = np.random.default_rng(0)  # shapes come from the checkpoint; values overwritten
    if meta["kind"] == "logistic":
        model = init_logistic_model(meta["n_features"])
    elif meta["kind"] == "forecast":
        model = init_forecast_model(
            meta["n_features"], meta["lookback"], meta["hidden_size"],
            meta["num_layers"], meta["dropout_rate"], rng,
        )
    elif meta["kind"] == "deepicp":
        model = init_deepicp_model(
            meta["n_features"], meta["lookback"], meta["hidden_size"],
            meta["num_layers"], meta["dropout_rate"], rng,
            use_forecast=meta["use_forecast"],
            dense_sizes=tuple(meta["dense_sizes"]),
        )
    else:
        raise ValueError(f"unrecognised model kind {meta['kind']!r}")
    target = params_of(model)
    stored = payload["params"]
    if set(target) != set(stored):
        raise ValueError("checkpoint parameters do not match the declared architecture")
    for name, arr in target.items():
        arr[...] = _decode(stored[name])
    return model
