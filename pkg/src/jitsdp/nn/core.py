"""Numpy building blocks: activations, losses, LSTM/dense layers, Adam.

Everything here is a pure function over explicit parameter arrays, with a
forward returning whatever cache its matching backward needs. Parameters live
in per-layer dicts; the optimizer and the gradient clipper both work on flat
{name: array} mappings so they never care about model structure.

LSTM gate layout: the fused projection has width 4H ordered as
input gate | forget gate | cell candidate | output gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericFailureError

GATES = 4


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------- losses


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.

    Returns (loss, dloss/dlogits). Computed from the logits directly so the
    loss stays finite for any argument."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(softplus(z) - y * z))
    grad = (sigmoid(z) - y) / z.size
    return loss, grad


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements. Returns (loss, dloss/dpred)."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


# ---------------------------------------------------------------- dense


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def dense_backward(
    dout: np.ndarray, x: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) for y = x @ w + b."""
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


# ---------------------------------------------------------------- LSTM


def init_lstm_layer(input_dim: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget-gate bias starts at 1 so
    early training does not erase the cell state."""
    scale = 1.0 / np.sqrt(hidden)
    layer = {
        "wx": rng.uniform(-scale, scale, size=(input_dim, GATES * hidden)),
        "wh": rng.uniform(-scale, scale, size=(hidden, GATES * hidden)),
        "b": np.zeros(GATES * hidden),
    }
    layer["b"][hidden : 2 * hidden] = 1.0
    return layer


def init_dense_layer(input_dim: int, output_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    limit = np.sqrt(6.0 / (input_dim + output_dim))
    return {
        "w": rng.uniform(-limit, limit, size=(input_dim, output_dim)),
        "b": np.zeros(output_dim),
    }


def lstm_layer_forward(
    x: np.ndarray, layer: dict[str, np.ndarray]
) -> tuple[np.ndarray, dict]:
    """Run one LSTM layer over a batch of sequences.

    x: (batch, time, input_dim). Initial hidden and cell states are zero.
    Returns (h_seq of shape (batch, time, hidden), cache for backward).
    """
    wx, wh, b = layer["wx"], layer["wh"], layer["b"]
    batch, steps, _ = x.shape
    hidden = wh.shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    h_seq = np.empty((batch, steps, hidden))
    gates = np.empty((batch, steps, GATES * hidden))
    cells = np.empty((batch, steps, hidden))
    cell_prev = np.empty((batch, steps, hidden))
    h_prev = np.empty((batch, steps, hidden))
    for t in range(steps):
        h_prev[:, t] = h
        cell_prev[:, t] = c
        z = x[:, t] @ wx + h @ wh + b
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = sigmoid(z[:, 3 * hidden :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        cells[:, t] = c
        h_seq[:, t] = h
    cache = {
        "x": x,
        "gates": gates,
        "cells": cells,
        "cell_prev": cell_prev,
        "h_prev": h_prev,
        "layer": layer,
    }
    return h_seq, cache


def lstm_layer_backward(
    dh_seq: np.ndarray, cache: dict
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backprop through time for one layer.

    dh_seq: gradient on every timestep's hidden output, (batch, time, hidden).
    Returns (dx of the input sequence, {dwx, dwh, db}).
    """
    x, gates, cells = cache["x"], cache["gates"], cache["cells"]
    cell_prev, h_prev = cache["cell_prev"], cache["h_prev"]
    wx, wh = cache["layer"]["wx"], cache["layer"]["wh"]
    batch, steps, hidden = dh_seq.shape

    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(GATES * hidden)
    dx = np.empty_like(x)
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        i = gates[:, t, :hidden]
        f = gates[:, t, hidden : 2 * hidden]
        g = gates[:, t, 2 * hidden : 3 * hidden]
        o = gates[:, t, 3 * hidden :]
        tanh_c = np.tanh(cells[:, t])

        dh = dh_seq[:, t] + dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c**2)
        di = dc * g
        dg = dc * i
        df = dc * cell_prev[:, t]
        dc_next = dc * f

        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dwx += x[:, t].T @ dz
        dwh += h_prev[:, t].T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ wx.T
        dh_next = dz @ wh.T
    return dx, {"wx": dwx, "wh": dwh, "b": db}


# ---------------------------------------------------------------- dropout


def dropout_mask(shape: tuple, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability `rate`, survivors scaled
    by 1/(1-rate) so the expected activation matches eval mode."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


def stack_forward(
    layers: list[dict[str, np.ndarray]],
    x: np.ndarray,
    dropout_rate: float,
    train_mode: bool,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list]:
    """Run a stack of LSTM layers with inter-layer inverted dropout.

    Dropout applies to the outputs of every layer except the last, and only
    in train_mode. Raises on non-finite inputs or activations."""
    if not np.all(np.isfinite(x)):
        raise NumericFailureError("non-finite values in sequence input")
    caches = []
    out = x
    for idx, layer in enumerate(layers):
        out, cache = lstm_layer_forward(out, layer)
        mask = None
        if train_mode and dropout_rate > 0.0 and idx < len(layers) - 1:
            if rng is None:
                raise ValueError("train_mode dropout needs an rng")
            mask = dropout_mask(out.shape, dropout_rate, rng)
            out = out * mask
        caches.append((cache, mask))
    if not np.all(np.isfinite(out[:, -1])):
        raise NumericFailureError("non-finite LSTM activations")
    return out, caches


def stack_backward(
    dh_seq: np.ndarray, caches: list
) -> tuple[np.ndarray, list[dict[str, np.ndarray]]]:
    """Backprop through the whole stack; returns (dx, per-layer grads)."""
    grads: list[dict[str, np.ndarray]] = [None] * len(caches)  # type: ignore[list-item]
    dout = dh_seq
    for idx in range(len(caches) - 1, -1, -1):
        cache, mask = caches[idx]
        if mask is not None:
            dout = dout * mask
        dout, layer_grads = lstm_layer_backward(dout, cache)
        grads[idx] = layer_grads
    return dout, grads


# ---------------------------------------------------------------- optimizer


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_by_global_norm(
    grads: dict[str, np.ndarray], max_norm: float = 5.0
) -> dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


@dataclass
class Adam:
    """Adam state over a flat parameter mapping; clips gradients to a global
    norm of `max_grad_norm` before every moment update."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float = 5.0
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update `params` in place from `grads` (same keys)."""
        grads = clip_by_global_norm(grads, self.max_grad_norm)
        self.step_count += 1
        t = self.step_count
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            params[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
