"""Small ReLU MLP with hand-written backprop and deterministic local SGD.

All arithmetic is float32. Parameters are stored layer by layer as
``layer{i}.weight`` (fan_in x fan_out, row-major) followed by ``layer{i}.bias``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import EmptyDataError, InvalidArchitectureError, InvalidConfigError, ShapeError
from .params import ParamVector, Segment
from .rng import make_rng


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    local_epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidConfigError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidConfigError("momentum must lie in [0, 1)")
        if self.batch_size <= 0 or self.local_epochs <= 0:
            raise InvalidConfigError("batch_size and local_epochs must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfigError("seed must be a 64-bit unsigned integer")


def param_count(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def param_segments(layer_sizes) -> tuple[Segment, ...]:
    segments, offset = [], 0
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        segments.append(Segment(f"layer{i}.weight", offset, fan_in * fan_out))
        offset += fan_in * fan_out
        segments.append(Segment(f"layer{i}.bias", offset, fan_out))
        offset += fan_out
    return tuple(segments)


@dataclass(frozen=True)
class MlpModel:
    layer_sizes: tuple[int, ...]
    params: ParamVector
    momentum_buffer: ParamVector = field(default=None)
    activation: str = "relu"
    loss: str = "softmax_cross_entropy"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) <= 0:
            raise InvalidArchitectureError(f"need at least two positive layer sizes, got {list(sizes)}")
        object.__setattr__(self, "layer_sizes", sizes)
        expected = param_count(sizes)
        if len(self.params) != expected:
            raise ShapeError(f"architecture {list(sizes)} needs {expected} params, got {len(self.params)}")
        if self.momentum_buffer is None:
            object.__setattr__(self, "momentum_buffer", self.params.like(np.zeros(expected, np.float32)))
        self.params.check_same_shape(self.momentum_buffer)

    def with_params(self, params: ParamVector) -> "MlpModel":
        """Same architecture, new parameters, fresh (zero) momentum."""
        return MlpModel(self.layer_sizes, params)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views for each layer."""
        return _layers(self.layer_sizes, self.params.values)


def _layers(layer_sizes, values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out, offset = [], 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        out.append((w, values[offset : offset + fan_out]))
        offset += fan_out
    return out


def init_model(layer_sizes, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, zero momentum."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) <= 0:
        raise InvalidArchitectureError(f"need at least two positive layer sizes, got {sizes}")
    rng = make_rng(seed, 0x1417)
    parts = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        parts.append((f"layer{i}.weight", rng.uniform(-limit, limit, size=(fan_in, fan_out))))
        parts.append((f"layer{i}.bias", np.zeros(fan_out)))
    return MlpModel(tuple(sizes), ParamVector.concat(parts))


def _forward_cache(layer_sizes, values: np.ndarray, features: np.ndarray):
    if features.ndim != 2 or features.shape[1] != layer_sizes[0]:
        raise ShapeError(f"batch has shape {features.shape}, model expects (*, {layer_sizes[0]})")
    activations, pre = [features], []
    layers = _layers(layer_sizes, values)
    h = features
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, np.float32(0)) if i < len(layers) - 1 else z
        activations.append(h)
    return layers, activations, pre


def _softmax_xent(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    per_sample = -log_probs[np.arange(labels.size), labels]
    return per_sample, exp / denom


def forward(model: MlpModel, batch: Dataset) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and argmax predictions for ``batch``."""
    if len(batch) == 0:
        raise EmptyDataError("empty batch")
    _, activations, _ = _forward_cache(model.layer_sizes, model.params.values, batch.features)
    per_sample, _ = _softmax_xent(activations[-1], batch.labels)
    return float(per_sample.mean(dtype=np.float32)), np.argmax(activations[-1], axis=1)


def _gradient_values(layer_sizes, values: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    layers, activations, pre = _forward_cache(layer_sizes, values, features)
    _, probs = _softmax_xent(activations[-1], labels)
    delta = probs
    delta[np.arange(labels.size), labels] -= np.float32(1)
    delta /= np.float32(labels.size)
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append(delta.sum(axis=0))
        grads.append((activations[i].T @ delta).reshape(-1))
        if i:
            delta = (delta @ w.T) * (pre[i - 1] > 0)
    return np.concatenate(grads[::-1])


def gradient(model: MlpModel, batch: Dataset) -> ParamVector:
    """d(mean loss)/d(params) by backpropagation."""
    if len(batch) == 0:
        raise EmptyDataError("empty batch")
    return model.params.like(_gradient_values(model.layer_sizes, model.params.values, batch.features, batch.labels))


def local_train(
    model: MlpModel, dataset: Dataset, config: TrainConfig, *, round_index: int = 0, client_id: int = 0
) -> MlpModel:
    """Mini-batch SGD with momentum; returns a new model.

    Batch order comes from a generator keyed by (seed, client, round). Rows
    inside a batch are kept in ascending index order, so a full batch is
    bitwise the same as ``gradient(model, dataset)``.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataError("cannot train on an empty dataset")
    rng = make_rng(config.seed, 0x7EA1, client_id, round_index)
    lr = np.float32(config.learning_rate)
    mu = np.float32(config.momentum)
    params = model.params.values.copy()
    buf = model.momentum_buffer.values.copy()
    for _ in range(config.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            g = _gradient_values(model.layer_sizes, params, dataset.features[idx], dataset.labels[idx])
            buf = mu * buf + g
            params = params - lr * buf
    return MlpModel(model.layer_sizes, model.params.like(params), model.params.like(buf))


def evaluate(model: MlpModel, dataset: Dataset) -> tuple[float, float]:
    """(accuracy, mean loss) on ``dataset``."""
    if len(dataset) == 0:
        raise EmptyDataError("cannot evaluate on an empty dataset")
    loss, pred = forward(model, dataset)
    return float(np.mean(pred == dataset.labels)), loss
