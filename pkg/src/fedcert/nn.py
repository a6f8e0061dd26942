"""Small numpy classifier with hand-written backpropagation.

Images are batched channels-last, ``(batch, height, width, channels)``.
Parameters live in one flat float64 vector (:class:`ParamVector`) so that
clients can be averaged, checkpointed and compared bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Conv:
    in_channels: int
    out_channels: int
    kernel: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


Layer = Union[Dense, Conv, ReLU, Flatten]


@dataclass(frozen=True)
class NetworkSpec:
    """Layer stack followed by an implicit softmax cross-entropy head.

    The last layer must produce ``num_classes`` logits.
    """

    layers: tuple
    input_shape: tuple
    num_classes: int
    shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            shapes.append(_output_shape(layer, shapes[-1], i))
        if shapes[-1] != (self.num_classes,):
            raise ValueError(
                f"network output shape {shapes[-1]} does not match num_classes={self.num_classes}"
            )
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def layout(self) -> tuple:
        entries = []
        offset = 0
        for i, layer in enumerate(self.layers):
            for name, shape in _param_shapes(layer):
                entries.append((i, name, offset, shape))
                offset += int(np.prod(shape))
        return tuple(entries)

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for _, _, _, shape in self.layout)


def _output_shape(layer, shape, i):
    if isinstance(layer, Dense):
        if shape != (layer.in_features,):
            raise ValueError(f"layer {i}: Dense expects ({layer.in_features},), got {shape}")
        return (layer.out_features,)
    if isinstance(layer, Conv):
        if len(shape) != 3 or shape[2] != layer.in_channels:
            raise ValueError(f"layer {i}: Conv expects (H, W, {layer.in_channels}), got {shape}")
        h, w = shape[0] - layer.kernel + 1, shape[1] - layer.kernel + 1
        if h < 1 or w < 1:
            raise ValueError(f"layer {i}: kernel {layer.kernel} larger than input {shape}")
        return (h, w, layer.out_channels)
    if isinstance(layer, ReLU):
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    raise TypeError(f"layer {i}: unknown layer type {type(layer).__name__}")


def _param_shapes(layer):
    if isinstance(layer, Dense):
        return [("W", (layer.in_features, layer.out_features)), ("b", (layer.out_features,))]
    if isinstance(layer, Conv):
        k = layer.kernel
        return [("W", (k, k, layer.in_channels, layer.out_channels)), ("b", (layer.out_channels,))]
    return []


def cnn(input_shape, num_classes, channels=(8, 16), kernel=3) -> NetworkSpec:
    """Plain stride-1 conv stack, then one dense layer to the logits."""
    h, w, c = input_shape
    layers = []
    for out in channels:
        layers += [Conv(c, out, kernel), ReLU()]
        h, w, c = h - kernel + 1, w - kernel + 1, out
    layers += [Flatten(), Dense(h * w * c, num_classes)]
    return NetworkSpec(tuple(layers), input_shape, num_classes)


def mlp(input_shape, num_classes, hidden=(32,)) -> NetworkSpec:
    d = int(np.prod(input_shape))
    layers = [Flatten()]
    for width in hidden:
        layers += [Dense(d, width), ReLU()]
        d = width
    layers.append(Dense(d, num_classes))
    return NetworkSpec(tuple(layers), input_shape, num_classes)


@dataclass(frozen=True, eq=False)
class ParamVector:
    data: np.ndarray
    layout: tuple

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=DTYPE)
        if data.ndim != 1:
            raise ValueError("ParamVector data must be one-dimensional")
        expected = sum(int(np.prod(shape)) for _, _, _, shape in self.layout)
        if data.size != expected:
            raise ValueError(f"layout describes {expected} values, data has {data.size}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def unflatten(self) -> dict:
        """Views keyed by ``(layer index, name)``."""
        return {
            (i, name): self.data[off:off + int(np.prod(shape))].reshape(shape)
            for i, name, off, shape in self.layout
        }

    @classmethod
    def flatten(cls, layout, arrays: dict) -> "ParamVector":
        parts = [np.asarray(arrays[(i, name)], dtype=DTYPE).reshape(-1) for i, name, _, _ in layout]
        data = np.concatenate(parts) if parts else np.zeros(0, dtype=DTYPE)
        return cls(data, layout)

    def same_layout(self, other: "ParamVector") -> bool:
        return self.layout == other.layout

    def __len__(self):
        return self.data.size


def zeros(net: NetworkSpec) -> ParamVector:
    return ParamVector(np.zeros(net.num_params), net.layout)


def init_params(net: NetworkSpec, seed) -> ParamVector:
    """He-scaled normal weights (std sqrt(2 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for i, name, _, shape in net.layout:
        if name == "b":
            arrays[(i, name)] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            arrays[(i, name)] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return ParamVector.flatten(net.layout, arrays)


def _check_batch(net, batch):
    batch = np.asarray(batch, dtype=DTYPE)
    if batch.shape[1:] != net.input_shape:
        raise ValueError(
            f"batch shape {batch.shape} does not match network input (batch, *{net.input_shape})"
        )
    return batch


def _conv_forward(x, W, b):
    k = W.shape[0]
    patches = sliding_window_view(x, (k, k), axis=(1, 2))  # (B, Ho, Wo, C, k, k)
    B, Ho, Wo = patches.shape[:3]
    cols = patches.transpose(0, 1, 2, 4, 5, 3).reshape(B * Ho * Wo, -1)
    out = cols @ W.reshape(-1, W.shape[-1]) + b
    return out.reshape(B, Ho, Wo, -1), cols


def _forward_logits(net, params, batch, keep=False):
    p = params.unflatten()
    h = batch
    caches = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Dense):
            caches.append(h)
            h = h @ p[(i, "W")] + p[(i, "b")]
        elif isinstance(layer, Conv):
            h, cols = _conv_forward(h, p[(i, "W")], p[(i, "b")])
            caches.append(cols if keep else None)
        elif isinstance(layer, ReLU):
            caches.append(h > 0)
            h = np.maximum(h, 0.0)
        else:
            caches.append(h.shape)
            h = h.reshape(h.shape[0], -1)
    return h, caches


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(net: NetworkSpec, params: ParamVector, batch) -> np.ndarray:
    """Class probabilities, one row per batch element."""
    if params.layout != net.layout:
        raise ValueError("parameter layout does not match network")
    logits, _ = _forward_logits(net, params, _check_batch(net, batch))
    return np.exp(_log_softmax(logits))


def predict(net: NetworkSpec, params: ParamVector, batch) -> np.ndarray:
    logits, _ = _forward_logits(net, params, _check_batch(net, batch))
    return logits.argmax(axis=1)


def cross_entropy(probs, labels) -> float:
    return float(-np.mean(np.log(probs[np.arange(len(labels)), labels])))


def backward(net: NetworkSpec, params: ParamVector, batch, labels):
    """Mean softmax cross-entropy over the batch and its gradient."""
    if params.layout != net.layout:
        raise ValueError("parameter layout does not match network")
    batch = _check_batch(net, batch)
    labels = np.asarray(labels)
    if labels.shape != (batch.shape[0],):
        raise ValueError(f"expected {batch.shape[0]} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= net.num_classes):
        raise ValueError(f"labels must lie in [0, {net.num_classes})")
    labels = labels.astype(np.intp)

    logits, caches = _forward_logits(net, params, batch, keep=True)
    B = batch.shape[0]
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(B), labels].mean())

    delta = np.exp(logp)
    delta[np.arange(B), labels] -= 1.0
    delta /= B

    p = params.unflatten()
    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[i], caches[i]
        if isinstance(layer, Dense):
            grads[(i, "W")] = cache.T @ delta
            grads[(i, "b")] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ p[(i, "W")].T
        elif isinstance(layer, Conv):
            W = p[(i, "W")]
            k, _, cin, cout = W.shape
            d2 = delta.reshape(-1, cout)
            grads[(i, "W")] = (cache.T @ d2).reshape(W.shape)
            grads[(i, "b")] = d2.sum(axis=0)
            if i > 0:
                Bn, Ho, Wo, _ = delta.shape
                dcols = (d2 @ W.reshape(-1, cout).T).reshape(Bn, Ho, Wo, k, k, cin)
                dx = np.zeros((Bn, Ho + k - 1, Wo + k - 1, cin))
                for a in range(k):
                    for c in range(k):
                        dx[:, a:a + Ho, c:c + Wo, :] += dcols[:, :, :, a, c, :]
                delta = dx
        elif isinstance(layer, ReLU):
            delta = delta * cache
        else:
            delta = delta.reshape(cache)
    return loss, ParamVector.flatten(net.layout, grads)


def sgd_step(params: ParamVector, grads: ParamVector, lr: float) -> ParamVector:
    if not params.same_layout(grads):
        raise ValueError("parameter and gradient layouts differ")
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    return ParamVector(params.data - lr * grads.data, params.layout)


def average_params(vectors: Sequence[ParamVector]) -> ParamVector:
    """Elementwise mean, bitwise independent of the input order.

    Each coordinate is summed as offsets from its minimum in sorted order,
    so identical inputs average to themselves exactly.
    """
    vectors = list(vectors)
    if not vectors:
        raise ValueError("cannot average an empty list of parameter vectors")
    layout = vectors[0].layout
    if any(v.layout != layout for v in vectors[1:]):
        raise ValueError("parameter layouts differ")
    if len(vectors) == 1:
        return vectors[0]
    stack = np.sort(np.stack([v.data for v in vectors]), axis=0)
    base = stack[0]
    total = np.zeros_like(base)
    for row in stack[1:]:
        total += row - base
    return ParamVector(base + total / len(vectors), layout)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 0.1
    decay_factor: float = 0.1
    decay_every: int = 30

    def __post_init__(self):
        if self.base_lr < 0 or self.decay_factor <= 0 or self.decay_every < 1:
            raise ValueError(f"invalid learning-rate schedule {self}")


def lr_at_epoch(sched: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return sched.base_lr * sched.decay_factor ** (epoch // sched.decay_every)
