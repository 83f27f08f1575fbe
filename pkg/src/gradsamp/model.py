"""Minimal deterministic feedforward engine.

Dense / ReLU stacks with a softmax cross-entropy head, trained by SGD with
classical momentum and coupled L2 weight decay:

    v' = momentum * v + g + weight_decay * theta
    theta' = theta - eta * v'

Everything is float64 and purely functional: operations return new values
instead of mutating, which keeps parameter snapshots cheap and safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DivergenceError


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    bias: bool = True


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class SoftmaxCrossEntropyHead:
    classes: int


LayerDesc = Dense | Relu | SoftmaxCrossEntropyHead


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer stack; the last layer must be the (only) head."""

    layers: tuple[LayerDesc, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model has no layers")
        heads = [i for i, l in enumerate(self.layers) if isinstance(l, SoftmaxCrossEntropyHead)]
        if len(heads) != 1 or heads[0] != len(self.layers) - 1:
            raise ValueError("model must end with exactly one softmax cross-entropy head")
        if not isinstance(self.layers[0], Dense):
            raise ValueError("first layer must be Dense (defines the input width)")
        width = self.layers[0].in_dim
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                if layer.in_dim < 1 or layer.out_dim < 1:
                    raise ValueError(f"layer {i}: Dense dims must be >= 1")
                if layer.in_dim != width:
                    raise ValueError(
                        f"layer {i}: Dense expects width {layer.in_dim}, got {width}"
                    )
                width = layer.out_dim
            elif isinstance(layer, SoftmaxCrossEntropyHead):
                if layer.classes != width:
                    raise ValueError(
                        f"head expects {layer.classes} classes, incoming width is {width}"
                    )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim  # type: ignore[union-attr]

    @property
    def classes(self) -> int:
        return self.layers[-1].classes  # type: ignore[union-attr]

    def dense_layers(self) -> list[Dense]:
        return [l for l in self.layers if isinstance(l, Dense)]


def mlp(input_dim: int, hidden: Iterable[int], classes: int) -> ModelSpec:
    """Dense/ReLU stack ending in a softmax cross-entropy head."""
    layers: list[LayerDesc] = []
    width = input_dim
    for h in hidden:
        layers.append(Dense(width, h))
        layers.append(Relu())
        width = h
    layers.append(Dense(width, classes))
    layers.append(SoftmaxCrossEntropyHead(classes))
    return ModelSpec(tuple(layers))


@dataclass(frozen=True)
class ParamSlice:
    name: str
    offset: int
    length: int


@dataclass(frozen=True)
class LayerPartition:
    """Contiguous, ordered, non-overlapping named slices covering [0, total)."""

    slices: tuple[ParamSlice, ...]

    def __post_init__(self):
        pos = 0
        for s in self.slices:
            if s.offset != pos:
                raise ValueError(f"slice {s.name}: offset {s.offset}, expected {pos}")
            if s.length < 1:
                raise ValueError(f"slice {s.name}: empty slice")
            pos += s.length

    @property
    def total(self) -> int:
        last = self.slices[-1]
        return last.offset + last.length

    def names(self) -> list[str]:
        return [s.name for s in self.slices]

    def view(self, values: np.ndarray, name: str) -> np.ndarray:
        for s in self.slices:
            if s.name == name:
                return values[s.offset : s.offset + s.length]
        raise KeyError(name)


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 parameter store partitioned into named per-layer slices."""

    values: np.ndarray
    partition: LayerPartition

    def __post_init__(self):
        if self.values.dtype != np.float64 or self.values.ndim != 1:
            raise ValueError("params must be a flat float64 vector")
        if self.values.shape[0] != self.partition.total:
            raise ValueError(
                f"param length {self.values.shape[0]} != partition total {self.partition.total}"
            )


@dataclass(frozen=True)
class SgdHyper:
    eta: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.001

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass(frozen=True)
class SgdState:
    velocity: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "SgdState":
        return cls(np.zeros(n))


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a nonempty [batch, dim] matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be a vector matching the batch size")


def build_partition(spec: ModelSpec) -> LayerPartition:
    slices = []
    offset = 0
    for i, layer in enumerate(spec.dense_layers()):
        n_w = layer.in_dim * layer.out_dim
        slices.append(ParamSlice(f"dense{i}.w", offset, n_w))
        offset += n_w
        if layer.bias:
            slices.append(ParamSlice(f"dense{i}.b", offset, layer.out_dim))
            offset += layer.out_dim
    return LayerPartition(tuple(slices))


def init_params(spec: ModelSpec, seed: int) -> tuple[ParamVector, LayerPartition]:
    """Uniform Glorot weights in (-sqrt(6/(in+out)), +sqrt(6/(in+out))), zero biases."""
    partition = build_partition(spec)
    values = np.zeros(partition.total)
    rng = np.random.default_rng(seed)
    for i, layer in enumerate(spec.dense_layers()):
        bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        w = rng.uniform(-bound, bound, size=layer.in_dim * layer.out_dim)
        partition.view(values, f"dense{i}.w")[:] = w
        # biases stay zero
    return ParamVector(values, partition), partition


@dataclass
class ForwardCache:
    """Per-layer activations captured for the backward pass.

    Holds object references to the params/batch it was computed from so a
    stale cache is detected instead of silently producing wrong gradients.
    """

    params_values: np.ndarray
    batch: Batch
    dense_inputs: list[np.ndarray]
    relu_pre: list[np.ndarray]
    probs: np.ndarray


@dataclass(frozen=True)
class ForwardResult:
    logits: np.ndarray
    loss: float
    cache: ForwardCache


def _dense_weights(params: ParamVector, idx: int, layer: Dense) -> tuple[np.ndarray, np.ndarray | None]:
    w = params.partition.view(params.values, f"dense{idx}.w").reshape(layer.in_dim, layer.out_dim)
    b = params.partition.view(params.values, f"dense{idx}.b") if layer.bias else None
    return w, b


def forward(spec: ModelSpec, params: ParamVector, batch: Batch) -> ForwardResult:
    """Mean cross-entropy over the batch, with activations cached for backward."""
    x = np.asarray(batch.features, dtype=np.float64)
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"batch feature dim {x.shape[1]} != model input dim {spec.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in batch features")
    labels = np.asarray(batch.labels)
    if labels.min() < 0 or labels.max() >= spec.classes:
        raise ValueError("labels out of range for the model head")

    dense_inputs: list[np.ndarray] = []
    relu_pre: list[np.ndarray] = []
    a = x
    di = 0
    for layer in spec.layers:
        if isinstance(layer, Dense):
            w, b = _dense_weights(params, di, layer)
            dense_inputs.append(a)
            a = a @ w
            if b is not None:
                a = a + b
            di += 1
        elif isinstance(layer, Relu):
            relu_pre.append(a)
            a = np.maximum(a, 0.0)

    logits = a
    # log-sum-exp stabilisation: loss_i = lse(z_i) - z_i[y_i]
    zmax = logits.max(axis=1, keepdims=True)
    exps = np.exp(logits - zmax)
    denom = exps.sum(axis=1, keepdims=True)
    probs = exps / denom
    lse = zmax[:, 0] + np.log(denom[:, 0])
    n = logits.shape[0]
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    cache = ForwardCache(params.values, batch, dense_inputs, relu_pre, probs)
    return ForwardResult(logits, loss, cache)


def backward(spec: ModelSpec, params: ParamVector, batch: Batch, cache: ForwardCache) -> np.ndarray:
    """Gradient of the mean cross-entropy loss, flattened like the params."""
    if cache.params_values is not params.values or cache.batch is not batch:
        raise ValueError("stale cache: backward must use the matching forward's cache")
    labels = np.asarray(batch.labels)
    n = labels.shape[0]
    delta = cache.probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad = np.zeros_like(params.values)
    dense = spec.dense_layers()
    di = len(dense) - 1
    ri = len(cache.relu_pre) - 1
    for layer in reversed(spec.layers):
        if isinstance(layer, Relu):
            delta = delta * (cache.relu_pre[ri] > 0)
            ri -= 1
        elif isinstance(layer, Dense):
            a_in = cache.dense_inputs[di]
            gw = a_in.T @ delta
            params.partition.view(grad, f"dense{di}.w")[:] = gw.ravel()
            if layer.bias:
                params.partition.view(grad, f"dense{di}.b")[:] = delta.sum(axis=0)
            if di > 0:
                w, _ = _dense_weights(params, di, layer)
                delta = delta @ w.T
            di -= 1
    return grad


def _first_nonfinite_layer(partition: LayerPartition, vec: np.ndarray) -> str:
    bad = ~np.isfinite(vec)
    idx = int(np.argmax(bad))
    for s in partition.slices:
        if s.offset <= idx < s.offset + s.length:
            return s.name
    return "<unknown>"


def sgd_step(
    params: ParamVector, grad: np.ndarray, state: SgdState, hyper: SgdHyper
) -> tuple[ParamVector, SgdState]:
    if grad.shape != params.values.shape:
        raise ValueError("grad shape does not match params")
    if not np.all(np.isfinite(grad)):
        layer = _first_nonfinite_layer(params.partition, grad)
        raise DivergenceError(f"non-finite gradient in layer {layer!r}")
    v = hyper.momentum * state.velocity + grad + hyper.weight_decay * params.values
    new_values = params.values - hyper.eta * v
    return ParamVector(new_values, params.partition), SgdState(v)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    loss: float


def evaluate(spec: ModelSpec, params: ParamVector, dataset, chunk: int = 4096) -> EvalResult:
    """Accuracy and mean loss over a dataset; argmax ties go to the lowest class."""
    features = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels)
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, chunk):
        b = Batch(features[start : start + chunk], labels[start : start + chunk])
        out = forward(spec, params, b)
        preds = np.argmax(out.logits, axis=1)  # first max -> lowest class index
        correct += int(np.sum(preds == b.labels))
        loss_sum += out.loss * b.features.shape[0]
    return EvalResult(accuracy=correct / n, loss=loss_sum / n)
