"""Minimal dense-network machinery.

A model is split into a feature extractor (stack of affine layers with
relu/identity activations) and a linear classifier head whose weight
rows act as per-class proxies. Everything is float64 and deterministic:
given the same inputs and seed, every function returns bit-identical
results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedrema import backend
from fedrema.errors import ConfigurationError, DimensionError

RELU = "relu"
IDENTITY = "identity"


def _as_matrix(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _as_vector(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)


@dataclass
class Layer:
    """One affine layer: y = act(x @ weight.T + bias)."""

    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = RELU

    def __post_init__(self):
        self.weight = _as_matrix(self.weight)
        self.bias = _as_vector(self.bias)
        if self.weight.ndim != 2:
            raise DimensionError("layer weight must be 2-D")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise DimensionError(
                f"bias length {self.bias.shape[0]} != output dim {self.weight.shape[0]}"
            )
        if self.activation not in (RELU, IDENTITY):
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class FeatureExtractor:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for i in range(1, len(self.layers)):
            if self.layers[i].in_dim != self.layers[i - 1].out_dim:
                raise DimensionError(
                    f"layer {i} expects input dim {self.layers[i].in_dim} but "
                    f"layer {i - 1} outputs {self.layers[i - 1].out_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> "FeatureExtractor":
        return FeatureExtractor([l.copy() for l in self.layers])


@dataclass
class Classifier:
    """Linear head; weight row c is the proxy for class c."""

    weight: np.ndarray  # (num_classes, feature_dim)
    bias: np.ndarray  # (num_classes,)

    def __post_init__(self):
        self.weight = _as_matrix(self.weight)
        self.bias = _as_vector(self.bias)
        if self.weight.shape[0] < 2:
            raise ConfigurationError("classifier needs at least 2 classes")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise DimensionError("classifier bias length != number of classes")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "Classifier":
        return Classifier(self.weight.copy(), self.bias.copy())


@dataclass
class ModelParams:
    extractor: FeatureExtractor
    classifier: Classifier

    def __post_init__(self):
        if self.extractor.out_dim != self.classifier.feature_dim:
            raise DimensionError(
                f"extractor outputs {self.extractor.out_dim} features but "
                f"classifier expects {self.classifier.feature_dim}"
            )

    def copy(self) -> "ModelParams":
        return ModelParams(self.extractor.copy(), self.classifier.copy())


@dataclass
class LabeledBatch:
    inputs: np.ndarray  # (n, input_dim)
    labels: np.ndarray  # (n,) class indices

    def __post_init__(self):
        self.inputs = _as_matrix(self.inputs)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DimensionError("inputs and labels disagree on sample count")

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass
class ModelGrads:
    """Gradient structure mirroring ModelParams."""

    layer_grads: list[tuple[np.ndarray, np.ndarray]]  # (dweight, dbias) per layer
    classifier_weight: np.ndarray
    classifier_bias: np.ndarray


def init_model(input_dim: int, hidden_dims: list[int], feature_dim: int,
               num_classes: int, seed: int) -> ModelParams:
    """Seeded init: extractor layers uniform(-a, a) with
    a = sqrt(6 / (fan_in + fan_out)), classifier head all zeros.

    A zero head means the early classifier response is entirely the
    accumulated training signal, which keeps the per-client prediction
    bias visible to the probing step instead of being swamped by a
    shared random init.
    """
    rng = np.random.default_rng(seed)
    dims = [input_dim] + list(hidden_dims) + [feature_dim]
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_out, fan_in))
        act = RELU if i < len(dims) - 2 else IDENTITY
        layers.append(Layer(w, np.zeros(fan_out), act))
    head = Classifier(np.zeros((num_classes, feature_dim)), np.zeros(num_classes))
    return ModelParams(FeatureExtractor(layers), head)


def _forward_trace(params: ModelParams, inputs: np.ndarray):
    """Forward pass keeping pre-activations for backprop."""
    x = _as_matrix(inputs)
    if x.shape[1] != params.extractor.in_dim:
        raise DimensionError(
            f"input dim {x.shape[1]} != extractor input dim {params.extractor.in_dim} (layer 0)"
        )
    acts = [x]
    pres = []
    for i, layer in enumerate(params.extractor.layers):
        if acts[-1].shape[1] != layer.in_dim:
            raise DimensionError(f"dimension mismatch entering extractor layer {i}")
        pre = backend.affine(acts[-1], layer.weight, layer.bias)
        pres.append(pre)
        acts.append(backend.relu(pre) if layer.activation == RELU else pre)
    features = acts[-1]
    logits = backend.affine(features, params.classifier.weight, params.classifier.bias)
    return acts, pres, features, logits


def forward(params: ModelParams, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Returns (features, pre-softmax logits), one row per sample."""
    _, _, features, logits = _forward_trace(params, inputs)
    return features, logits


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax with max-subtraction; rows of a 2-D input
    are handled independently."""
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(params: ModelParams, batch: LabeledBatch) -> float:
    _, logits = forward(params, batch.inputs)
    probs = softmax(logits)
    n = len(batch)
    return float(-np.mean(np.log(probs[np.arange(n), batch.labels])))


def cross_entropy_grad(params: ModelParams, batch: LabeledBatch) -> ModelGrads:
    """Exact mean-over-batch gradient of softmax cross-entropy.

    The proxy for the true class gets a gradient pointing away from the
    features (so the update moves toward them); all other proxies get
    the opposite sign.
    """
    if len(batch) == 0:
        raise ConfigurationError("empty batch")
    n = len(batch)
    if np.any(batch.labels < 0) or np.any(batch.labels >= params.classifier.num_classes):
        raise ConfigurationError("label out of range")
    acts, pres, features, logits = _forward_trace(params, batch.inputs)
    probs = softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(n), batch.labels] -= 1.0
    dlogits /= n
    dlogits = np.ascontiguousarray(dlogits)

    cw, cb = backend.affine_param_grads(features, dlogits)
    dx = backend.affine_input_grad(dlogits, params.classifier.weight)

    layer_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.extractor.layers)
    for i in range(len(params.extractor.layers) - 1, -1, -1):
        layer = params.extractor.layers[i]
        if layer.activation == RELU:
            dpre = backend.relu_grad(pres[i], dx)
        else:
            dpre = dx
        dpre = np.ascontiguousarray(dpre)
        dw, db = backend.affine_param_grads(acts[i], dpre)
        layer_grads[i] = (dw, db)
        if i > 0:
            dx = backend.affine_input_grad(dpre, layer.weight)
    return ModelGrads(layer_grads, cw, cb)


def _apply_grads(params: ModelParams, grads: ModelGrads, lr: float) -> None:
    for layer, (dw, db) in zip(params.extractor.layers, grads.layer_grads):
        backend.sgd_update(layer.weight, dw, lr)
        backend.sgd_update(layer.bias, db, lr)
    backend.sgd_update(params.classifier.weight, grads.classifier_weight, lr)
    backend.sgd_update(params.classifier.bias, grads.classifier_bias, lr)


def sgd_step(params: ModelParams, batch: LabeledBatch, lr: float) -> ModelParams:
    """One full-batch gradient step; returns a new ModelParams."""
    if lr < 0:
        raise ConfigurationError(f"learning rate must be >= 0, got {lr}")
    out = params.copy()
    _apply_grads(out, cross_entropy_grad(params, batch), lr)
    return out


def local_train(params: ModelParams, dataset: LabeledBatch, epochs: int,
                batch_size: int, lr: float, rng_seed) -> ModelParams:
    """Shuffled mini-batch SGD; shuffle order fully determined by rng_seed."""
    if len(dataset) == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    if epochs < 1:
        raise ConfigurationError("epochs must be >= 1")
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    rng = np.random.default_rng(rng_seed)
    out = params.copy()
    n = len(dataset)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            mini = LabeledBatch(dataset.inputs[idx], dataset.labels[idx])
            _apply_grads(out, cross_entropy_grad(out, mini), lr)
    return out


def evaluate(params: ModelParams, test: LabeledBatch) -> float:
    """Fraction of argmax-correct predictions (ties -> smallest class)."""
    if len(test) == 0:
        raise ConfigurationError("empty test set")
    _, logits = forward(params, test.inputs)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == test.labels))
