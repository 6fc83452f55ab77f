"""Minimal dense network: training, prediction, and input gradients.

Everything is plain numpy. The network is a stack of affine layers with
ReLU hidden activations (identity on the output layer by default); the
softmax lives outside the layer stack so that objective gradients can be
chained through it explicitly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .objectives import ObjectiveKind, ObjectiveReference, objective_grad_probs

MAGIC = b"MEADMDL1"

RELU = "relu"
IDENTITY = "identity"


class ConfigurationError(ValueError):
    """Raised when shapes or settings do not chain up."""


@dataclass
class ModelParams:
    """Weights/biases of a dense softmax classifier (or autoencoder)."""

    weights: list[np.ndarray]          # each [out, in]
    biases: list[np.ndarray]           # each [out]
    activations: list[str] = field(default_factory=list)   # per layer
    dropout: list[float] = field(default_factory=list)     # per hidden layer

    def __post_init__(self):
        n = len(self.weights)
        if len(self.biases) != n:
            raise ConfigurationError("weights/biases length mismatch")
        if not self.activations:
            self.activations = [RELU] * (n - 1) + [IDENTITY]
        if not self.dropout:
            self.dropout = [0.0] * (n - 1)
        for i in range(n - 1):
            if self.weights[i + 1].shape[1] != self.weights[i].shape[0]:
                raise ConfigurationError(
                    f"layer {i} out dim {self.weights[i].shape[0]} does not "
                    f"chain into layer {i + 1} in dim {self.weights[i + 1].shape[1]}"
                )
        for W, b in zip(self.weights, self.biases):
            if b.shape[0] != W.shape[0]:
                raise ConfigurationError("bias dim mismatch")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ConfigurationError("non-finite parameters")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            list(self.dropout),
        )


@dataclass
class SoftPrediction:
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class LabeledDataset:
    inputs: np.ndarray    # [m, d]
    labels: np.ndarray    # [m] ints in {0..C-1}

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.labels):
            raise ConfigurationError("inputs/labels shape mismatch")
        if len(self.inputs) < 1:
            raise ConfigurationError("empty dataset")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be > 0")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (works on 1-d or 2-d arrays)."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def init_params(arch: list[int], seed: int = 0,
                activations: list[str] | None = None,
                dropout: list[float] | None = None) -> ModelParams:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], seeded."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ModelParams(weights, biases,
                       activations or [], dropout or [])


def _dropout_masks(params: ModelParams, rng: np.random.Generator,
                   batch_shape=()) -> list[np.ndarray | None]:
    """Inverted-dropout masks per hidden layer (None where rate is 0)."""
    masks = []
    for i in range(params.n_layers - 1):
        rate = params.dropout[i]
        if rate > 0:
            width = params.weights[i].shape[0]
            keep = rng.random(batch_shape + (width,)) >= rate
            masks.append(keep / (1.0 - rate))
        else:
            masks.append(None)
    return masks


def _forward_cached(params: ModelParams, x: np.ndarray,
                    masks: list[np.ndarray | None] | None = None):
    """Forward pass keeping pre-activations and activations for backprop.

    Works for a single input [d] or a batch [m, d].
    Returns (pre_acts, acts) where acts[0] is the input.
    """
    acts = [x]
    pre_acts = []
    h = x
    for i, (W, b, act) in enumerate(zip(params.weights, params.biases,
                                        params.activations)):
        z = h @ W.T + b
        pre_acts.append(z)
        if act == RELU:
            h = np.maximum(z, 0.0)
        elif act == IDENTITY:
            h = z
        else:
            raise ConfigurationError(f"unknown activation {act!r}")
        if masks is not None and i < params.n_layers - 1 and masks[i] is not None:
            h = h * masks[i]
        acts.append(h)
    return pre_acts, acts


def forward(params: ModelParams, x: np.ndarray,
            dropout_active: bool = False, seed: int = 0) -> SoftPrediction:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.in_dim:
        raise ConfigurationError(
            f"input dim {x.shape[-1]} != model dim {params.in_dim}")
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("non-finite input")
    masks = None
    if dropout_active:
        rng = np.random.default_rng(seed)
        masks = _dropout_masks(params, rng, batch_shape=x.shape[:-1])
    _, acts = _forward_cached(params, x, masks)
    logits = acts[-1]
    return SoftPrediction(logits=logits, probs=softmax(logits))


def hidden_activations(params: ModelParams, x: np.ndarray) -> list[np.ndarray]:
    """Per-layer post-activation values (detector features)."""
    _, acts = _forward_cached(params, x)
    return acts[1:]


def predict_label(params: ModelParams, x: np.ndarray) -> int | np.ndarray:
    pred = forward(params, x)
    return np.argmax(pred.probs, axis=-1)


def _backprop_to_input(params: ModelParams, pre_acts, grad_top: np.ndarray) -> np.ndarray:
    """Pull a gradient at the network output back to the input."""
    g = grad_top
    for i in range(params.n_layers - 1, -1, -1):
        if params.activations[i] == RELU:
            g = g * (pre_acts[i] > 0)
        g = g @ params.weights[i]
    return g


def input_gradient(params: ModelParams, x_adv: np.ndarray,
                   objective: ObjectiveKind,
                   reference: ObjectiveReference) -> np.ndarray:
    """Gradient of the attack objective w.r.t. the input, by reverse mode.

    The objective gradient w.r.t. the probability vector is chained through
    the softmax Jacobian (diag(p) - p p^T) and then through the layers.
    """
    x_adv = np.asarray(x_adv, dtype=float)
    pre_acts, acts = _forward_cached(params, x_adv)
    probs = softmax(acts[-1])
    g_probs = objective_grad_probs(objective, reference, probs)
    # softmax Jacobian-transpose product
    g_logits = probs * (g_probs - np.sum(probs * g_probs, axis=-1, keepdims=True))
    return _backprop_to_input(params, pre_acts, g_logits)


def logit_gradient(params: ModelParams, x: np.ndarray, k: int) -> np.ndarray:
    """Gradient of logit k w.r.t. the input (used by local linearization)."""
    pre_acts, acts = _forward_cached(params, np.asarray(x, dtype=float))
    g = np.zeros(params.out_dim)
    g[k] = 1.0
    return _backprop_to_input(params, pre_acts, g)


def _sgd(params: ModelParams, data: LabeledDataset, cfg: TrainConfig,
         batch_grads) -> ModelParams:
    """Generic minibatch SGD with momentum and weight decay.

    batch_grads(params, X, y) must return (loss, dWs, dbs).
    """
    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    vel_W = [np.zeros_like(W) for W in params.weights]
    vel_b = [np.zeros_like(b) for b in params.biases]
    m = len(data)
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, dWs, dbs = batch_grads(params, data.inputs[idx], data.labels[idx])
            if not np.isfinite(loss):
                raise ConfigurationError(f"non-finite training loss {loss}")
            for i in range(params.n_layers):
                gW = dWs[i] + cfg.weight_decay * params.weights[i]
                gb = dbs[i]
                vel_W[i] = cfg.momentum * vel_W[i] - cfg.learning_rate * gW
                vel_b[i] = cfg.momentum * vel_b[i] - cfg.learning_rate * gb
                params.weights[i] += vel_W[i]
                params.biases[i] += vel_b[i]
    return params


def _param_grads(params: ModelParams, X: np.ndarray, delta_top: np.ndarray,
                 pre_acts, acts):
    """Weight/bias gradients given the loss gradient at the output layer."""
    dWs = [None] * params.n_layers
    dbs = [None] * params.n_layers
    delta = delta_top
    for i in range(params.n_layers - 1, -1, -1):
        if params.activations[i] == RELU:
            delta = delta * (pre_acts[i] > 0)
        dWs[i] = delta.T @ acts[i]
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i]
    return dWs, dbs


def train_classifier(data: LabeledDataset, arch: list[int], cfg: TrainConfig,
                     dropout: list[float] | None = None) -> ModelParams:
    """Cross-entropy SGD training; deterministic per seed."""
    params = init_params(arch, seed=cfg.seed, dropout=dropout)

    def batch_grads(p, X, y):
        pre_acts, acts = _forward_cached(p, X)
        probs = softmax(acts[-1])
        B = len(X)
        loss = -np.mean(np.log(np.clip(probs[np.arange(B), y], 1e-12, 1.0)))
        delta = probs.copy()
        delta[np.arange(B), y] -= 1.0
        delta /= B
        dWs, dbs = _param_grads(p, X, delta, pre_acts, acts)
        return loss, dWs, dbs

    return _sgd(params, data, cfg, batch_grads)


def train_autoencoder(data: LabeledDataset, arch: list[int], cfg: TrainConfig,
                      activations: list[str] | None = None) -> ModelParams:
    """Dense encoder-decoder trained on mean squared reconstruction error."""
    if arch[0] != arch[-1]:
        raise ConfigurationError("autoencoder input/output dims must match")
    params = init_params(arch, seed=cfg.seed, activations=activations)

    def batch_grads(p, X, _y):
        pre_acts, acts = _forward_cached(p, X)
        out = acts[-1]
        B = len(X)
        loss = np.mean((out - X) ** 2)
        delta = 2.0 * (out - X) / (B * X.shape[1])
        dWs, dbs = _param_grads(p, X, delta, pre_acts, acts)
        return loss, dWs, dbs

    return _sgd(params, data, cfg, batch_grads)


def accuracy(params: ModelParams, data: LabeledDataset) -> float:
    return float(np.mean(predict_label(params, data.inputs) == data.labels))


def reconstruct(params: ModelParams, x: np.ndarray) -> np.ndarray:
    _, acts = _forward_cached(params, np.asarray(x, dtype=float))
    return acts[-1]


def save_checkpoint(params: ModelParams, path) -> None:
    """Flat binary: magic, layer count, per-layer (out, in) u32 LE, f64 data."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", params.n_layers))
        for W in params.weights:
            f.write(struct.pack("<II", W.shape[0], W.shape[1]))
        for W, b in zip(params.weights, params.biases):
            f.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise ConfigurationError(f"bad checkpoint magic {blob[:8]!r}")
    (n_layers,) = struct.unpack_from("<I", blob, 8)
    off = 12
    dims = []
    for _ in range(n_layers):
        dims.append(struct.unpack_from("<II", blob, off))
        off += 8
    weights, biases = [], []
    for out_d, in_d in dims:
        W = np.frombuffer(blob, dtype="<f8", count=out_d * in_d, offset=off)
        off += out_d * in_d * 8
        b = np.frombuffer(blob, dtype="<f8", count=out_d, offset=off)
        off += out_d * 8
        weights.append(W.reshape(out_d, in_d).copy())
        biases.append(b.copy())
    if off != len(blob):
        raise ConfigurationError("checkpoint length mismatch")
    return ModelParams(weights, biases)
