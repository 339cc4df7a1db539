"""Small dense classifier with exact input gradients.

The surrogate is a stack of dense layers (tanh or identity activation) with a
softmax head, all float64. It is deliberately tiny: the attack retrains it
from scratch many times, needs exact jacobians with respect to the input, and
needs bit-identical results for a fixed seed. Everything here is plain numpy;
no framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDivergedError, UnsupportedVersionError, WeightFormatError

__all__ = [
    "Layer",
    "Surrogate",
    "TrainConfig",
    "ForwardCache",
    "forward",
    "forward_batch",
    "predict_label",
    "forward_cache",
    "input_gradient",
    "jacobian",
    "empirical_risk",
    "train",
    "save_weights",
    "load_weights",
    "WEIGHTS_VERSION",
]

ACTIVATIONS = ("tanh", "identity")
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class Layer:
    """One dense layer: out = act(weights @ x + bias)."""

    weights: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)
    activation: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] == 0 or w.shape[1] == 0:
            raise ValueError(f"weights must be a 2-d matrix, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match weights {w.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters contain non-finite values")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unsupported activation {self.activation!r}; expected one of {ACTIVATIONS}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Surrogate:
    """Dense feedforward classifier; softmax is applied after the last layer."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.d_in != prev.d_out:
                raise ValueError(
                    f"layer width mismatch: {prev.d_out} outputs feed {nxt.d_in} inputs"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].d_in

    @property
    def num_classes(self) -> int:
        return self.layers[-1].d_out

    @classmethod
    def random(
        cls,
        input_dim: int,
        num_classes: int,
        hidden: tuple[int, ...] = (64,),
        seed: int = 0,
    ) -> "Surrogate":
        """Seeded init: N(0, 1/d_in) weights, zero bias, tanh hidden layers."""
        if input_dim < 1 or num_classes < 2:
            raise ValueError("need input_dim >= 1 and num_classes >= 2")
        rng = np.random.default_rng(seed)
        dims = [input_dim, *hidden, num_classes]
        layers = []
        for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            w = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in))
            act = "identity" if i == len(dims) - 2 else "tanh"
            layers.append(Layer(w, np.zeros(d_out), act))
        return cls(tuple(layers))


def _check_input(model: Surrogate, x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (model.input_dim,):
        raise ValueError(f"input shape {v.shape} does not match input_dim {model.input_dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")
    return v


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else z


def _activation_derivative(name: str, a: np.ndarray) -> np.ndarray:
    # Written in terms of the activation output a = act(z).
    return 1.0 - a * a if name == "tanh" else np.ones_like(a)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, for backprop to the input."""

    x: np.ndarray
    outputs: list  # post-activation output of each layer
    logits: np.ndarray
    probs: np.ndarray


def forward_cache(model: Surrogate, x) -> ForwardCache:
    v = _check_input(model, x)
    a = v
    outputs = []
    for layer in model.layers:
        a = _apply_activation(layer.activation, layer.weights @ a + layer.bias)
        outputs.append(a)
    return ForwardCache(x=v, outputs=outputs, logits=outputs[-1], probs=_softmax(outputs[-1]))


def forward(model: Surrogate, x) -> np.ndarray:
    """Class probabilities at x (softmax over the last layer's output)."""
    return forward_cache(model, x).probs


def forward_batch(model: Surrogate, X: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch, rows are inputs."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != model.input_dim:
        raise ValueError(f"batch shape {A.shape} does not match input_dim {model.input_dim}")
    for layer in model.layers:
        A = _apply_activation(layer.activation, A @ layer.weights.T + layer.bias)
    return _softmax(A)


def predict_label(model: Surrogate, x) -> int:
    """argmax of the class probabilities; ties break to the lowest index."""
    return int(np.argmax(forward(model, x)))


def input_gradient(model: Surrogate, cache: ForwardCache, dlogits: np.ndarray) -> np.ndarray:
    """Backpropagate a gradient w.r.t. the logits down to the input."""
    g = np.asarray(dlogits, dtype=np.float64)
    for layer, a in zip(reversed(model.layers), reversed(cache.outputs)):
        g = layer.weights.T @ (g * _activation_derivative(layer.activation, a))
    return g


def jacobian(model: Surrogate, x) -> np.ndarray:
    """Exact jacobian of the probability vector w.r.t. the input, shape (K, d).

    Reverse accumulation: start from the softmax jacobian diag(p) - p p^T and
    pull it back through each layer.
    """
    cache = forward_cache(model, x)
    p = cache.probs
    G = np.diag(p) - np.outer(p, p)  # (K, K): rows are d p_i / d logits
    for layer, a in zip(reversed(model.layers), reversed(cache.outputs)):
        G = (G * _activation_derivative(layer.activation, a)) @ layer.weights
    return G


@dataclass
class TrainConfig:
    """Full-batch Adam settings."""

    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


LOSS_KINDS = ("hard_cross_entropy", "soft_cross_entropy")


def _target_matrix(model: Surrogate, dataset, loss_kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Stack dataset into an input matrix and a target-probability matrix."""
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}; expected one of {LOSS_KINDS}")
    if not dataset:
        raise ValueError("dataset is empty")
    K = model.num_classes
    X = np.stack([_check_input(model, x) for x, _ in dataset])
    rows = []
    for _, target in dataset:
        if loss_kind == "hard_cross_entropy":
            label = int(target)
            if not 0 <= label < K:
                raise ValueError(f"label {label} out of range for {K} classes")
            row = np.zeros(K)
            row[label] = 1.0
        else:
            row = np.asarray(target, dtype=np.float64)
            if row.shape != (K,):
                raise ValueError(f"soft target shape {row.shape} does not match {K} classes")
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-6:
                raise ValueError("soft target is not a probability vector")
        rows.append(row)
    return X, np.stack(rows)


def _risk_from_logits(logits: np.ndarray, Q: np.ndarray) -> float:
    # Mean cross-entropy -sum_k q_k log p_k, stable via log-softmax.
    return float(np.mean(-np.sum(Q * _log_softmax(logits), axis=1)))


def empirical_risk(model: Surrogate, dataset, loss_kind: str) -> float:
    """Mean cross-entropy of the model on the dataset."""
    X, Q = _target_matrix(model, dataset, loss_kind)
    logits = np.asarray(X, dtype=np.float64)
    for layer in model.layers:
        logits = _apply_activation(layer.activation, logits @ layer.weights.T + layer.bias)
    return _risk_from_logits(logits, Q)


def train(
    model: Surrogate, dataset, loss_kind: str, config: TrainConfig | None = None
) -> tuple[Surrogate, float]:
    """Full-batch Adam training; returns a new model and its final risk.

    The input model provides the starting weights and is not mutated. Training
    is fully deterministic for a fixed (model, dataset, config); the seed field
    exists for callers that derive the starting weights from it, training
    itself draws no random numbers. Raises TrainingDivergedError on a
    non-finite loss or parameter.
    """
    cfg = config or TrainConfig()
    X, Q = _target_matrix(model, dataset, loss_kind)
    n = X.shape[0]

    Ws = [layer.weights.copy() for layer in model.layers]
    bs = [layer.bias.copy() for layer in model.layers]
    acts = [layer.activation for layer in model.layers]

    mW = [np.zeros_like(w) for w in Ws]
    vW = [np.zeros_like(w) for w in Ws]
    mb = [np.zeros_like(b) for b in bs]
    vb = [np.zeros_like(b) for b in bs]

    for step in range(1, cfg.epochs + 1):
        # Forward, keeping per-layer outputs.
        outputs = []
        A = X
        for w, b, act in zip(Ws, bs, acts):
            A = _apply_activation(act, A @ w.T + b)
            outputs.append(A)
        logits = outputs[-1]
        risk = _risk_from_logits(logits, Q)
        if not np.isfinite(risk):
            raise TrainingDivergedError(f"non-finite loss at epoch {step}")

        # Backward. dL/dlogits of mean cross-entropy is (P - Q)/n.
        G = (_softmax(logits) - Q) / n
        gW = [None] * len(Ws)
        gb = [None] * len(bs)
        for i in range(len(Ws) - 1, -1, -1):
            G = G * _activation_derivative(acts[i], outputs[i])
            prev = X if i == 0 else outputs[i - 1]
            gW[i] = G.T @ prev
            gb[i] = G.sum(axis=0)
            if i > 0:
                G = G @ Ws[i]

        # Adam update with bias correction.
        c1 = 1.0 - cfg.beta1**step
        c2 = 1.0 - cfg.beta2**step
        for i in range(len(Ws)):
            for params, grads, ms, vs in ((Ws, gW, mW, vW), (bs, gb, mb, vb)):
                g = grads[i]
                ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g
                vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * (g * g)
                params[i] = params[i] - cfg.learning_rate * (ms[i] / c1) / (
                    np.sqrt(vs[i] / c2) + cfg.adam_eps
                )
                if not np.all(np.isfinite(params[i])):
                    raise TrainingDivergedError(f"non-finite parameters at epoch {step}")

    trained = Surrogate(tuple(Layer(w, b, a) for w, b, a in zip(Ws, bs, acts)))
    return trained, empirical_risk(trained, dataset, loss_kind)


def save_weights(model: Surrogate) -> str:
    """Serialize to the version-1 JSON weight format.

    Floats go through repr (shortest round-trip decimal), so a save/load cycle
    reproduces the weights bit for bit.
    """
    doc = {
        "version": WEIGHTS_VERSION,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "layers": [
            {
                "activation": layer.activation,
                "weights": [[float(v) for v in row] for row in layer.weights],
                "bias": [float(v) for v in layer.bias],
            }
            for layer in model.layers
        ],
    }
    return json.dumps(doc)


def load_weights(payload: str | bytes) -> Surrogate:
    """Parse the JSON weight format, validating version and shape consistency."""
    if isinstance(payload, bytes):
        payload = payload.decode("utf-8")
    try:
        doc = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WeightFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise WeightFormatError("top-level JSON value must be an object")
    version = doc.get("version")
    if version != WEIGHTS_VERSION:
        raise UnsupportedVersionError(f"unsupported weight format version: {version!r}")
    try:
        raw_layers = doc["layers"]
        input_dim = int(doc["input_dim"])
        num_classes = int(doc["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFormatError(f"missing or malformed field: {exc}") from exc
    if not isinstance(raw_layers, list) or not raw_layers:
        raise WeightFormatError("layers must be a non-empty list")
    layers = []
    try:
        for entry in raw_layers:
            layers.append(
                Layer(
                    np.asarray(entry["weights"], dtype=np.float64),
                    np.asarray(entry["bias"], dtype=np.float64),
                    entry["activation"],
                )
            )
        model = Surrogate(tuple(layers))
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFormatError(f"malformed layer: {exc}") from exc
    if model.input_dim != input_dim:
        raise WeightFormatError(
            f"declared input_dim {input_dim} but first layer takes {model.input_dim}"
        )
    if model.num_classes != num_classes:
        raise WeightFormatError(
            f"declared num_classes {num_classes} but last layer emits {model.num_classes}"
        )
    return model
