"""Models the service can put behind the wire protocol.

A ServedModel is just a predict function plus its dimensions. Two sources
exist: the version-1 JSON weight format (dense tanh/identity layers with a
softmax head, re-implemented here on plain numpy so the service carries no
dependency on the attack library), and a built-in two-cluster demo model
for serving something immediately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SUPPORTED_WEIGHTS_VERSION = 1
ACTIVATIONS = ("tanh", "identity")
PROB_SUM_TOL = 1e-6

BUILTIN_MODELS = ("blobs-2d",)

# The demo model: softmax over negative squared distances to two cluster
# centers, sharp enough that labels flip right between the clusters.
BLOBS_CENTROIDS = np.array([[0.4, 0.4], [0.6, 0.6]])
BLOBS_BETA = 40.0


class ModelError(Exception):
    """Unloadable weights or a predict function breaking its contract."""


@dataclass(frozen=True)
class ServedModel:
    """A read-only classifier: predict maps a (d,) vector to (K,) probs."""

    predict: object
    input_dim: int
    num_classes: int
    name: str

    def probabilities(self, x) -> np.ndarray:
        v = np.asarray(x, dtype=np.float64)
        p = np.asarray(self.predict(v), dtype=np.float64)
        if p.shape != (self.num_classes,):
            raise ModelError(
                f"model {self.name} returned shape {p.shape}, "
                f"expected ({self.num_classes},)"
            )
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ModelError(f"model {self.name} returned an invalid probability vector")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise ModelError(
                f"model {self.name} probabilities sum to {float(p.sum())!r}, not 1"
            )
        return p

    def label(self, probs: np.ndarray) -> int:
        # Ties break to the lowest class index.
        return int(np.argmax(probs))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def _forward(layers, x: np.ndarray) -> np.ndarray:
    a = x
    for weights, bias, activation in layers:
        z = weights @ a + bias
        a = np.tanh(z) if activation == "tanh" else z
    return _softmax(a)


def model_from_weights(payload: str | bytes, name: str = "weights") -> ServedModel:
    """Build a ServedModel from the version-1 JSON weight format."""
    if isinstance(payload, bytes):
        try:
            payload = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelError(f"weights are not UTF-8 text: {exc}") from exc
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ModelError(f"weights are not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("weight document must be a JSON object")
    version = doc.get("version")
    if version != SUPPORTED_WEIGHTS_VERSION:
        raise ModelError(f"unsupported weight format version: {version!r}")

    try:
        input_dim = int(doc["input_dim"])
        num_classes = int(doc["num_classes"])
        raw_layers = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"missing or malformed field: {exc}") from exc
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelError("layers must be a non-empty list")

    layers = []
    for i, entry in enumerate(raw_layers):
        try:
            weights = np.asarray(entry["weights"], dtype=np.float64)
            bias = np.asarray(entry["bias"], dtype=np.float64)
            activation = entry["activation"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"layer {i} is malformed: {exc}") from exc
        if weights.ndim != 2 or weights.size == 0:
            raise ModelError(f"layer {i} weights must be a 2-d matrix")
        if bias.shape != (weights.shape[0],):
            raise ModelError(
                f"layer {i} bias shape {bias.shape} does not match "
                f"weights {weights.shape}"
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ModelError(f"layer {i} contains non-finite values")
        if activation not in ACTIVATIONS:
            raise ModelError(f"layer {i} has unknown activation {activation!r}")
        layers.append((weights, bias, activation))

    for (w_a, _, _), (w_b, _, _) in zip(layers, layers[1:]):
        if w_b.shape[1] != w_a.shape[0]:
            raise ModelError(
                f"layer shapes do not chain: {w_a.shape} feeds {w_b.shape}"
            )
    if layers[0][0].shape[1] != input_dim:
        raise ModelError(
            f"declared input_dim {input_dim} but first layer takes "
            f"{layers[0][0].shape[1]}"
        )
    if layers[-1][0].shape[0] != num_classes:
        raise ModelError(
            f"declared num_classes {num_classes} but last layer emits "
            f"{layers[-1][0].shape[0]}"
        )

    frozen = tuple(layers)
    return ServedModel(
        predict=lambda x: _forward(frozen, x),
        input_dim=input_dim,
        num_classes=num_classes,
        name=name,
    )


def _blobs_predict(x: np.ndarray) -> np.ndarray:
    d2 = np.sum((BLOBS_CENTROIDS - x) ** 2, axis=1)
    e = np.exp(BLOBS_BETA * (d2.min() - d2))
    return e / e.sum()


def builtin_model(name: str) -> ServedModel:
    if name != "blobs-2d":
        raise ModelError(f"unknown builtin model {name!r}; available: {BUILTIN_MODELS}")
    return ServedModel(
        predict=_blobs_predict,
        input_dim=2,
        num_classes=2,
        name="blobs-2d",
    )


def load_model(source: str) -> ServedModel:
    """Resolve a builtin name or a weight-file path to a ServedModel."""
    if source in BUILTIN_MODELS:
        return builtin_model(source)
    path = Path(source)
    if not path.exists():
        raise ModelError(
            f"{source!r} is neither a builtin model ({', '.join(BUILTIN_MODELS)}) "
            "nor an existing weight file"
        )
    return model_from_weights(path.read_bytes(), name=path.name)
