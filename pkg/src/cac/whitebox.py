"""Momentum iterative FGSM against the differentiable surrogate.

Each alternation runs a short momentum-FGSM loop inside the current search
box: accumulate the l1-normalized input gradient into a momentum buffer, step
by alpha times its sign, project back into the box, and stop as soon as the
surrogate's label flips away from the reference. Hard mode ascends the
cross-entropy of the reference label; soft mode ascends the mean squared
distance to the reference probability vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .geometry import Box, project
from .net import Surrogate

__all__ = ["LOSSES", "MifgsmConfig", "MifgsmResult", "mifgsm"]

LOSSES = ("cross_entropy", "mse")

# Below this l1 mass the gradient is treated as vanished and the momentum
# buffer keeps its previous direction.
GRAD_FLOOR = 1e-12


@dataclass
class MifgsmConfig:
    steps: int = 3
    momentum: float = 1.0
    alpha: float = 0.0
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.momentum < 0:
            raise ValueError("momentum must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")


@dataclass
class MifgsmResult:
    found: bool
    candidate: np.ndarray | None
    surrogate_label: int | None
    steps_used: int
    stalled_steps: int


def _loss_gradient_logits(cfg: MifgsmConfig, probs: np.ndarray, reference) -> np.ndarray:
    """d(loss)/d(logits) for the ascent objective."""
    if cfg.loss == "cross_entropy":
        y = int(reference)
        e = np.zeros_like(probs)
        e[y] = 1.0
        return probs - e
    q = np.asarray(reference, dtype=np.float64)
    K = probs.size
    dprobs = 2.0 * (probs - q) / K
    return (np.diag(probs) - np.outer(probs, probs)) @ dprobs


def mifgsm(
    model: Surrogate, start, reference, space: Box, config: MifgsmConfig
) -> MifgsmResult:
    """Search the box for a point the surrogate labels differently.

    reference is the label to escape: an int in cross_entropy mode, a
    probability vector (whose argmax is the label) in mse mode. The start
    must lie inside the space. Success is checked after every step; a
    degenerate (zero-volume) space returns immediately with found=False.
    """
    if config.loss == "cross_entropy":
        ref_label = int(reference)
        if not 0 <= ref_label < model.num_classes:
            raise ValueError(f"reference label {ref_label} out of range")
    else:
        ref_vec = np.asarray(reference, dtype=np.float64)
        if ref_vec.shape != (model.num_classes,):
            raise ValueError("reference probabilities do not match the class count")
        ref_label = int(np.argmax(ref_vec))

    x = np.asarray(start, dtype=np.float64)
    if not space.contains(x):
        raise ValueError("start point lies outside the search space")
    if space.is_degenerate():
        return MifgsmResult(False, None, None, 0, 0)
    if not np.isfinite(config.alpha) or config.alpha <= 0:
        raise ValueError(f"alpha must be > 0 for a non-degenerate space, got {config.alpha}")

    g = np.zeros_like(x)
    stalled = 0
    for step in range(1, config.steps + 1):
        cache = net.forward_cache(model, x)
        dlogits = _loss_gradient_logits(config, cache.probs, reference)
        grad = net.input_gradient(model, cache, dlogits)
        l1 = float(np.sum(np.abs(grad)))
        if l1 >= GRAD_FLOOR:
            g = config.momentum * g + grad / l1
        # else: vanished gradient, momentum buffer carries the old direction.
        direction = np.sign(g)
        if not np.any(direction):
            # No direction at all: the iterate cannot move this step.
            stalled += 1
        x = project(x + config.alpha * direction, space)
        label = net.predict_label(model, x)
        if label != ref_label:
            return MifgsmResult(True, x, label, step, stalled)
    return MifgsmResult(False, None, None, config.steps, stalled)
