"""Distillation set management and surrogate fitting.

The attack maintains a growing labeled set of oracle answers: the target
point itself, its nearest holdout neighbors, and every rejected candidate.
Each alternation retrains the surrogate on the full set, then reads off a
margin report whose smallest half-gap feeds the iteration-bound calculator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net
from .errors import BudgetExhaustedError
from .geometry import l2_norm
from .net import Surrogate, TrainConfig
from .oracle import OracleAnswer, OracleSession

__all__ = [
    "PROVENANCES",
    "DistillEntry",
    "DistillationSet",
    "build_initial_set",
    "fit_surrogate",
    "MarginReport",
    "margin_report",
    "gamma_upper_bound",
]

PROVENANCES = ("target_point", "holdout", "rejected_adversarial")


@dataclass
class DistillEntry:
    x: np.ndarray
    answer: OracleAnswer
    provenance: str


class DistillationSet:
    """Ordered set of (input, oracle answer) pairs, unique by input.

    The target point is entry 0 and can never be removed. Adding a duplicate
    input replaces the stored answer and provenance instead of growing the
    set, so the surrogate never trains on conflicting copies.
    """

    def __init__(self, target_x, target_answer: OracleAnswer, num_classes: int):
        self.num_classes = int(num_classes)
        self.entries: list[DistillEntry] = []
        self._by_key: dict[bytes, int] = {}
        self._append(np.asarray(target_x, dtype=np.float64), target_answer, "target_point")

    @staticmethod
    def _key(x: np.ndarray) -> bytes:
        return x.tobytes()

    def _append(self, x: np.ndarray, answer: OracleAnswer, provenance: str):
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        self._by_key[self._key(x)] = len(self.entries)
        self.entries.append(DistillEntry(x.copy(), answer, provenance))

    def add(self, x, answer: OracleAnswer, provenance: str) -> bool:
        """Insert or replace; returns True when the set grew."""
        v = np.asarray(x, dtype=np.float64)
        if v.shape != self.target_x.shape:
            raise ValueError("input dimension does not match the set")
        idx = self._by_key.get(self._key(v))
        if idx is None:
            self._append(v, answer, provenance)
            return True
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        if idx == 0:
            # The target entry keeps its identity; only the answer refreshes.
            self.entries[0].answer = answer
            return False
        self.entries[idx].answer = answer
        self.entries[idx].provenance = provenance
        return False

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def target_x(self) -> np.ndarray:
        return self.entries[0].x

    @property
    def target_label(self) -> int:
        return self.entries[0].answer.hard

    def inputs_matrix(self) -> np.ndarray:
        return np.stack([e.x for e in self.entries])

    def hard_dataset(self) -> list:
        return [(e.x, e.answer.hard) for e in self.entries]

    def soft_dataset(self) -> list:
        missing = [i for i, e in enumerate(self.entries) if e.answer.soft is None]
        if missing:
            raise ValueError(
                f"{len(missing)} entries lack soft answers; the oracle session must run in soft mode"
            )
        return [(e.x, e.answer.soft) for e in self.entries]

    def provenance_counts(self) -> dict[str, int]:
        counts = {p: 0 for p in PROVENANCES}
        for e in self.entries:
            counts[e.provenance] += 1
        return counts


def build_initial_set(
    session: OracleSession, holdout: np.ndarray, x, n_init: int, m: int, seed: int = 0
) -> DistillationSet:
    """Query the oracle on x plus its m-1 nearest sampled holdout points.

    n_init holdout rows are sampled without replacement, ranked by l2 distance
    to x (stable sort, so ties keep sample order), and the nearest m-1 join
    the target point. Costs exactly m queries, tagged distill_init; raises
    BudgetExhaustedError up front when the ledger cannot afford them.
    """
    H = np.asarray(holdout, dtype=np.float64)
    v = np.asarray(x, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != v.size:
        raise ValueError(f"holdout shape {H.shape} does not match point dim {v.size}")
    if m < 1:
        raise ValueError("m must be >= 1")
    if n_init < m - 1:
        raise ValueError(f"n_init={n_init} cannot cover m-1={m - 1} neighbors")
    if H.shape[0] < n_init:
        raise ValueError(f"holdout has {H.shape[0]} rows, fewer than n_init={n_init}")
    if session.ledger.remaining() < m:
        raise BudgetExhaustedError(
            f"initial distillation needs {m} queries but only "
            f"{session.ledger.remaining()} remain"
        )

    rng = np.random.default_rng(seed)
    sampled = H[rng.choice(H.shape[0], size=n_init, replace=False)]
    dists = np.array([l2_norm(row - v) for row in sampled])
    order = np.argsort(dists, kind="stable")[: m - 1]

    target_answer = session.query(v, purpose="distill_init")
    dset = DistillationSet(v, target_answer, session.num_classes)
    for idx in order:
        point = np.clip(sampled[idx], 0.0, 1.0)
        dset.add(point, session.query(point, purpose="distill_init"), "holdout")
    return dset


def fit_surrogate(
    dset: DistillationSet,
    mode: str,
    config: TrainConfig | None = None,
    hidden: tuple[int, ...] = (64,),
    start_from: Surrogate | None = None,
) -> tuple[Surrogate, float]:
    """Train a fresh surrogate on the set (or continue from start_from).

    Hard mode fits cross-entropy against hard labels; soft mode fits
    cross-entropy against the oracle's probability vectors. The training seed
    drives the fresh random init, so reruns are bit-identical.
    """
    cfg = config or TrainConfig()
    d = dset.target_x.size
    if start_from is None:
        start_from = Surrogate.random(d, dset.num_classes, hidden=hidden, seed=cfg.seed)
    if mode == "hard":
        return net.train(start_from, dset.hard_dataset(), "hard_cross_entropy", cfg)
    if mode == "soft":
        return net.train(start_from, dset.soft_dataset(), "soft_cross_entropy", cfg)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class MarginReport:
    """Per-entry margins of the surrogate on its distillation set.

    A margin is half the gap between the top probability and the probability
    of the best other class when the surrogate agrees with the oracle label,
    negative (half the deficit) when it disagrees. epsilon_hat is the smallest
    margin; positive epsilon_hat certifies the surrogate separates every
    stored answer.
    """

    margins: list[float]
    labels: list[int]
    predicted: list[int]
    epsilon_hat: float
    all_labels_match: bool


def margin_report(model: Surrogate, dset: DistillationSet) -> MarginReport:
    P = net.forward_batch(model, dset.inputs_matrix())
    margins: list[float] = []
    labels: list[int] = []
    predicted: list[int] = []
    ok = True
    for row, entry in zip(P, dset.entries):
        y = entry.answer.hard
        pred = int(np.argmax(row))
        p_y = row[y]
        best_other = float(np.max(np.delete(row, y)))
        margins.append(0.5 * (p_y - best_other))
        labels.append(y)
        predicted.append(pred)
        if pred != y:
            ok = False
    return MarginReport(
        margins=margins,
        labels=labels,
        predicted=predicted,
        epsilon_hat=min(margins),
        all_labels_match=ok,
    )


def gamma_upper_bound(model: Surrogate, include_softmax: bool = True) -> float:
    """Input-independent bound on the induced l-inf norm of the jacobian.

    Product over layers of the max absolute row sum of the weight matrix
    (tanh and identity derivatives never exceed one), times 1/2 for the
    softmax head: its jacobian rows are p_i(delta_ij - p_j), whose absolute
    sum is 2 p_i (1 - p_i) <= 1/2. Valid for every input, so it bounds the
    supremum over any search region.
    """
    bound = 0.5 if include_softmax else 1.0
    for layer in model.layers:
        if layer.activation not in ("tanh", "identity"):
            raise ValueError(f"unsupported activation {layer.activation!r}")
        bound *= float(np.max(np.sum(np.abs(layer.weights), axis=1)))
    return bound
