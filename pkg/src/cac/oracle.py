"""Query accounting and target-model access.

The target model is only ever reached through an `OracleSession`, which binds
a backend (in-process function or remote HTTP service) to a query mode and a
hard budget. Every answered query is charged to the ledger atomically; a query
that would exceed the budget raises before the backend is contacted, and a
transport failure is never charged.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import BudgetExhaustedError, TransportError

__all__ = [
    "ORACLE_MODES",
    "QUERY_PURPOSES",
    "OracleAnswer",
    "QueryLedger",
    "InProcessOracle",
    "RemoteOracle",
    "OracleSession",
]

ORACLE_MODES = ("hard", "soft")

# Why each query was issued; the ledger records one tag per charge.
QUERY_PURPOSES = ("distill_init", "candidate_check", "restart_check")


@dataclass(frozen=True)
class OracleAnswer:
    """One oracle response. hard is always present; soft only in soft mode."""

    hard: int
    soft: np.ndarray | None = None

    def __post_init__(self):
        if self.hard < 0:
            raise ValueError(f"label must be >= 0, got {self.hard}")
        if self.soft is not None:
            p = np.asarray(self.soft, dtype=np.float64)
            if p.ndim != 1 or p.size == 0:
                raise ValueError("soft answer must be a 1-d probability vector")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
                raise ValueError("soft answer is not a probability vector")
            if int(np.argmax(p)) != self.hard:
                raise ValueError(
                    f"hard label {self.hard} is not the argmax of the soft answer"
                )
            object.__setattr__(self, "soft", p)


class QueryLedger:
    """Thread-safe budget counter with a per-query purpose log."""

    def __init__(self, budget: int):
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        self.budget = int(budget)
        self.spent = 0
        self.log: list[tuple[int, str]] = []
        self._lock = threading.Lock()

    def remaining(self) -> int:
        with self._lock:
            return self.budget - self.spent

    def spend(self, purpose: str, thunk):
        """Atomically charge one query for thunk().

        The budget check happens first; the charge is recorded only after the
        thunk returns, so a failing backend call costs nothing.
        """
        if purpose not in QUERY_PURPOSES:
            raise ValueError(f"unknown purpose {purpose!r}; expected one of {QUERY_PURPOSES}")
        with self._lock:
            if self.spent >= self.budget:
                raise BudgetExhaustedError(
                    f"budget of {self.budget} queries exhausted (purpose {purpose})"
                )
            answer = thunk()
            self.log.append((self.spent, purpose))
            self.spent += 1
            return answer

    def counts_by_purpose(self) -> dict[str, int]:
        with self._lock:
            counts = {p: 0 for p in QUERY_PURPOSES}
            for _, purpose in self.log:
                counts[purpose] += 1
            return counts


class InProcessOracle:
    """Wraps a deterministic Python function as the target model.

    fn maps a 1-d float vector to either a probability vector
    (returns="probs") or a bare integer label (returns="label"). The backend
    keeps its own raw call counter, independent of any ledger, which the
    accounting tests compare against.
    """

    def __init__(self, fn, input_dim: int, num_classes: int, returns: str = "probs"):
        if returns not in ("probs", "label"):
            raise ValueError(f"returns must be 'probs' or 'label', got {returns!r}")
        if input_dim < 1 or num_classes < 2:
            raise ValueError("need input_dim >= 1 and num_classes >= 2")
        self.fn = fn
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        self.returns = returns
        self.calls = 0

    def answer(self, x: np.ndarray, mode: str) -> OracleAnswer:
        if mode not in ORACLE_MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "soft" and self.returns == "label":
            raise ValueError("this oracle only returns labels; soft mode unsupported")
        self.calls += 1
        out = self.fn(np.asarray(x, dtype=np.float64))
        if self.returns == "label":
            return OracleAnswer(hard=int(out))
        p = np.asarray(out, dtype=np.float64)
        if p.shape != (self.num_classes,):
            raise ValueError(
                f"oracle function returned shape {p.shape}, expected ({self.num_classes},)"
            )
        hard = int(np.argmax(p))
        return OracleAnswer(hard=hard, soft=p if mode == "soft" else None)


class RemoteOracle:
    """HTTP client for the oracle wire protocol.

    GET  {base}/v1/info          -> {"input_dim": d, "num_classes": K}
    POST {base}/v1/query         body {"input": [...], "mode": "hard"|"soft"}
                                 -> {"label": int} or {"label": int, "probs": [...]}

    Transient transport failures (connection errors, timeouts, 5xx) are
    retried up to `retries` times with a short pause; a non-5xx HTTP error is
    a protocol problem and fails immediately.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, retries: int = 3,
                 retry_pause: float = 0.05):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = int(retries)
        self.retry_pause = retry_pause
        self._session = requests.Session()
        info = self._request("GET", "/v1/info")
        try:
            self.input_dim = int(info["input_dim"])
            self.num_classes = int(info["num_classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed /v1/info response: {info!r}") from exc

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.base_url + path
        last = None
        for attempt in range(self.retries):
            try:
                resp = self._session.request(method, url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                time.sleep(self.retry_pause)
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                time.sleep(self.retry_pause)
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"{method} {url} returned HTTP {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"{method} {url} returned non-JSON body") from exc
        raise TransportError(f"{method} {url} failed after {self.retries} attempts ({last})")

    def answer(self, x: np.ndarray, mode: str) -> OracleAnswer:
        if mode not in ORACLE_MODES:
            raise ValueError(f"unknown mode {mode!r}")
        body = {"input": [float(v) for v in np.asarray(x, dtype=np.float64)], "mode": mode}
        doc = self._request("POST", "/v1/query", body)
        try:
            hard = int(doc["label"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed /v1/query response: {doc!r}") from exc
        if mode == "soft":
            probs = doc.get("probs")
            if probs is None:
                raise TransportError("soft query answered without probs")
            return OracleAnswer(hard=hard, soft=np.asarray(probs, dtype=np.float64))
        return OracleAnswer(hard=hard)


@dataclass
class OracleSession:
    """A backend bound to one mode and one budget; all queries go through here."""

    backend: object
    mode: str
    ledger: QueryLedger

    def __init__(self, backend, mode: str, budget: int):
        if mode not in ORACLE_MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {ORACLE_MODES}")
        self.backend = backend
        self.mode = mode
        self.ledger = QueryLedger(budget)

    @property
    def input_dim(self) -> int:
        return self.backend.input_dim

    @property
    def num_classes(self) -> int:
        return self.backend.num_classes

    def query(self, x, purpose: str = "candidate_check") -> OracleAnswer:
        """Charge one query and return the oracle's answer.

        The input must lie in [0, 1]^d and match the oracle's input dimension.
        """
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (self.input_dim,):
            raise ValueError(f"input shape {v.shape} does not match oracle dim {self.input_dim}")
        if np.any(v < 0.0) or np.any(v > 1.0) or not np.all(np.isfinite(v)):
            raise ValueError("query point must lie in [0, 1]^d")
        return self.ledger.spend(purpose, lambda: self.backend.answer(v, self.mode))
