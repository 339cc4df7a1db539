"""Experiment harness: synthetic tasks, a random baseline, metrics, reports.

Two task generators stand in for image datasets at desk scale: Gaussian blob
mixtures labeled by the nearest class centroid, and a frozen randomly
initialized network used as the black box. A uniform random-search baseline
gives a floor to compare query counts against. `run_experiment` drives any
mix of methods over a set of target points with independent query ledgers
per point and writes traces, certificates, a metrics table, and a summary.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .engine import (
    AttackConfig,
    AttackResult,
    AttackTrace,
    attack_with_restarts,
)
from .guarantee import build_certificate
from .net import Surrogate, forward, forward_batch
from .oracle import InProcessOracle, OracleSession

__all__ = [
    "TASK_KINDS",
    "METHODS",
    "CSV_HEADER",
    "SyntheticTask",
    "gen_synthetic_task",
    "load_points_csv",
    "random_baseline",
    "MetricsRow",
    "compute_metrics",
    "ExperimentSpec",
    "ExperimentReport",
    "run_experiment",
]

TASK_KINDS = ("gaussian_blobs", "teacher_network")
METHODS = ("cac", "random_baseline")
CSV_HEADER = "method,asr,aqn,avg_l2,std_l2,avg_linf,std_linf"


@dataclass
class SyntheticTask:
    """A generated classification task.

    holdout feeds the attack's initial distillation pool; eval_points are
    target candidates with eval_labels holding the oracle's own label for
    each one. fresh_backend() returns a new oracle wrapper around the same
    underlying function, so per-point runs get independent call counters.
    """

    kind: str
    d: int
    K: int
    seed: int
    holdout: np.ndarray
    eval_points: np.ndarray
    eval_labels: np.ndarray
    _factory: object
    # What the oracle is made of: blob tasks carry their centroids, teacher
    # tasks the frozen network, so tests can cross-check labels directly.
    centroids: np.ndarray | None = None
    model: Surrogate | None = None

    def fresh_backend(self) -> InProcessOracle:
        return self._factory()

    @property
    def backend(self) -> InProcessOracle:
        # A shared instance for one-off inspection; experiments should call
        # fresh_backend() per run instead.
        if not hasattr(self, "_shared"):
            self._shared = self._factory()
        return self._shared


def _blob_centroids(d: int, K: int, gap: float) -> np.ndarray:
    # Equally spaced along the main diagonal, centered at 0.5 in every
    # coordinate, adjacent centers gap apart per coordinate.
    offsets = gap * (np.arange(K) - (K - 1) / 2.0)
    cents = 0.5 + np.tile(offsets[:, None], (1, d))
    if np.any(cents < 0.0) or np.any(cents > 1.0):
        raise ValueError(f"centroids leave [0, 1]^d for K={K}, gap={gap}")
    return cents


def gen_synthetic_task(
    kind: str,
    d: int,
    K: int,
    size: int,
    seed: int,
    *,
    centroids=None,
    gap: float = 0.08,
    noise: float = 0.02,
    pool_sigma: float = 0.15,
    beta: float = 40.0,
    n_eval: int = 100,
    hidden: tuple[int, ...] = (16, 16),
) -> SyntheticTask:
    """Build a deterministic synthetic task.

    gaussian_blobs: class k has a centroid c_k; the oracle returns
    softmax(-beta * ||x - c_k||^2), whose argmax is the nearest centroid.
    The holdout pool is a blob mixture (centroid + N(0, pool_sigma), clipped
    to the cube) and eval points cycle through the classes, drawn uniformly
    within +/- noise of their centroid and kept only if the nearest centroid
    is the class they were drawn from.

    teacher_network: a frozen randomly initialized tanh network is the
    oracle; holdout and eval points are uniform on [0, 1]^d and eval labels
    are the network's own argmax.
    """
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {kind!r}; expected one of {TASK_KINDS}")
    if d < 1 or K < 2:
        raise ValueError("need d >= 1 and K >= 2")
    if size < 1 or n_eval < 1:
        raise ValueError("need size >= 1 and n_eval >= 1")
    ss = np.random.SeedSequence(seed)
    hold_rng, eval_rng, model_seed = ss.spawn(3)

    if kind == "gaussian_blobs":
        if centroids is None:
            cents = _blob_centroids(d, K, gap)
        else:
            cents = np.asarray(centroids, dtype=np.float64)
            if cents.shape != (K, d):
                raise ValueError(f"centroids shape {cents.shape}, expected ({K}, {d})")
            if np.any(cents < 0.0) or np.any(cents > 1.0):
                raise ValueError("centroids must lie in [0, 1]^d")
        b = float(beta)

        def fn(v, _c=cents, _b=b):
            d2 = np.sum((_c - v) ** 2, axis=1)
            e = np.exp(_b * (d2.min() - d2))
            return e / e.sum()

        def factory(_fn=fn, _d=d, _K=K):
            return InProcessOracle(_fn, _d, _K, returns="probs")

        rng = np.random.default_rng(hold_rng)
        idx = rng.integers(0, K, size=size)
        holdout = np.clip(
            cents[idx] + rng.normal(0.0, pool_sigma, size=(size, d)), 0.0, 1.0
        )

        rng = np.random.default_rng(eval_rng)
        pts = np.empty((n_eval, d))
        labels = np.empty(n_eval, dtype=np.int64)
        for i in range(n_eval):
            want = i % K
            for _ in range(100):
                z = np.clip(cents[want] + rng.uniform(-noise, noise, size=d), 0.0, 1.0)
                if int(np.argmin(np.sum((cents - z) ** 2, axis=1))) == want:
                    break
            else:
                raise ValueError(
                    f"could not draw a class-{want} eval point; noise {noise} "
                    f"too large for gap {gap}"
                )
            pts[i] = z
            labels[i] = want
        return SyntheticTask(kind, d, K, seed, holdout, pts, labels, factory,
                             centroids=cents)

    model = Surrogate.random(
        d, K, hidden=hidden, seed=int(np.random.default_rng(model_seed).integers(2**31))
    )

    def fn(v, _m=model):
        return forward(_m, v)

    def factory(_fn=fn, _d=d, _K=K):
        return InProcessOracle(_fn, _d, _K, returns="probs")

    holdout = np.random.default_rng(hold_rng).uniform(0.0, 1.0, size=(size, d))
    pts = np.random.default_rng(eval_rng).uniform(0.0, 1.0, size=(n_eval, d))
    labels = np.argmax(forward_batch(model, pts), axis=1).astype(np.int64)
    return SyntheticTask(kind, d, K, seed, holdout, pts, labels, factory,
                         model=model)


def load_points_csv(path) -> np.ndarray:
    """Read points from a CSV file: one row per point, d numeric columns."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: rows have inconsistent column counts")
    X = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite values")
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValueError(f"{path}: points must lie in [0, 1]^d")
    return X


def random_baseline(
    oracle, x, delta: float, budget: int, seed: int, mode: str = "hard"
) -> AttackResult:
    """Uniform random search over the l-inf ball, first label flip wins.

    One query reads the label at x; each draw is uniform per coordinate on
    the intersection of the ball with the cube and costs one query. The
    budget is a hard cap: the run stops the moment the ledger is spent.
    Returns the same result shape as the main attack, with an empty
    alternation record.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"x must be a vector, got shape {v.shape}")
    if np.any(v < 0.0) or np.any(v > 1.0) or not np.all(np.isfinite(v)):
        raise ValueError("x must lie in [0, 1]^d")
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    session = OracleSession(oracle, mode, budget)
    y0 = session.query(v, "distill_init").hard
    lo = np.maximum(v - delta, 0.0)
    hi = np.minimum(v + delta, 1.0)
    rng = np.random.default_rng(seed)

    status = "budget_exhausted"
    adv = l2 = linf = terminated = None
    draws = 0
    while session.ledger.remaining() > 0:
        z = rng.uniform(lo, hi)
        draws += 1
        if session.query(z, "candidate_check").hard != y0:
            status = "success"
            adv = z
            l2 = float(np.linalg.norm(z - v))
            linf = float(np.max(np.abs(z - v)))
            terminated = draws
            break

    trace = AttackTrace(
        target=v,
        target_label=y0,
        delta=float(delta),
        t=1.0,
        mode=mode,
        seed=int(seed),
        restart_index=0,
        n_chains=0,
        config={
            "method": "random_baseline",
            "delta": float(delta),
            "budget": int(budget),
            "seed": int(seed),
            "mode": mode,
            "budget_rule": "hard_cap",
        },
        alternations=[],
        status=status,
        terminated_at=terminated,
        winning_chain=None,
        adversarial=adv,
        l2=l2,
        linf=linf,
        queries_start=0,
        queries_end=session.ledger.spent,
    )
    cert = build_certificate(trace, gamma=0.0, gamma_sampled=None)
    return AttackResult(
        status=status,
        adversarial=adv,
        l2=l2,
        linf=linf,
        queries_total=session.ledger.spent,
        terminated_at=terminated,
        trace=trace,
        certificate=cert,
        session=session,
    )


@dataclass
class MetricsRow:
    """One method's aggregate numbers. Distance fields are None when the
    method never succeeded."""

    method: str
    asr: float
    aqn: float
    avg_l2: float | None
    std_l2: float | None
    avg_linf: float | None
    std_linf: float | None

    def __post_init__(self):
        if not (0.0 <= self.asr <= 1.0):
            raise ValueError(f"asr must lie in [0, 1], got {self.asr}")
        for name in ("std_l2", "std_linf"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be >= 0, got {val}")

    def to_csv_line(self) -> str:
        cells = [self.method]
        for val in (self.asr, self.aqn, self.avg_l2, self.std_l2,
                    self.avg_linf, self.std_linf):
            cells.append("" if val is None else repr(float(val)))
        return ",".join(cells)


def compute_metrics(results: list[AttackResult], method: str = "") -> MetricsRow:
    """Aggregate one method's runs.

    The success rate divides by all runs, and the query average also runs
    over all of them (a failed run contributes its full spend). Distance
    statistics cover successful runs only and use the population standard
    deviation.
    """
    if not results:
        raise ValueError("no results to aggregate")
    n = len(results)
    wins = [r for r in results if r.success]
    asr = len(wins) / n
    aqn = float(np.mean([r.queries_total for r in results]))
    if wins:
        l2s = np.asarray([r.l2 for r in wins], dtype=np.float64)
        linfs = np.asarray([r.linf for r in wins], dtype=np.float64)
        dist = (float(l2s.mean()), float(l2s.std()),
                float(linfs.mean()), float(linfs.std()))
    else:
        dist = (None, None, None, None)
    return MetricsRow(method, asr, aqn, *dist)


@dataclass
class ExperimentSpec:
    """What to run: a task (or explicit arrays), methods, knobs, output dir.

    Explicit points/labels/holdout override the task's own; labels are the
    expected oracle labels used for the eligibility check (points the oracle
    labels differently are skipped and logged). When labels are absent every
    point is eligible and its oracle label is taken as the starting class.
    """

    task: SyntheticTask | None = None
    points: np.ndarray | None = None
    labels: np.ndarray | None = None
    holdout: np.ndarray | None = None
    backend_factory: object = None
    n_points: int | None = None
    attack: AttackConfig = field(default_factory=AttackConfig)
    methods: tuple[str, ...] = ("cac", "random_baseline")
    out_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ValueError("need at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
        if self.task is None and self.backend_factory is None:
            raise ValueError("need a task or a backend_factory")
        if self.task is None and self.points is None:
            raise ValueError("need a task or explicit points")
        if "cac" in self.methods and self.task is None and self.holdout is None:
            raise ValueError("the cac method needs a holdout pool")
        if self.n_points is not None and self.n_points < 1:
            raise ValueError("n_points must be >= 1")


def _resolve(spec: ExperimentSpec):
    points = spec.points if spec.points is not None else spec.task.eval_points
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-d, got shape {points.shape}")
    labels = spec.labels
    if labels is None and spec.points is None and spec.task is not None:
        labels = spec.task.eval_labels
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (points.shape[0],):
            raise ValueError("labels length does not match points")
    if spec.n_points is not None:
        points = points[: spec.n_points]
        labels = None if labels is None else labels[: spec.n_points]
    holdout = spec.holdout if spec.holdout is not None else (
        spec.task.holdout if spec.task is not None else None
    )
    factory = spec.backend_factory
    if factory is None:
        factory = spec.task.fresh_backend
    return points, labels, holdout, factory


def _run_seed(root: int, method_index: int, point_index: int) -> int:
    return int(
        np.random.SeedSequence((root, method_index, point_index)).generate_state(1)[0]
    )


@dataclass
class ExperimentReport:
    """Everything a finished experiment produced, in memory and on disk."""

    summary: dict
    rows: list[MetricsRow]
    results: dict[str, list[AttackResult]]
    out_dir: Path


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Run every method over every eligible target point and write reports.

    Each (method, point) pair gets a fresh oracle wrapper and its own query
    ledger, seeded from (spec.seed, method index, point index) so reruns are
    bit-identical. Outputs under spec.out_dir: traces/<method>_<idx>.json,
    certificates/cac_<idx>.json, metrics.csv, summary.json, run.log.
    """
    points, labels, holdout, factory = _resolve(spec)
    out = Path(spec.out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "certificates").mkdir(parents=True, exist_ok=True)

    log_lines = [f"points: {points.shape[0]}, methods: {','.join(spec.methods)}"]
    probe = factory()
    eligible = []
    skipped = []
    for i, x in enumerate(points):
        y = probe.answer(x, "hard").hard
        if labels is not None and y != int(labels[i]):
            skipped.append({"index": i, "oracle_label": y, "expected_label": int(labels[i])})
            log_lines.append(
                f"skip point {i}: oracle label {y}, expected {int(labels[i])}"
            )
            continue
        eligible.append((i, x, y))
    log_lines.append(f"eligible: {len(eligible)} of {points.shape[0]}")
    if not eligible:
        (out / "run.log").write_text("\n".join(log_lines) + "\n")
        raise ValueError("no eligible target points (all skipped)")

    rows = []
    method_stats = {}
    results_by_method: dict[str, list[AttackResult]] = {}
    cac_results: list[AttackResult] = []
    for mi, method in enumerate(spec.methods):
        results = []
        for i, x, _y in eligible:
            run_seed = _run_seed(spec.seed, mi, i)
            backend = factory()
            if method == "cac":
                cfg = replace(spec.attack, seed=run_seed)
                res = attack_with_restarts(backend, x, holdout, cfg)
                (out / "certificates" / f"cac_{i:03d}.json").write_text(
                    res.certificate.to_json() + "\n"
                )
            else:
                res = random_baseline(
                    backend, x, spec.attack.delta, spec.attack.budget,
                    run_seed, mode=spec.attack.mode,
                )
            (out / "traces" / f"{method}_{i:03d}.json").write_text(
                res.trace.to_json() + "\n"
            )
            results.append(res)
            log_lines.append(
                f"{method} point {i}: {res.status}, queries {res.queries_total}"
            )
        row = compute_metrics(results, method)
        rows.append(row)
        results_by_method[method] = results
        method_stats[method] = {
            "successes": sum(1 for r in results if r.success),
            "runs": len(results),
        }
        if method == "cac":
            cac_results = results

    csv_text = "\n".join([CSV_HEADER] + [r.to_csv_line() for r in rows]) + "\n"
    (out / "metrics.csv").write_text(csv_text)

    clean = ratios = None
    if cac_results:
        flags = [
            r.certificate.assumptions_held
            and r.certificate.chain_ok
            and not r.certificate.bound_violated
            for r in cac_results
        ]
        clean = sum(flags) / len(flags)
        ratios = [
            r.certificate.terminated_at / r.certificate.bound_n
            for r in cac_results
            if r.certificate.bound_n and r.certificate.terminated_at is not None
        ]
    summary = {
        "methods": list(spec.methods),
        "seed": spec.seed,
        "points_total": int(points.shape[0]),
        "points_eligible": len(eligible),
        "skipped": skipped,
        "method_stats": method_stats,
        "metrics": {
            r.method: {
                "asr": r.asr, "aqn": r.aqn,
                "avg_l2": r.avg_l2, "std_l2": r.std_l2,
                "avg_linf": r.avg_linf, "std_linf": r.std_linf,
            }
            for r in rows
        },
        "certificates": {
            "fraction_assumption_clean": clean,
            "max_termination_ratio": max(ratios) if ratios else None,
        },
        "baseline_budget_rule": (
            "hard_cap: the random baseline never exceeds the query budget, "
            "it stops exactly when the ledger is spent"
        ),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    (out / "run.log").write_text("\n".join(log_lines) + "\n")
    return ExperimentReport(summary, rows, results_by_method, out)
