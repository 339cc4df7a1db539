"""Attack orchestration: alternate distillation with contracted white-box search.

One run seeds a distillation set with oracle answers, then loops: retrain the
surrogate, run momentum-FGSM inside each chain's current box, spend one query
per candidate, return on a transfer, otherwise feed the rejected candidate
back into the set and contract that chain's box around it. Every alternation
is recorded in an `AttackTrace`; a finished run carries a re-verified
`Certificate` tying the observed margins to the iteration bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import net
from .distill import (
    DistillationSet,
    build_initial_set,
    fit_surrogate,
    gamma_upper_bound,
    margin_report,
)
from .errors import BudgetExhaustedError
from .geometry import (
    Box,
    ContractionState,
    contract,
    l2_norm,
    linf_ball,
    linf_norm,
    project,
)
from .guarantee import AssumptionVerdict, Certificate, build_certificate, monitor_alternation
from .net import Surrogate, TrainConfig
from .oracle import ORACLE_MODES, OracleSession
from .whitebox import MifgsmConfig, mifgsm

__all__ = [
    "STATUSES",
    "AttackConfig",
    "ChainRecord",
    "AlternationRecord",
    "AttackTrace",
    "AttackResult",
    "cac_attack",
    "cac_attack_batch",
    "attack_with_restarts",
]

STATUSES = ("success", "budget_exhausted", "assumption_violated_then_failed")

GAMMA_SAMPLE_COUNT = 32


@dataclass
class AttackConfig:
    """Knobs for one attack. Defaults follow the reference configuration."""

    delta: float = 0.125
    contraction_t: float = 0.99
    steps: int = 3
    momentum: float = 1.0
    budget: int = 500
    m: int = 300
    n_init: int = 10000
    n_adv: int = 10
    restart_shrink: float = 0.9
    mode: str = "hard"
    seed: int = 0
    epochs: int = 100
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (64,)
    warm_start: bool = False

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if not (0.0 < self.contraction_t < 1.0):
            raise ValueError(f"contraction_t must lie in (0, 1), got {self.contraction_t}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.momentum < 0:
            raise ValueError("momentum must be >= 0")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.n_init < self.m - 1:
            raise ValueError(f"n_init={self.n_init} cannot cover m-1={self.m - 1} neighbors")
        if self.n_adv < 1:
            raise ValueError("n_adv must be >= 1")
        if not (0.0 < self.restart_shrink < 1.0):
            raise ValueError(f"restart_shrink must lie in (0, 1), got {self.restart_shrink}")
        if self.mode not in ORACLE_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")

    def to_doc(self) -> dict:
        return {
            "delta": self.delta,
            "contraction_t": self.contraction_t,
            "steps": self.steps,
            "momentum": self.momentum,
            "budget": self.budget,
            "m": self.m,
            "n_init": self.n_init,
            "n_adv": self.n_adv,
            "restart_shrink": self.restart_shrink,
            "mode": self.mode,
            "seed": self.seed,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "hidden": list(self.hidden),
            "warm_start": self.warm_start,
        }


@dataclass
class ChainRecord:
    """One chain's events inside one alternation."""

    chain: int
    whitebox_found: bool
    steps_used: int | None
    retried: bool
    candidate: list | None
    surrogate_label: int | None
    oracle_label: int | None
    # transfer | rejected | unchecked | no_candidate
    outcome: str
    rho: float | None
    box_lower: list | None
    box_upper: list | None

    def to_doc(self) -> dict:
        return {
            "chain": self.chain,
            "whitebox_found": self.whitebox_found,
            "steps_used": self.steps_used,
            "retried": self.retried,
            "candidate": self.candidate,
            "surrogate_label": self.surrogate_label,
            "oracle_label": self.oracle_label,
            "outcome": self.outcome,
            "rho": self.rho,
            "box_lower": self.box_lower,
            "box_upper": self.box_upper,
        }


@dataclass
class AlternationRecord:
    """One retrain-attack-check round."""

    j: int
    queries_before: int
    queries_after: int
    train_risk: float
    retrained: bool
    epsilon_hat: float
    labels_match: bool
    gamma_bound: float
    gamma_sampled: float
    whitebox_all: bool
    verdict: AssumptionVerdict
    chains: list[ChainRecord] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "j": self.j,
            "queries_before": self.queries_before,
            "queries_after": self.queries_after,
            "train_risk": self.train_risk,
            "retrained": self.retrained,
            "epsilon_hat": self.epsilon_hat,
            "labels_match": self.labels_match,
            "gamma_bound": self.gamma_bound,
            "gamma_sampled": self.gamma_sampled,
            "whitebox_all": self.whitebox_all,
            "assumptions_hold": self.verdict.holds,
            "breaches": list(self.verdict.breaches),
            "chains": [c.to_doc() for c in self.chains],
        }


@dataclass
class AttackTrace:
    """Complete record of one run (one delta; restarts produce one each)."""

    target: np.ndarray
    target_label: int
    delta: float
    t: float
    mode: str
    seed: int
    restart_index: int
    n_chains: int
    config: dict
    alternations: list[AlternationRecord]
    status: str
    terminated_at: int | None
    winning_chain: int | None
    adversarial: np.ndarray | None
    l2: float | None
    linf: float | None
    queries_start: int
    queries_end: int

    def to_doc(self) -> dict:
        return {
            "target": [float(v) for v in self.target],
            "target_label": self.target_label,
            "delta": self.delta,
            "t": self.t,
            "mode": self.mode,
            "seed": self.seed,
            "restart_index": self.restart_index,
            "n_chains": self.n_chains,
            "config": self.config,
            "alternations": [a.to_doc() for a in self.alternations],
            "terminal": {
                "status": self.status,
                "terminated_at": self.terminated_at,
                "winning_chain": self.winning_chain,
                "adversarial": None
                if self.adversarial is None
                else [float(v) for v in self.adversarial],
                "l2": self.l2,
                "linf": self.linf,
                "queries_start": self.queries_start,
                "queries_end": self.queries_end,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True)


@dataclass
class AttackResult:
    """Outcome of an attack call, with its trace and certificate."""

    status: str
    adversarial: np.ndarray | None
    l2: float | None
    linf: float | None
    queries_total: int
    terminated_at: int | None
    trace: AttackTrace
    certificate: Certificate
    session: OracleSession
    restarts_used: int = 0
    model: Surrogate | None = None

    @property
    def success(self) -> bool:
        return self.status == "success"


@dataclass
class _ChainRun:
    idx: int
    start: np.ndarray
    state: ContractionState
    box: Box
    alpha: float


# A chain that finds no white-box candidate is not dropped: the next
# alternation retrains with a fresh seed, which moves the surrogate's
# boundary estimate, so later rounds can recover. But an alternation in
# which NO chain yields a candidate costs zero queries, so a run could
# spin forever on a dead search space: after this many consecutive
# candidate-free alternations (each a fresh surrogate draw that failed to
# place a boundary inside any chain's box) the run is declared failed.
STALL_LIMIT = 20


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1, np.uint64)[0])


def _chain_starts(x: np.ndarray, outer: Box, config: AttackConfig, n_chains: int,
                  restart_index: int, delta_run: float) -> list[np.ndarray]:
    if n_chains == 1:
        return [x.copy()]
    rng = np.random.default_rng(
        np.random.SeedSequence((int(config.seed), int(restart_index), 104729))
    )
    starts = []
    for _ in range(n_chains):
        eps = rng.uniform(-delta_run, delta_run, size=x.size)
        starts.append(project(x + eps, outer))
    return starts


def _sampled_gamma(model: Surrogate, outer: Box, seed: int) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(GAMMA_SAMPLE_COUNT):
        p = rng.uniform(outer.lower, outer.upper)
        J = net.jacobian(model, p)
        worst = max(worst, float(np.max(np.sum(np.abs(J), axis=1))))
    return worst


def _run_alternations(
    session: OracleSession,
    dset: DistillationSet,
    x: np.ndarray,
    y: int,
    config: AttackConfig,
    n_chains: int,
    restart_index: int,
    purpose: str,
    delta_run: float,
) -> tuple[AttackTrace, Certificate, Surrogate | None]:
    outer = linf_ball(x, delta_run)
    starts = _chain_starts(x, outer, config, n_chains, restart_index, delta_run)
    chains = []
    for k, s in enumerate(starts):
        # The search box is exactly the state's validated space so that the
        # projection inside the white-box step can never step outside it.
        # For a chain started at x the intersection is the outer box itself.
        state = ContractionState.initial(config.contraction_t, delta_run, s)
        chains.append(
            _ChainRun(
                idx=k,
                start=s,
                state=state,
                box=state.space(outer),
                alpha=delta_run / config.steps,
            )
        )

    if config.mode == "hard":
        loss_kind = "cross_entropy"
        reference = y
    else:
        loss_kind = "mse"
        reference = dset.entries[0].answer.soft
        if reference is None:
            raise ValueError("soft mode requires a soft answer for the target point")

    records: list[AlternationRecord] = []
    status: str | None = None
    terminated_at = None
    winning_chain = None
    adversarial = None
    queries_start = session.ledger.spent
    model: Surrogate | None = None
    gamma_worst = 0.0
    gamma_sampled_worst = 0.0

    j = 0
    stalled_alternations = 0
    while status is None:
        j += 1
        if session.ledger.remaining() < 1:
            status = "budget_exhausted"
            break

        queries_before = session.ledger.spent

        # Retrain on the accumulated set; one retry with a fresh seed when the
        # surrogate misses a stored label or disagrees with the oracle at x.
        start_from = model if config.warm_start else None
        tc = TrainConfig(
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            seed=_derived_seed(config.seed, restart_index, j, 0),
        )
        model, risk = fit_surrogate(dset, config.mode, tc, hidden=config.hidden,
                                    start_from=start_from)
        report = margin_report(model, dset)
        retrained = False
        if not report.all_labels_match or report.predicted[0] != y:
            tc2 = TrainConfig(
                epochs=config.epochs,
                learning_rate=config.learning_rate,
                seed=_derived_seed(config.seed, restart_index, j, 1),
            )
            model2, risk2 = fit_surrogate(dset, config.mode, tc2, hidden=config.hidden,
                                          start_from=start_from)
            report2 = margin_report(model2, dset)
            if report2.all_labels_match and report2.predicted[0] == y:
                model, risk, report = model2, risk2, report2
            retrained = True
        labels_match = report.all_labels_match and report.predicted[0] == y

        gamma_bound = gamma_upper_bound(model)
        gamma_sampled = _sampled_gamma(
            model, outer, _derived_seed(config.seed, restart_index, j, 2)
        )
        gamma_worst = max(gamma_worst, gamma_bound)
        gamma_sampled_worst = max(gamma_sampled_worst, gamma_sampled)

        # White-box search per chain; a failed chain retries once with
        # doubled steps at half the step size (same total reach, finer grid).
        chain_records: dict[int, ChainRecord] = {}
        candidates: dict[int, np.ndarray] = {}
        for chain in chains:
            start_pt = project(chain.start, chain.box)
            res = mifgsm(
                model,
                start_pt,
                reference,
                chain.box,
                MifgsmConfig(steps=config.steps, momentum=config.momentum,
                             alpha=chain.alpha, loss=loss_kind),
            )
            retried = False
            if not res.found and not chain.box.is_degenerate():
                retried = True
                res = mifgsm(
                    model,
                    start_pt,
                    reference,
                    chain.box,
                    MifgsmConfig(steps=config.steps * 2, momentum=config.momentum,
                                 alpha=chain.alpha / 2.0, loss=loss_kind),
                )
            if res.found:
                candidates[chain.idx] = res.candidate
                chain_records[chain.idx] = ChainRecord(
                    chain=chain.idx,
                    whitebox_found=True,
                    steps_used=res.steps_used,
                    retried=retried,
                    candidate=[float(v) for v in res.candidate],
                    surrogate_label=res.surrogate_label,
                    oracle_label=None,
                    outcome="unchecked",
                    rho=None,
                    box_lower=None,
                    box_upper=None,
                )
            else:
                chain_records[chain.idx] = ChainRecord(
                    chain=chain.idx,
                    whitebox_found=False,
                    steps_used=res.steps_used,
                    retried=retried,
                    candidate=None,
                    surrogate_label=None,
                    oracle_label=None,
                    outcome="no_candidate",
                    rho=None,
                    box_lower=None,
                    box_upper=None,
                )
        whitebox_all = all(rec.whitebox_found for rec in chain_records.values())
        verdict = monitor_alternation(report, whitebox_all, labels_match)

        # Spend one query per candidate, in chain order, stopping at the
        # first transfer or when the budget runs dry.
        for chain in chains:
            if chain.idx not in candidates:
                continue
            rec = chain_records[chain.idx]
            if status is not None:
                break
            if session.ledger.remaining() < 1:
                status = "budget_exhausted"
                break
            z = candidates[chain.idx]
            answer = session.query(z, purpose=purpose)
            rec.oracle_label = answer.hard
            # Transfer: the surrogate and the oracle agree at the target
            # point and at the candidate (whose label differs from y).
            if answer.hard == rec.surrogate_label and report.predicted[0] == y:
                status = "success"
                terminated_at = j
                winning_chain = chain.idx
                adversarial = z.copy()
                rec.outcome = "transfer"
            else:
                dset.add(z, answer, "rejected_adversarial")
                chain.state, chain.box = contract(chain.state, z, outer)
                chain.alpha = chain.state.rho / config.steps
                rec.outcome = "rejected"
                rec.rho = chain.state.rho
                rec.box_lower = [float(v) for v in chain.box.lower]
                rec.box_upper = [float(v) for v in chain.box.upper]

        records.append(
            AlternationRecord(
                j=j,
                queries_before=queries_before,
                queries_after=session.ledger.spent,
                train_risk=risk,
                retrained=retrained,
                epsilon_hat=report.epsilon_hat,
                labels_match=labels_match,
                gamma_bound=gamma_bound,
                gamma_sampled=gamma_sampled,
                whitebox_all=whitebox_all,
                verdict=verdict,
                chains=[chain_records[k] for k in sorted(chain_records)],
            )
        )

        if candidates:
            stalled_alternations = 0
        else:
            stalled_alternations += 1
            if status is None and stalled_alternations >= STALL_LIMIT:
                status = "assumption_violated_then_failed"

    l2 = l2_norm(adversarial - x) if adversarial is not None else None
    linf = linf_norm(adversarial - x) if adversarial is not None else None
    trace = AttackTrace(
        target=x.copy(),
        target_label=y,
        delta=delta_run,
        t=config.contraction_t,
        mode=config.mode,
        seed=config.seed,
        restart_index=restart_index,
        n_chains=n_chains,
        config=config.to_doc(),
        alternations=records,
        status=status,
        terminated_at=terminated_at,
        winning_chain=winning_chain,
        adversarial=adversarial,
        l2=l2,
        linf=linf,
        queries_start=queries_start,
        queries_end=session.ledger.spent,
    )
    cert = build_certificate(trace, gamma=gamma_worst, gamma_sampled=gamma_sampled_worst)
    return trace, cert, model


def _prepare(target, x, holdout, config: AttackConfig):
    if config.budget < config.m + 1:
        raise ValueError(
            f"budget {config.budget} cannot cover the initial set (m={config.m}) "
            "plus at least one candidate check"
        )
    v = np.asarray(x, dtype=np.float64)
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError("target point must lie in [0, 1]^d")
    session = OracleSession(target, config.mode, config.budget)
    dset = build_initial_set(session, holdout, v, config.n_init, config.m, seed=config.seed)
    return session, dset, v, dset.target_label


def _finish(trace, cert, model, session, restarts_used) -> AttackResult:
    return AttackResult(
        status=trace.status,
        adversarial=trace.adversarial,
        l2=trace.l2,
        linf=trace.linf,
        queries_total=session.ledger.spent,
        terminated_at=trace.terminated_at,
        trace=trace,
        certificate=cert,
        session=session,
        restarts_used=restarts_used,
        model=model,
    )


def cac_attack(target, x, holdout, config: AttackConfig) -> AttackResult:
    """Single-chain attack: one contraction chain anchored at the target."""
    session, dset, v, y = _prepare(target, x, holdout, config)
    trace, cert, model = _run_alternations(
        session, dset, v, y, config, n_chains=1, restart_index=0,
        purpose="candidate_check", delta_run=config.delta,
    )
    return _finish(trace, cert, model, session, 0)


def cac_attack_batch(target, x, holdout, config: AttackConfig) -> AttackResult:
    """Batch attack: n_adv chains from noised starts share one distillation set."""
    session, dset, v, y = _prepare(target, x, holdout, config)
    trace, cert, model = _run_alternations(
        session, dset, v, y, config, n_chains=config.n_adv, restart_index=0,
        purpose="candidate_check", delta_run=config.delta,
    )
    return _finish(trace, cert, model, session, 0)


def attack_with_restarts(target, x, holdout, config: AttackConfig) -> AttackResult:
    """Repeat the attack with shrinking delta while budget remains.

    After each success the ball shrinks to restart_shrink times the achieved
    l-inf distance and the attack reruns, reusing the distillation set and
    the ledger (the initial m queries are charged once). Returns the closest
    success found, or the first failed run when none succeeded.
    """
    session, dset, v, y = _prepare(target, x, holdout, config)
    best: tuple[AttackTrace, Certificate, Surrogate | None] | None = None
    delta_run = config.delta
    restart_index = 0
    while True:
        purpose = "candidate_check" if restart_index == 0 else "restart_check"
        n_chains = config.n_adv
        trace, cert, model = _run_alternations(
            session, dset, v, y, config, n_chains, restart_index, purpose, delta_run,
        )
        if trace.status != "success":
            if best is None:
                return _finish(trace, cert, model, session, restart_index)
            break
        if best is None or trace.linf < best[0].linf:
            best = (trace, cert, model)
        if session.ledger.remaining() < 1:
            break
        new_delta = config.restart_shrink * trace.linf
        if new_delta <= 0.0:
            break
        delta_run = new_delta
        restart_index += 1
    trace, cert, model = best
    return _finish(trace, cert, model, session, restart_index)
