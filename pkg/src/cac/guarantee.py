"""Convergence guarantee: iteration bound, assumption monitor, certificate.

Under three run-time assumptions (the surrogate separates its distillation
set with margin epsilon, its label at the target matches the oracle, and the
white-box attack succeeds every alternation), the contraction factor t and
the surrogate's jacobian bound gamma limit how many alternations the attack
can take: the search radius shrinks geometrically, and once it drops below
epsilon/gamma the surrogate can no longer disagree with its own stored
answers, forcing a transfer. `iteration_bound` computes the smallest such
alternation count; `monitor_alternation` checks the assumptions as the run
progresses; `build_certificate` re-verifies a finished trace and reports
whether the bound held.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "iteration_bound",
    "AssumptionVerdict",
    "monitor_alternation",
    "Certificate",
    "build_certificate",
]

# Slack for comparisons among float logarithms.
LOG_SLACK = 1e-12

# Slack for re-verifying recorded contraction radii and boxes.
CHAIN_SLACK = 1e-9

BOUND_NOTE = (
    "bound_n is the smallest n >= 1 with (n-1)*ln(t) <= "
    "ln(epsilon) - ln(delta) - ln(gamma); alternations are counted from 1, "
    "so a clean run must transfer at some alternation <= bound_n."
)


def iteration_bound(epsilon: float, delta: float, gamma: float, t: float) -> int:
    """Smallest alternation count n >= 1 with (n-1)*ln t <= ln e - ln d - ln g.

    Closed form with direct-substitution fix-ups, so float rounding at the
    ceiling boundary cannot shift the answer.
    """
    for name, v in (("epsilon", epsilon), ("delta", delta), ("gamma", gamma)):
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be finite and > 0, got {v}")
    if not (0.0 < t < 1.0):
        raise ValueError(f"t must lie in (0, 1), got {t}")

    r = math.log(epsilon) - math.log(delta) - math.log(gamma)
    log_t = math.log(t)

    def satisfied(n: int) -> bool:
        return (n - 1) * log_t <= r + LOG_SLACK

    if r >= 0:
        n = 1
    else:
        n = 1 + math.ceil(r / log_t)
    n = max(n, 1)
    while not satisfied(n):
        n += 1
    while n > 1 and satisfied(n - 1):
        n -= 1
    return n


@dataclass(frozen=True)
class AssumptionVerdict:
    """Outcome of one alternation's assumption checks."""

    holds: bool
    breaches: tuple[str, ...]

    @classmethod
    def from_breaches(cls, breaches) -> "AssumptionVerdict":
        b = tuple(breaches)
        return cls(holds=not b, breaches=b)


def monitor_alternation(margin, whitebox_succeeded: bool, labels_match: bool) -> AssumptionVerdict:
    """Check one alternation's assumptions.

    margin is the surrogate's margin report on the distillation set; the
    verdict holds iff its smallest margin is positive, the surrogate labels
    agree with every stored oracle label, and the white-box attack produced a
    candidate.
    """
    breaches = []
    if margin.epsilon_hat <= 0:
        breaches.append("margin")
    if not (labels_match and margin.all_labels_match):
        breaches.append("labels")
    if not whitebox_succeeded:
        breaches.append("whitebox")
    return AssumptionVerdict.from_breaches(breaches)


@dataclass
class Certificate:
    """Re-verified guarantee data for one attack run."""

    epsilon: float | None
    delta: float
    gamma: float
    t: float
    bound_n: int | None
    terminated_at: int | None
    status: str
    assumptions_held: bool
    breaches: list[str] = field(default_factory=list)
    chain_ok: bool = True
    chain_violations: list[str] = field(default_factory=list)
    bound_violated: bool = False
    gamma_sampled: float | None = None
    notes: str = BOUND_NOTE

    def to_doc(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "gamma": self.gamma,
            "t": self.t,
            "bound_n": self.bound_n,
            "terminated_at": self.terminated_at,
            "status": self.status,
            "assumptions_held": self.assumptions_held,
            "breaches": list(self.breaches),
            "chain_ok": self.chain_ok,
            "chain_violations": list(self.chain_violations),
            "bound_violated": self.bound_violated,
            "gamma_sampled": self.gamma_sampled,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True)


def _verify_chains(trace) -> tuple[bool, list[str]]:
    """Re-check every recorded contraction against the trace's own data."""
    violations: list[str] = []
    x = np.asarray(trace.target, dtype=np.float64)
    outer_lo = np.maximum(x - trace.delta, 0.0)
    outer_hi = np.minimum(x + trace.delta, 1.0)
    last_rho: dict[int, float] = {}
    for rec in trace.alternations:
        for ch in rec.chains:
            if ch.rho is None:
                continue
            tag = f"alternation {rec.j} chain {ch.chain}"
            z = np.asarray(ch.candidate, dtype=np.float64)
            prev = last_rho.get(ch.chain, trace.delta)
            if ch.rho > trace.t * prev + CHAIN_SLACK:
                violations.append(
                    f"{tag}: rho {ch.rho} exceeds t * previous radius {trace.t * prev}"
                )
            lo = np.asarray(ch.box_lower, dtype=np.float64)
            hi = np.asarray(ch.box_upper, dtype=np.float64)
            if np.any(lo < outer_lo - CHAIN_SLACK) or np.any(hi > outer_hi + CHAIN_SLACK):
                violations.append(f"{tag}: box leaves the outer search space")
            if np.any(z < lo - CHAIN_SLACK) or np.any(z > hi + CHAIN_SLACK):
                violations.append(f"{tag}: box does not contain its candidate")
            if np.any(z < outer_lo - CHAIN_SLACK) or np.any(z > outer_hi + CHAIN_SLACK):
                violations.append(f"{tag}: candidate leaves the outer search space")
            last_rho[ch.chain] = ch.rho
    return (not violations), violations


def build_certificate(trace, gamma: float, gamma_sampled: float | None = None) -> Certificate:
    """Assemble and re-verify the guarantee certificate for a finished trace.

    epsilon is the worst (smallest) margin over the run's alternations; the
    bound is computable only when that margin and gamma are positive. A clean
    successful run that terminated later than the bound is flagged
    bound_violated: by the guarantee that can only be an implementation bug.
    """
    breaches: list[str] = []
    eps_values = [rec.epsilon_hat for rec in trace.alternations if rec.epsilon_hat is not None]
    for rec in trace.alternations:
        for code in rec.verdict.breaches:
            breaches.append(f"alternation {rec.j}: {code}")
    assumptions_held = not breaches and bool(trace.alternations)

    epsilon = min(eps_values) if eps_values else None
    bound_n = None
    if epsilon is not None and epsilon > 0 and gamma > 0:
        bound_n = iteration_bound(epsilon, trace.delta, gamma, trace.t)

    chain_ok, chain_violations = _verify_chains(trace)
    terminated_at = trace.terminated_at
    bound_violated = bool(
        assumptions_held
        and trace.status == "success"
        and bound_n is not None
        and terminated_at is not None
        and terminated_at > bound_n
    )
    return Certificate(
        epsilon=epsilon,
        delta=trace.delta,
        gamma=gamma,
        t=trace.t,
        bound_n=bound_n,
        terminated_at=terminated_at,
        status=trace.status,
        assumptions_held=assumptions_held,
        breaches=breaches,
        chain_ok=chain_ok,
        chain_violations=chain_violations,
        bound_violated=bound_violated,
        gamma_sampled=gamma_sampled,
    )
