"""Iteration bound vs a high-precision scan; monitor and certificate checks."""

import json
import math

import mpmath as mp
import numpy as np
import pytest

from cac.distill import MarginReport
from cac.engine import AlternationRecord, AttackTrace, ChainRecord
from cac.guarantee import (
    AssumptionVerdict,
    build_certificate,
    iteration_bound,
    monitor_alternation,
)


def scan_bound(epsilon, delta, gamma, t):
    """Independent oracle: 50-digit linear scan for the smallest n >= 1
    with (n-1) * ln t <= ln epsilon - ln delta - ln gamma."""
    with mp.workdps(50):
        r = mp.log(mp.mpf(epsilon)) - mp.log(mp.mpf(delta)) - mp.log(mp.mpf(gamma))
        lt = mp.log(mp.mpf(t))
        n = 1
        while (n - 1) * lt > r:
            n += 1
        return n


def test_bound_frozen_example():
    # ln(0.01) - ln(0.125) - ln(10) = -4.8283...; divided by ln(0.99) it
    # needs 482 alternations.
    assert iteration_bound(0.01, 0.125, 10.0, 0.99) == 482
    assert scan_bound(0.01, 0.125, 10.0, 0.99) == 482


def test_bound_is_one_when_margin_covers_ball():
    # epsilon >= delta * gamma makes the right side nonnegative.
    assert iteration_bound(0.5, 0.125, 1.0, 0.99) == 1
    assert iteration_bound(0.125, 0.125, 1.0, 0.5) == 1  # equality: r == 0
    assert iteration_bound(1.0, 0.5, 2.0, 0.9) == 1


def test_bound_matches_scan_on_random_tuples():
    rng = np.random.default_rng(31337)
    for _ in range(1000):
        epsilon = float(10 ** rng.uniform(-6, 0))
        delta = float(10 ** rng.uniform(-2, 0))
        gamma = float(10 ** rng.uniform(-3, 3))
        t = float(rng.uniform(0.5, 0.999))
        assert iteration_bound(epsilon, delta, gamma, t) == scan_bound(epsilon, delta, gamma, t)


def test_bound_minimality():
    rng = np.random.default_rng(99)
    log_slack = 1e-12
    for _ in range(200):
        epsilon = float(10 ** rng.uniform(-5, 0))
        delta = float(10 ** rng.uniform(-2, 0))
        gamma = float(10 ** rng.uniform(-2, 2))
        t = float(rng.uniform(0.5, 0.99))
        n = iteration_bound(epsilon, delta, gamma, t)
        r = math.log(epsilon) - math.log(delta) - math.log(gamma)
        lt = math.log(t)
        assert (n - 1) * lt <= r + log_slack
        if n > 1:
            assert (n - 2) * lt > r + log_slack


def test_bound_monotonicity():
    rng = np.random.default_rng(17)
    for _ in range(100):
        delta, gamma = 0.125, float(10 ** rng.uniform(-1, 2))
        t = float(rng.uniform(0.6, 0.99))
        e1 = float(10 ** rng.uniform(-5, -1))
        e2 = e1 / 10
        assert iteration_bound(e2, delta, gamma, t) >= iteration_bound(e1, delta, gamma, t)
        # t closer to one shrinks slower: never fewer alternations.
        assert iteration_bound(e1, delta, gamma, 0.995) >= iteration_bound(e1, delta, gamma, t)


def test_bound_validation():
    for bad in (
        (0.0, 0.125, 1.0, 0.9),
        (0.1, -1.0, 1.0, 0.9),
        (0.1, 0.125, 0.0, 0.9),
        (0.1, 0.125, 1.0, 1.0),
        (0.1, 0.125, 1.0, 0.0),
        (float("nan"), 0.125, 1.0, 0.9),
    ):
        with pytest.raises(ValueError):
            iteration_bound(*bad)


def make_margin(epsilon_hat=0.2, all_match=True):
    return MarginReport(
        margins=[epsilon_hat], labels=[0], predicted=[0],
        epsilon_hat=epsilon_hat, all_labels_match=all_match,
    )


def test_monitor_holds():
    v = monitor_alternation(make_margin(), True, True)
    assert v.holds
    assert v.breaches == ()


def test_monitor_breaches():
    assert monitor_alternation(make_margin(epsilon_hat=0.0), True, True).breaches == ("margin",)
    assert monitor_alternation(make_margin(epsilon_hat=-0.1), True, True).breaches == ("margin",)
    assert monitor_alternation(make_margin(all_match=False), True, True).breaches == ("labels",)
    assert monitor_alternation(make_margin(), True, False).breaches == ("labels",)
    assert monitor_alternation(make_margin(), False, True).breaches == ("whitebox",)
    v = monitor_alternation(make_margin(epsilon_hat=-0.1, all_match=False), False, False)
    assert v.breaches == ("margin", "labels", "whitebox")
    assert not v.holds


def chain_record(chain, rho, z, lo, hi):
    return ChainRecord(
        chain=chain, whitebox_found=True, steps_used=1, retried=False,
        candidate=list(z), surrogate_label=1, oracle_label=0, outcome="rejected",
        rho=rho, box_lower=list(lo), box_upper=list(hi),
    )


def alternation(j, epsilon_hat, chains, breaches=()):
    return AlternationRecord(
        j=j, queries_before=0, queries_after=len(chains), train_risk=0.1,
        retrained=False, epsilon_hat=epsilon_hat, labels_match=not breaches,
        gamma_bound=2.0, gamma_sampled=1.0, whitebox_all=True,
        verdict=AssumptionVerdict.from_breaches(breaches), chains=chains,
    )


def make_trace(alternations, status="success", terminated_at=None, delta=0.125, t=0.9):
    x = [0.5, 0.5]
    return AttackTrace(
        target=np.array(x), target_label=0, delta=delta, t=t, mode="hard",
        seed=0, restart_index=0, n_chains=1, config={}, alternations=alternations,
        status=status, terminated_at=terminated_at, winning_chain=0,
        adversarial=None, l2=None, linf=None, queries_start=0, queries_end=0,
    )


def test_certificate_clean_success():
    # delta=0.125, t=0.9: one contraction to rho = 0.9 * 0.1 = 0.09.
    z = [0.6, 0.55]
    rec = alternation(1, 0.2, [chain_record(0, 0.09, z, [0.51, 0.46], [0.625, 0.625])])
    rec2 = alternation(2, 0.15, [])
    trace = make_trace([rec, rec2], status="success", terminated_at=2)
    cert = build_certificate(trace, gamma=2.0, gamma_sampled=1.5)
    assert cert.assumptions_held
    assert cert.chain_ok
    assert cert.epsilon == 0.15
    assert cert.bound_n == iteration_bound(0.15, 0.125, 2.0, 0.9)
    assert not cert.bound_violated
    assert cert.terminated_at == 2
    assert cert.gamma_sampled == 1.5


def test_certificate_flags_late_clean_success():
    # epsilon=0.11, delta=0.125, gamma=1.0, t=0.9: bound is 1 ... actually
    # r = ln(0.11/0.125) < 0, so bound is 1 + ceil(r/ln t) = 3; terminating
    # at 5 with clean assumptions must raise the violation flag.
    n = iteration_bound(0.11, 0.125, 1.0, 0.9)
    recs = [alternation(j, 0.11, []) for j in range(1, 6)]
    trace = make_trace(recs, status="success", terminated_at=5)
    cert = build_certificate(trace, gamma=1.0)
    assert cert.bound_n == n
    assert 5 > n
    assert cert.assumptions_held
    assert cert.bound_violated


def test_certificate_breach_disables_violation_flag():
    recs = [alternation(1, -0.05, [], breaches=("margin",))]
    trace = make_trace(recs, status="success", terminated_at=1)
    cert = build_certificate(trace, gamma=1.0)
    assert not cert.assumptions_held
    assert cert.breaches == ["alternation 1: margin"]
    assert cert.bound_n is None  # epsilon <= 0: bound undefined
    assert not cert.bound_violated


def test_certificate_detects_rho_violation():
    # rho larger than t * delta on the first contraction.
    z = [0.6, 0.5]
    rec = alternation(1, 0.2, [chain_record(0, 0.2, z, [0.475, 0.375], [0.625, 0.625])])
    trace = make_trace([rec], status="budget_exhausted")
    cert = build_certificate(trace, gamma=2.0)
    assert not cert.chain_ok
    assert any("rho" in v for v in cert.chain_violations)


def test_certificate_detects_box_escape():
    # Box upper corner leaves the outer ball (0.625 + margin).
    z = [0.6, 0.5]
    rec = alternation(1, 0.2, [chain_record(0, 0.09, z, [0.51, 0.41], [0.7, 0.59])])
    trace = make_trace([rec], status="budget_exhausted")
    cert = build_certificate(trace, gamma=2.0)
    assert not cert.chain_ok
    assert any("outer" in v for v in cert.chain_violations)


def test_certificate_detects_candidate_outside_box():
    z = [0.62, 0.5]
    rec = alternation(1, 0.2, [chain_record(0, 0.09, z, [0.5, 0.41], [0.61, 0.59])])
    trace = make_trace([rec], status="budget_exhausted")
    cert = build_certificate(trace, gamma=2.0)
    assert not cert.chain_ok


def test_certificate_empty_run():
    trace = make_trace([], status="budget_exhausted")
    cert = build_certificate(trace, gamma=0.0)
    assert cert.epsilon is None
    assert cert.bound_n is None
    assert not cert.assumptions_held
    assert cert.chain_ok


def test_certificate_per_chain_rho_tracking():
    # Two chains contracting independently: chain 1's radii must not be
    # compared against chain 0's.
    za, zb = [0.6, 0.5], [0.45, 0.55]
    rec1 = alternation(1, 0.2, [
        chain_record(0, 0.09, za, [0.51, 0.41], [0.625, 0.59]),
        chain_record(1, 0.045, zb, [0.405, 0.505], [0.495, 0.595]),
    ])
    # Chain 1 contracts again: allowed up to t * 0.045 = 0.0405.
    rec2 = alternation(2, 0.2, [
        chain_record(1, 0.04, [0.46, 0.56], [0.42, 0.52], [0.5, 0.6]),
    ])
    trace = make_trace([rec1, rec2], status="budget_exhausted")
    cert = build_certificate(trace, gamma=2.0)
    assert cert.chain_ok
    # Same radius on chain 0 would have violated (0.04 > 0.9 * 0.09 is false;
    # use a radius legal for chain 0 but illegal for chain 1).
    rec2b = alternation(2, 0.2, [
        chain_record(1, 0.08, [0.46, 0.56], [0.38, 0.48], [0.54, 0.64]),
    ])
    trace_b = make_trace([rec1, rec2b], status="budget_exhausted")
    assert not build_certificate(trace_b, gamma=2.0).chain_ok


def test_certificate_json_round_trip():
    rec = alternation(1, 0.2, [])
    trace = make_trace([rec], status="success", terminated_at=1)
    cert = build_certificate(trace, gamma=2.0, gamma_sampled=1.0)
    doc = json.loads(cert.to_json())
    for key in ("epsilon", "delta", "gamma", "t", "bound_n", "terminated_at",
                "status", "assumptions_held", "breaches", "chain_ok",
                "bound_violated", "notes"):
        assert key in doc
    assert doc["status"] == "success"
