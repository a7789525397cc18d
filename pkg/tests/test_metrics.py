import itertools
import json

import pytest

from coordguard.baselines import b2_centralized_greedy
from coordguard.domain import CoordinationConfig, enumerate_joint_actions
from coordguard.metrics import (
    CSV_COLUMNS,
    RESULTS_SCHEMA,
    BatchResult,
    EpisodeRecord,
    convergence_iterations,
    deadlock_rate,
    emit,
    mean_risk_ratio,
    unconstrained_best,
    utility_retention,
    violation_rate,
)
from coordguard.negotiation import negotiate
from coordguard.randomgen import random_instance
from coordguard.runner import run_batch, tau_sensitivity_sweep
from coordguard.scenarios import build_scenario

from conftest import custom, make_agent, make_profile, open_bundle, synthetic_state


def rec(ep=0, status="Accepted", it=1, phi=1, r=0.0, u=1.0, best=1.0, executed=True):
    return EpisodeRecord(ep, status, it, [] if executed else None, phi if executed else None, False, r, u, best, it, 0)


def test_violation_rate_examples():
    assert violation_rate([rec() for _ in range(4)]) == 0.0
    assert violation_rate([rec(), rec(phi=0), rec(), rec()]) == 0.25
    # a failed episode with no executable fallback executes nothing
    assert violation_rate([rec(status="Failed", executed=False), rec()]) == 0.0


def test_risk_ratio_examples():
    assert mean_risk_ratio([rec(r=0.0) for _ in range(3)], 1.0) == 0.0
    assert mean_risk_ratio([rec(r=0.6), rec(r=0.8)], 1.0) == pytest.approx(0.7)


def test_deadlock_examples():
    assert deadlock_rate([rec() for _ in range(5)]) == 0.0
    assert deadlock_rate([rec(status="Failed")] + [rec() for _ in range(7)]) == 0.125


def test_convergence_examples():
    assert convergence_iterations([rec(), rec()]) == 1.0
    assert convergence_iterations([rec(it=1), rec(it=3), rec(status="Failed", it=10)]) == 2.0


def test_retention_examples():
    assert utility_retention([rec(u=12.0, best=12.0)]) == 100.0
    assert utility_retention([rec(u=9.0, best=12.0)]) == 75.0


def test_separable_best_equals_joint_enumeration():
    for idx in range(100):
        inst = random_instance(77, idx, n_agents=(1, 3))
        brute = max(sum(ag.utility_of(inst.state, a) for ag, a in zip(inst.agents, j.actions))
                    for j in enumerate_joint_actions(inst.agents))
        assert unconstrained_best(inst.agents, inst.state) == pytest.approx(brute, abs=1e-12)


def test_b1_retention_is_exactly_100():
    for sid in ("S1", "S2", "S3"):
        assert run_batch(build_scenario(sid, 2), "b1", 100).result.utility_retention_pct == 100.0


def test_metrics_match_audit_recount():
    d = build_scenario("S2", 6)
    run = run_batch(d, "camco", 80, audit=True)
    ends = [json.loads(line) for line in run.audit_lines if '"episode_end"' in line]
    fails = sum(1 for line in run.audit_lines if '"kind":"Fail"' in line)
    assert len(ends) == 80
    failed = sum(e["status"] == "Failed" for e in ends)
    assert failed == fails
    assert run.result.deadlock_rate == failed / 80
    acc = [e["iterations"] for e in ends if e["status"] == "Accepted"]
    assert run.result.mean_convergence_iterations == pytest.approx(sum(acc) / len(acc), abs=1e-12)
    again = BatchResult.from_records("S2", "camco", d.tau_default, [EpisodeRecord.from_dict(e["metrics"]) for e in ends], 6)
    assert again.summary() == run.result.summary()


def test_loose_tau_matches_greedy_without_joint_predicates():
    agents = [make_agent("a", {"go": 2.0, "slow": 1.0}), make_agent("b", {"go": 1.5})]
    prof = make_profile({"a": {"go": 0.9, "slow": 0.1}, "b": {"go": 0.7}})
    bundle = open_bundle(["a", "b"])
    s = synthetic_state()
    assert negotiate(agents, s, bundle, prof, CoordinationConfig(tau=10.0)).joint == \
        b2_centralized_greedy(agents, s, bundle, prof, CoordinationConfig()).joint


def test_tight_tau_with_infeasible_min_tuple_deadlocks():
    agents = [make_agent("a", {"go": 2.0})]
    prof = make_profile({"a": {"go": 0.9}})
    bundle = open_bundle(["a"], [custom("must_go", {"in": [{"label": "a"}, ["go"]]})])
    outs = [negotiate(agents, synthetic_state(), bundle, prof, CoordinationConfig(tau=t)) for t in (0.2, 0.5, 0.8)]
    assert all(not o.accepted for o in outs)


def test_sweep_grid_and_zero_violations():
    runs = tau_sensitivity_sweep(build_scenario("S1", 0), "camco", episodes=60)
    assert [r.result.tau for r in runs] == [0.4, 0.6, 0.8, 1.0, 1.2, 1.4]
    assert all(r.result.violation_rate == 0.0 for r in runs)


def test_emitters():
    results = [run_batch(build_scenario("S1", 0), k, 20).result for k in ("camco", "b1")]
    table = emit(results, "table")
    assert table.splitlines()[0].split() == ["Scen.", "Method", "Viol.%", "Risk", "ratio", "Dead.%", "Conv.", "Util.%"]
    assert len(table.splitlines()) == 4
    csv_lines = emit(results, "csv").splitlines()
    assert csv_lines[0] == ",".join(CSV_COLUMNS) and csv_lines[1].endswith(RESULTS_SCHEMA)
    rows = [json.loads(x) for x in emit(results, "json-lines").splitlines()]
    assert [r["coordinator_kind"] for r in rows] == ["camco", "b1"] and rows[0]["schema"] == RESULTS_SCHEMA
    with pytest.raises(ValueError):
        emit(results, "xml")


def test_rates_are_fractions():
    for kind, sid in itertools.product(("camco", "b1", "b4"), ("S1", "S3")):
        b = run_batch(build_scenario(sid, 1), kind, 40).result
        for v in (b.violation_rate, b.deadlock_rate, b.phi_violation_rate, b.proposal_violation_rate):
            assert 0.0 <= v <= 1.0
