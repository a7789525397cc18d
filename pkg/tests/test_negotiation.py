import math

from hypothesis import assume, given, settings, strategies as st

from coordguard.audit import EventKind
from coordguard.domain import CoordinationConfig, DualRule, JointAction
from coordguard.negotiation import (
    FallbackOperator,
    Status,
    apply_fallback,
    negotiate,
    safe_default_action,
    safe_default_joint,
)
from coordguard.oracle import constrained_optimum, verify_joint
from coordguard.policy import in_feasible_set
from coordguard.projection import Outcome, project
from coordguard.randomgen import random_instance
from coordguard.shaping import zero_risk_threshold

from conftest import custom, make_agent, make_profile, open_bundle, synthetic_state


def pair(u_go=2.0, r_go=0.6, u_slow=1.0, r_slow=0.2):
    agents = [make_agent(i, {"go": u_go, "slow": u_slow}) for i in ("a", "b")]
    prof = make_profile({i: {"go": r_go, "slow": r_slow} for i in ("a", "b")})
    return agents, prof


def test_first_pass_accept():
    agents, prof = pair(r_go=0.3)
    out = negotiate(agents, synthetic_state(), open_bundle(["a", "b"]), prof, CoordinationConfig())
    assert out.status is Status.ACCEPTED and out.iterations_used == 1
    assert [a.label for a in out.joint.actions] == ["go", "go"]


def test_unreachable_bound_fails_at_k_max():
    # Φ demands that someone deploys, and every deploy alone exceeds τ
    agents, prof = pair(r_go=1.5, r_slow=1.2)
    need = custom("someone_moves", {"or": [{"in": [{"label": "a"}, ["go", "slow"]]},
                                           {"in": [{"label": "b"}, ["go", "slow"]]}]})
    cfg = CoordinationConfig(k_max=6)
    out = negotiate(agents, synthetic_state(), open_bundle(["a", "b"], [need]), prof, cfg)
    assert out.status is Status.FAILED and out.iterations_used == 6
    assert len(out.lambda_trajectory) == 6
    assert all(b > a for a, b in zip(out.lambda_trajectory, out.lambda_trajectory[1:]))
    # the safe defaults violate Φ, so no fallback can be offered
    assert out.fallback is None
    fb = [e for e in out.audit if e.kind is EventKind.FALLBACK]
    assert fb and fb[0].payload["source"] == "unavailable"


def test_small_instance_accepts_oracle_feasible_tuple():
    agents, prof = pair()
    bundle = open_bundle(["a", "b"])
    cfg = CoordinationConfig(delta=1.0)
    s = synthetic_state()
    out = negotiate(agents, s, bundle, prof, cfg)
    assert out.accepted and out.iterations_used <= 4
    feasible, within, _ = verify_joint(agents, s, bundle, prof, cfg.tau, out.joint)
    assert feasible and within
    ref = constrained_optimum(agents, s, bundle, prof, cfg.tau)
    assert ref.exists and ref.feasible_count >= 1


def test_gap_reachable_within_three_rounds():
    # utility gap 0.5, risk gap 0.5: λ just above 1 switches the choice
    agents = [make_agent("a", {"go": 1.5, "slow": 1.0}), make_agent("b", {"x": 1.0})]
    prof = make_profile({"a": {"go": 0.9, "slow": 0.4}, "b": {"x": 0.4}})
    s = synthetic_state()
    out = negotiate(agents, s, open_bundle(["a", "b"]), prof, CoordinationConfig(delta=0.6))
    assert out.accepted and out.iterations_used <= 3
    assert verify_joint(agents, s, open_bundle(["a", "b"]), prof, 1.0, out.joint)[:2] == (True, True)


def test_fallback_reverts_to_last_accepted():
    agents, prof = pair()
    bundle = open_bundle(["a", "b"])
    s = synthetic_state()
    op = FallbackOperator(agents, bundle, prof, 1.0)
    first = negotiate(agents, s, bundle, prof, CoordinationConfig(delta=1.0), fallback=op)
    assert first.accepted
    second = negotiate(agents, s, bundle, prof, CoordinationConfig(k_max=1), fallback=op)
    assert second.status is Status.FAILED
    assert second.fallback == first.joint
    src = [e.payload["source"] for e in second.audit if e.kind is EventKind.FALLBACK]
    assert src == ["history"]


def test_fresh_fallback_is_safe_defaults_with_zero_risk():
    agents, prof = pair()
    s = synthetic_state()
    fb = apply_fallback(agents, s, open_bundle(["a", "b"]), prof, 1.0)
    assert fb == safe_default_joint(agents)
    assert sum(prof.agent_risk(ag.agent_id, a, s) for ag, a in zip(agents, fb.actions)) == 0.0


def test_safe_default_action():
    agents, prof = pair()
    bundle = open_bundle(["a", "b"])
    s = synthetic_state()
    for ag in agents:
        a = safe_default_action(ag, s)
        assert a == ag.safe_default
        assert prof.agent_risk(ag.agent_id, a, s) == 0.0
        assert project(ag, s, bundle, a).outcome is Outcome.UNCHANGED


def test_reject_becomes_safe_default():
    # the unary slice admits nothing at all, so projection rejects
    agents = [make_agent("a", {"go": 1.0})]
    bundle = open_bundle(["a"], [custom("never", {"eq": [{"label": "a"}, "nothing"]})])
    prof = make_profile({"a": {"go": 0.1}})
    out = negotiate(agents, synthetic_state(), bundle, prof, CoordinationConfig(k_max=2))
    kinds = [e.kind for e in out.audit]
    assert EventKind.REJECT_TO_SAFE_DEFAULT in kinds
    assert out.proposals[0].actions[0] == agents[0].safe_default


def test_audit_stream_is_deterministic():
    inst = random_instance(5, 17, n_agents=(3, 3))
    a = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg)
    b = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg)
    assert [e.to_record() for e in a.audit] == [e.to_record() for e in b.audit]


@given(st.integers(0, 2**32), st.integers(0, 10_000))
@settings(max_examples=300, deadline=None)
def test_accepted_outputs_are_sound(seed, index):
    inst = random_instance(seed, index, allow_infeasible=True)
    out = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg)
    assert 1 <= out.iterations_used <= inst.cfg.k_max
    if out.accepted:
        feasible, within, _ = verify_joint(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg.tau, out.joint)
        assert feasible and within


@given(st.integers(0, 2**32), st.integers(0, 10_000))
@settings(max_examples=200, deadline=None)
def test_alg1_lambda_strictly_increases(seed, index):
    inst = random_instance(seed, index, rule=DualRule.ALG1_RATIO)
    out = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg)
    steps = [b - a for a, b in zip(out.lambda_trajectory, out.lambda_trajectory[1:])]
    assert all(s >= inst.cfg.delta * (1 - 1e-12) for s in steps)


@given(st.integers(0, 2**32), st.integers(0, 10_000))
@settings(max_examples=150, deadline=None)
def test_completeness_when_min_risk_tuple_is_feasible(seed, index):
    inst = random_instance(seed, index, rule=DualRule.ALG1_RATIO)
    s = inst.state
    # every non-default action is risky, so a large λ drives everyone to the safe default
    lam_needed = 0.0
    for ag in inst.agents:
        us = [ag.utility_of(s, a) for a in ag.actions]
        rs = [inst.profile.agent_risk(ag.agent_id, a, s) for a in ag.actions]
        assume(all(r > 0 for a, r in zip(ag.actions, rs) if a != ag.safe_default))
        lam_needed = max(lam_needed, zero_risk_threshold(us, rs))
    k_max = int(math.ceil(lam_needed / inst.cfg.delta)) + 2
    assume(k_max <= 3000)
    defaults = safe_default_joint(inst.agents)
    assume(verify_joint(inst.agents, s, inst.bundle, inst.profile, inst.cfg.tau, defaults)[0])
    cfg = CoordinationConfig.from_dict({**inst.cfg.to_dict(), "k_max": k_max})
    out = negotiate(inst.agents, s, inst.bundle, inst.profile, cfg)
    assert out.accepted


def test_outcome_joint_is_per_agent_feasible():
    inst = random_instance(1, 2, n_agents=(4, 4))
    out = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg)
    for j in out.proposals:
        assert isinstance(j, JointAction)
        for ag, a in zip(inst.agents, j.actions):
            assert in_feasible_set(inst.bundle, inst.state, ag, a)
