import pytest
from hypothesis import given, settings, strategies as st

from coordguard.domain import ActionValue, EnterpriseState, JointAction, enumerate_joint_actions
from coordguard.errors import ConfigInvalid, SchemaMismatch
from coordguard.policy import (
    FeasibilityRule,
    PolicyBundle,
    PolicyPredicate,
    eval_phi,
    feasible_set,
    in_feasible_set,
    joint_feasible_region,
)
from coordguard.randomgen import random_instance
from coordguard.scenarios import build_scenario

from conftest import custom, make_agent, open_bundle, synthetic_state


def _s1_joint(d, **labels):
    by_id = {ag.agent_id: ag for ag in d.roster}
    acts = []
    for ag in d.roster:
        lab = labels.get(ag.agent_id, "hold")
        acts.append(next(a for a in by_id[ag.agent_id].actions if a.label == lab))
    return JointAction.of(d.roster, acts)


def test_empty_bundle_phi_is_one():
    agents = [make_agent("a", {"x": 1.0}), make_agent("b", {"y": 1.0})]
    bundle = open_bundle(["a", "b"])
    for j in enumerate_joint_actions(agents):
        phi = eval_phi(bundle, synthetic_state(), j)
        assert phi.value == 1 and phi.verdicts == ()


def test_s1_requester_signing_approval_breaks_sod():
    d = build_scenario("S1", 0)
    s = d.sample(0)
    j = _s1_joint(d, requester="submit", manager="approve_delegated")
    phi = eval_phi(d.bundle, s, j)
    assert phi.value == 0
    assert "sod_signer" in phi.failing


def test_exactly_one_failing_predicate():
    agents = [make_agent("a", {"x": 1.0}), make_agent("b", {"y": 1.0})]
    preds = [
        custom("p_true", {"eq": [1, 1]}),
        custom("p_false", {"in": [{"label": "a"}, ["hold"]]}),
        custom("p_b", {"in": [{"label": "b"}, ["y", "hold"]]}),
    ]
    bundle = open_bundle(["a", "b"], preds)
    j = JointAction.of(agents, [agents[0].actions[1], agents[1].actions[1]])
    assert [a.label for a in j.actions] == ["x", "y"]
    phi = eval_phi(bundle, synthetic_state(), j)
    # conjunction oracle: evaluate each predicate on its own
    each = [p.holds(synthetic_state(), j.as_dict()) for p in preds]
    assert phi.value == int(all(each)) == 0
    assert phi.failing == ["p_false"]


def test_unknown_agent_in_joint_is_schema_mismatch():
    bundle = open_bundle(["a"])
    j = JointAction((("zz", ActionValue.discrete("hold")),))
    with pytest.raises(SchemaMismatch):
        eval_phi(bundle, synthetic_state(), j)


def test_permissive_rules_give_whole_space():
    ag = make_agent("a", {"x": 1.0, "y": 2.0})
    fs = feasible_set(open_bundle(["a"]), synthetic_state(), ag)
    assert set(fs.actions) == set(ag.actions)


def test_closed_window_leaves_safe_default():
    ag = make_agent("a", {"x": 1.0, "y": 2.0})
    rule = FeasibilityRule("a", window={"open": 5, "close": 10})
    bundle = open_bundle(["a"], rules={"a": rule})
    fs = feasible_set(bundle, EnterpriseState("Synthetic", {}, step_index=2), ag)
    assert fs.actions == (ag.safe_default,)
    fs_open = feasible_set(bundle, EnterpriseState("Synthetic", {}, step_index=5), ag)
    assert set(fs_open.actions) == set(ag.actions)


def test_s3_devops_outside_window_only_noop():
    d = build_scenario("S3", 0)
    devops = next(a for a in d.roster if a.agent_id == "devops")
    state = next(s for s in (d.sample(i) for i in range(200)) if not s.get("change_window_open"))
    fs = feasible_set(d.bundle, state, devops)
    assert fs.actions == (devops.safe_default,)
    # per-action membership as the oracle
    survivors = [a for a in devops.actions if in_feasible_set(d.bundle, state, devops, a)]
    assert survivors == [devops.safe_default]


def test_joint_feasible_region_cases():
    agents = [make_agent("a", {"x": 1.0}), make_agent("b", {"y": 1.0})]
    rule = FeasibilityRule("a", perm=({"labels": ["hold"]},))
    bundle = open_bundle(["a", "b"], rules={"a": rule})
    s = synthetic_state()
    defaults = JointAction.of(agents, [a.safe_default for a in agents])
    assert joint_feasible_region(bundle, s, agents, defaults)
    outside = JointAction.of(agents, [agents[0].actions[1], agents[1].safe_default])
    assert outside.actions[0].label == "x"
    assert not joint_feasible_region(bundle, s, agents, outside)


def test_predicate_kinds():
    agents = [make_agent("req", {"submit": 1.0}), make_agent("mgr", {"approve": 1.0}),
              make_agent("cfo", {"approve": 1.0})]
    s = synthetic_state(amount=80_000)
    chain = PolicyPredicate("chain", "ApprovalChain", {
        "chain": ["mgr", "cfo"], "trigger": {"in": [{"label": "req"}, ["submit"]]},
        "required": {"mgr": True, "cfo": {"gt": [{"var": "amount"}, 50_000]}},
    })
    order = PolicyPredicate("order", "TemporalOrder", {
        "before": {"agent": "req", "labels": ["submit"]}, "after": {"agent": "mgr", "labels": ["approve"]},
    })
    gate = PolicyPredicate("gate", "ThresholdGate", {
        "agent": "cfo", "labels": ["approve"], "value": {"var": "amount"}, "threshold": 50_000,
        "when": {"in": [{"label": "req"}, ["submit"]]},
    })

    def j(*labels):
        return JointAction.of(agents, [next(a for a in ag.actions if a.label == lab) for ag, lab in zip(agents, labels)])

    m = j("submit", "approve", "approve").as_dict()
    assert chain.holds(s, m) and order.holds(s, m) and gate.holds(s, m)
    m = j("submit", "approve", "hold").as_dict()
    assert not chain.holds(s, m) and not gate.holds(s, m)
    assert chain.holds(synthetic_state(amount=10), m) and gate.holds(synthetic_state(amount=10), m)
    # approval by the CFO without the manager is not a prefix of the chain
    assert not chain.holds(synthetic_state(amount=10), j("submit", "hold", "approve").as_dict())
    assert not order.holds(s, j("hold", "approve", "hold").as_dict())


def test_bad_predicates_are_config_errors():
    with pytest.raises(ConfigInvalid):
        PolicyPredicate("p", "Custom", {}, None)
    with pytest.raises(ConfigInvalid):
        PolicyPredicate("p", "SegregationOfDuties", {"pairs": [["a"]]})
    with pytest.raises(ConfigInvalid):
        PolicyPredicate("p", "Custom", {}, {"frobnicate": [1]})
    with pytest.raises(ConfigInvalid):
        PolicyBundle((custom("p", True), custom("p", True)))


def test_bundle_round_trip():
    d = build_scenario("S2", 0)
    again = PolicyBundle.from_dict(d.bundle.to_dict())
    assert again.to_dict() == d.bundle.to_dict()


@given(st.integers(0, 2**32), st.integers(0, 500))
@settings(max_examples=150, deadline=None)
def test_joint_feasibility_is_the_explicit_conjunction(seed, index):
    inst = random_instance(seed, index, n_agents=(1, 3), n_actions=(2, 4), allow_infeasible=True)
    for j in enumerate_joint_actions(inst.agents):
        inside = all(in_feasible_set(inst.bundle, inst.state, ag, a) for ag, a in zip(inst.agents, j.actions))
        phi = all(p.holds(inst.state, j.as_dict()) for p in inst.bundle.predicates)
        assert joint_feasible_region(inst.bundle, inst.state, inst.agents, j) == (inside and phi)


@given(st.integers(0, 2**32), st.integers(0, 500))
@settings(max_examples=150, deadline=None)
def test_safe_default_always_feasible(seed, index):
    inst = random_instance(seed, index)
    for ag in inst.agents:
        assert ag.safe_default in feasible_set(inst.bundle, inst.state, ag).actions
