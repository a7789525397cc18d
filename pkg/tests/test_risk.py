import pytest
from hypothesis import given, settings, strategies as st

from coordguard.domain import ActionValue, JointAction
from coordguard.errors import ConfigInvalid, MissingIndicator
from coordguard.negotiation import safe_default_joint
from coordguard.randomgen import random_instance
from coordguard.risk import IndicatorRef, RiskProfile, indicator_bound_violations, joint_risk
from coordguard.scenarios import build_scenario

from conftest import make_agent, make_profile, synthetic_state

GO = ActionValue.discrete("go")


def two_dim_profile(w_fin, w_comp):
    ind = IndicatorRef("constant_table", 1.0, {"values": {"go": 1.0}})
    return RiskProfile(("financial", "compliance"), {"financial": w_fin, "compliance": w_comp},
                       {("a", "financial"): ind, ("a", "compliance"): ind})


def test_zero_weights_zero_risk():
    assert two_dim_profile(0.0, 0.0).agent_risk("a", GO, synthetic_state()) == 0.0


def test_weighted_sum():
    assert two_dim_profile(0.5, 0.5).agent_risk("a", GO, synthetic_state()) == 1.0


def test_safe_defaults_have_zero_total():
    d = build_scenario("S1", 0)
    s = d.sample(0)
    rep = joint_risk(d.risk_profile, d.roster, safe_default_joint(d.roster), s, 0.3)
    assert rep.total == 0.0 and rep.within_bound


def test_two_agent_arithmetic():
    agents = [make_agent("a", {"x": 1.0}), make_agent("b", {"y": 1.0})]
    prof = make_profile({"a": {"x": 0.4}, "b": {"y": 0.5}})
    j = JointAction.of(agents, [agents[0].actions[1], agents[1].actions[1]])
    rep = joint_risk(prof, agents, j, synthetic_state(), 1.0)
    assert rep.total == 0.9 and rep.ratio == 0.9 and rep.within_bound


def test_missing_indicator():
    with pytest.raises(MissingIndicator):
        make_profile({}).agent_risk("ghost", GO, synthetic_state())


@pytest.mark.parametrize("weights", [{"operational": -1.0}, {"financial": 1.0}])
def test_bad_weights(weights):
    with pytest.raises(ConfigInvalid):
        RiskProfile(("operational",), weights, {})


def test_shipped_indicators_within_declared_bounds():
    for sid in ("S1", "S2", "S3"):
        d = build_scenario(sid, 0)
        for ep in range(200):
            assert indicator_bound_violations(d.risk_profile, d.roster, d.sample(ep)) == []


def test_profile_round_trip():
    d = build_scenario("S3", 0)
    assert RiskProfile.from_dict(d.risk_profile.to_dict()).to_dict() == d.risk_profile.to_dict()


@given(st.integers(0, 2**32), st.integers(0, 1000))
@settings(max_examples=200, deadline=None)
def test_total_is_the_sum_of_agent_risks(seed, index):
    inst = random_instance(seed, index)
    acts = [ag.actions[(index + i) % len(ag.actions)] for i, ag in enumerate(inst.agents)]
    j = JointAction.of(inst.agents, acts)
    rep = joint_risk(inst.profile, inst.agents, j, inst.state, inst.cfg.tau)
    total = 0.0
    for ag, a in zip(inst.agents, acts):
        total += inst.profile.agent_risk(ag.agent_id, a, inst.state)
    assert rep.total == total
    assert rep.within_bound == (total <= inst.cfg.tau)
