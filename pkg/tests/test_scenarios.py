import pytest

from coordguard.config import dump_yaml
from coordguard.domain import validate_roster
from coordguard.errors import ConfigInvalid, UnknownScenario
from coordguard.negotiation import FallbackOperator
from coordguard.policy import PredicateKind
from coordguard.scenarios import build_scenario, load_scenario_text, sample_episode_states, scenario_text

ROLES = {
    "S1": ["requester", "manager", "compliance_officer", "cfo"],
    "S2": ["hr_analyst", "payroll_processor", "audit_reviewer"],
    "S3": ["developer", "devops", "security_reviewer", "change_manager", "sre"],
}


@pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
def test_rosters(sid):
    d = build_scenario(sid, 11)
    assert [a.agent_id for a in d.roster] == ROLES[sid]
    assert d.tau_default == 1.0
    assert all(len(a.actions) <= 12 for a in d.roster)


def test_s1_constraint_content():
    kinds = {p.kind for p in build_scenario("S1").bundle.predicates}
    assert {PredicateKind.THRESHOLD_GATE, PredicateKind.SEGREGATION_OF_DUTIES, PredicateKind.APPROVAL_CHAIN} <= kinds


def test_s2_constraint_content():
    ids = {p.predicate_id for p in build_scenario("S2").bundle.predicates}
    assert {"comp_sensitivity", "retro_limit"} <= ids


def test_s3_has_change_window_and_sovereignty():
    d = build_scenario("S3", 5)
    assert any(r.window is not None for r in d.bundle.feasibility)
    preds = {p.predicate_id: p for p in d.bundle.predicates}
    assert "sovereignty" in preds and "rollback_readiness" in preds
    devops = next(a for a in d.roster if a.agent_id == "devops")
    assert {a.get("region") for a in devops.actions} == {None, "eu", "us", "apac"}


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        build_scenario("S7")


def test_same_id_and_seed_twice():
    assert build_scenario("S2", 4).to_dict() == build_scenario("S2", 4).to_dict()


def test_episode_states_are_pure():
    d = build_scenario("S1", 42)
    assert sample_episode_states(d, 0) == sample_episode_states(d, 0)
    # regenerating one episode alone gives the same state as in sequence
    seq = [d.sample(i) for i in range(20)]
    assert d.sample(13) == seq[13]


def test_s1_amounts_cover_both_sides_of_escalation():
    d = build_scenario("S1", 42)
    amounts = [d.sample(i).get("amount") for i in range(500)]
    assert 1000 <= min(amounts) and max(amounts) <= 500_000
    assert any(a <= 25_000 for a in amounts) and any(a > 150_000 for a in amounts)
    assert sum(a > 100_000 for a in amounts) >= 50


def test_different_seeds_diverge():
    a, b = build_scenario("S3", 1), build_scenario("S3", 2)
    assert any(a.sample(i) != b.sample(i) for i in range(5))


@pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
def test_roster_and_fallback_hold_on_1000_states(sid):
    d = build_scenario(sid, 0)
    op = FallbackOperator(d.roster, d.bundle, d.risk_profile, d.tau_default)
    for ep in range(1000):
        s = d.sample(ep)
        assert validate_roster(d.roster, s, bundle=d.bundle, risk_profile=d.risk_profile).valid
        assert op.verify(s)


@pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
def test_definitions_round_trip_through_yaml(sid):
    d = build_scenario(sid, 3)
    again = load_scenario_text(dump_yaml(d.to_dict()), 3)
    assert again.to_dict() == d.to_dict()
    assert [again.sample(i) for i in range(10)] == [d.sample(i) for i in range(10)]


def test_config_errors_carry_line_numbers():
    text = scenario_text("S1").replace("kind: SegregationOfDuties", "kind: Segregation")
    with pytest.raises(ConfigInvalid) as err:
        load_scenario_text(text, 0, "broken.yaml")
    assert err.value.line is not None and "broken.yaml" in str(err.value)


def test_unknown_top_level_key():
    with pytest.raises(ConfigInvalid):
        load_scenario_text(scenario_text("S2") + "\nextra: 1\n")
