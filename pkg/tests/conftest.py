from __future__ import annotations

from typing import Mapping

import pytest

from coordguard.domain import ActionValue, AgentSpec, CoordinationConfig, EnterpriseState
from coordguard.policy import FeasibilityRule, PolicyBundle, PolicyPredicate
from coordguard.risk import IndicatorRef, RiskProfile

# filled by test_acceptance, printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def make_agent(aid: str, utilities: Mapping[str, float], attrs: Mapping[str, Mapping] | None = None,
               safe: str = "hold") -> AgentSpec:
    """Discrete agent with a constant utility table; ``safe`` is added at utility 0 if missing."""
    attrs = attrs or {}
    labels = list(utilities)
    if safe not in labels:
        labels.append(safe)
    actions = [ActionValue.discrete(lab, attrs.get(lab)) for lab in labels]
    default = next(a for a in actions if a.label == safe)
    return AgentSpec(aid, "constant_table", default, actions=tuple(actions), utility_params={"values": dict(utilities)})


def make_profile(risks: Mapping[str, Mapping[str, float]], weight: float = 1.0) -> RiskProfile:
    return RiskProfile(
        ("operational",),
        {"operational": weight},
        {(aid, "operational"): IndicatorRef("constant_table", 10.0, {"values": dict(r)}) for aid, r in risks.items()},
    )


def open_bundle(agent_ids, predicates=(), rules: Mapping[str, FeasibilityRule] | None = None) -> PolicyBundle:
    rules = dict(rules or {})
    feas = tuple(rules.get(a, FeasibilityRule(a)) for a in agent_ids)
    return PolicyBundle(tuple(predicates), feas, "test")


def custom(pid: str, expr) -> PolicyPredicate:
    return PolicyPredicate(pid, "Custom", {}, expr)


def synthetic_state(**variables) -> EnterpriseState:
    return EnterpriseState("Synthetic", variables)


@pytest.fixture
def cfg() -> CoordinationConfig:
    return CoordinationConfig()
