"""Random small coordination instances for property tests and the oracle.

Instances are discrete, use the table-driven builtin utilities and
indicators, and draw their predicates from a handful of templates (joint
implications, segregation of duties, threshold gates, one-agent bans). With
``allow_infeasible`` some predicates demand a non-default action, so the
all-safe-defaults tuple may violate Φ and the instance may have no feasible
joint action at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .domain import ActionValue, AgentSpec, CoordinationConfig, DualRule, EnterpriseState, derive_rng
from .policy import FeasibilityRule, PolicyBundle, PolicyPredicate
from .risk import IndicatorRef, RiskProfile

SAFE_LABEL = "hold"
SIGNERS = ("alpha", "beta", "gamma")


@dataclass(frozen=True)
class Instance:
    agents: tuple[AgentSpec, ...]
    state: EnterpriseState
    bundle: PolicyBundle
    profile: RiskProfile
    cfg: CoordinationConfig
    tags: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "agents": [a.to_dict() for a in self.agents],
            "state": self.state.to_dict(),
            "policy": self.bundle.to_dict(),
            "risk": self.profile.to_dict(),
            "config": self.cfg.to_dict(),
            "tags": dict(self.tags),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Instance:
        return cls(
            agents=tuple(AgentSpec.from_dict(a) for a in d["agents"]),
            state=EnterpriseState.from_dict(d["state"]),
            bundle=PolicyBundle.from_dict(d["policy"]),
            profile=RiskProfile.from_dict(d["risk"]),
            cfg=CoordinationConfig.from_dict(d["config"]),
            tags=d.get("tags") or {},
        )


def _round(x: float) -> float:
    # short decimals keep instances readable and exactly serialisable
    return float(round(float(x), 3))


def _agent(rng: np.random.Generator, idx: int, n_actions: int) -> tuple[AgentSpec, dict[str, float]]:
    aid = f"g{idx}"
    labels = [f"act{j}" for j in range(1, n_actions)]
    actions = [ActionValue.discrete(SAFE_LABEL, {"level": 0, "signer": aid})]
    for j, lab in enumerate(labels, start=1):
        attrs = {"level": int(rng.integers(1, 4)), "signer": SIGNERS[int(rng.integers(len(SIGNERS)))]}
        actions.append(ActionValue.discrete(lab, attrs))
    utilities = {lab: _round(rng.uniform(0.1, 2.0)) for lab in labels}
    risks = {lab: _round(rng.uniform(0.0, 1.0)) for lab in labels}
    spec = AgentSpec(
        agent_id=aid,
        utility="constant_table",
        safe_default=actions[0],
        actions=tuple(actions),
        utility_params={"values": utilities},
        role=f"agent {idx}",
    )
    return spec, risks


def _predicate(rng: np.random.Generator, k: int, agents: list[AgentSpec], allow_infeasible: bool) -> PolicyPredicate:
    pid = f"p{k}"
    ids = [a.agent_id for a in agents]

    def some_labels(ag: AgentSpec) -> list[str]:
        labs = [a.label for a in ag.actions if a.label != SAFE_LABEL]
        m = int(rng.integers(1, len(labs) + 1))
        return sorted(rng.choice(labs, size=m, replace=False).tolist())

    kinds = ["implies", "ban", "gate"]
    if len(ids) >= 2:
        kinds += ["implies", "sod"]
    if allow_infeasible:
        kinds += ["require"]
    kind = kinds[int(rng.integers(len(kinds)))]

    if kind == "implies" and len(ids) >= 2:
        i, j = rng.choice(len(ids), size=2, replace=False)
        a, b = agents[int(i)], agents[int(j)]
        consequent = some_labels(b)
        if rng.random() < 0.5:
            consequent = consequent + [SAFE_LABEL]
        expr = {"implies": [{"in": [{"label": a.agent_id}, some_labels(a)]},
                            {"in": [{"label": b.agent_id}, sorted(set(consequent))]}]}
        return PolicyPredicate(pid, "Custom", {}, expr)
    if kind == "sod":
        i, j = rng.choice(len(ids), size=2, replace=False)
        return PolicyPredicate(pid, "SegregationOfDuties", {"pairs": [[ids[int(i)], ids[int(j)]]], "attr": "signer"})
    if kind == "gate":
        ag = agents[int(rng.integers(len(agents)))]
        allowed = sorted(set(some_labels(ag)) | {SAFE_LABEL})
        return PolicyPredicate(pid, "ThresholdGate", {
            "agent": ag.agent_id,
            "labels": allowed,
            "value": {"var": "x"},
            "threshold": _round(rng.uniform(0.0, 1.0)),
        })
    if kind == "require":
        ag = agents[int(rng.integers(len(agents)))]
        return PolicyPredicate(pid, "Custom", {}, {"in": [{"label": ag.agent_id}, some_labels(ag)]})
    # one-agent ban on high-level actions while the flag is up
    ag = agents[int(rng.integers(len(agents)))]
    expr = {"implies": [{"var": "flag"}, {"lt": [{"attr": [ag.agent_id, "level"]}, int(rng.integers(1, 4))]}]}
    return PolicyPredicate(pid, "Custom", {}, expr)


def _rule(rng: np.random.Generator, ag: AgentSpec) -> FeasibilityRule:
    labels = [a.label for a in ag.actions]
    keep = [lab for lab in labels if lab == SAFE_LABEL or rng.random() < 0.8]
    perm: list[Any] = [{"labels": keep}]
    rest = sorted(set(labels) - set(keep))
    if rest and rng.random() < 0.5:
        perm.append({"labels": rest, "when": {"gt": [{"var": "x"}, 0.5]}})
    avail: Any = True
    if rng.random() < 0.2:
        avail = {"var": "available"}
    return FeasibilityRule(ag.agent_id, tuple(perm), avail)


def random_instance(
    seed: int,
    index: int = 0,
    *,
    n_agents: tuple[int, int] = (1, 4),
    n_actions: tuple[int, int] = (2, 6),
    n_predicates: tuple[int, int] = (0, 3),
    allow_infeasible: bool = False,
    rule: DualRule | str | None = None,
    k_max: int = 10,
) -> Instance:
    """Instance ``index`` of the stream for ``seed``. Ranges are inclusive."""
    rng = derive_rng(seed, index)
    n = int(rng.integers(n_agents[0], n_agents[1] + 1))
    agents, risks = [], {}
    for i in range(n):
        ag, r = _agent(rng, i, int(rng.integers(n_actions[0], n_actions[1] + 1)))
        agents.append(ag)
        risks[ag.agent_id] = r

    state = EnterpriseState("Synthetic", {
        "x": _round(rng.random()),
        "flag": bool(rng.random() < 0.5),
        "available": bool(rng.random() < 0.8),
    }, 0, int(rng.integers(0, 2**63)))

    preds = [_predicate(rng, k, agents, allow_infeasible)
             for k in range(int(rng.integers(n_predicates[0], n_predicates[1] + 1)))]
    bundle = PolicyBundle(tuple(preds), tuple(_rule(rng, ag) for ag in agents), "random-1")

    weight = _round(rng.uniform(0.5, 1.5))
    profile = RiskProfile(
        ("operational",),
        {"operational": weight},
        {(aid, "operational"): IndicatorRef("constant_table", 1.0, {"values": r}) for aid, r in risks.items()},
    )
    if rule is None:
        rule = (DualRule.ALG1_RATIO, DualRule.HINGE_ASCENT, DualRule.DIMINISHING_HINGE)[int(rng.integers(3))]
    cfg = CoordinationConfig(
        tau=_round(rng.uniform(0.2, 0.6) * n),
        lambda0=_round(rng.choice([0.0, 0.0, rng.uniform(0.0, 1.0)])),
        delta=_round(rng.uniform(0.1, 0.5)),
        k_max=k_max,
        dual_update_rule=DualRule(rule),
        eta0=_round(rng.uniform(0.5, 2.0)),
        alpha=_round(rng.uniform(0.5, 4.0)),
    )
    return Instance(tuple(agents), state, bundle, profile, cfg, {"seed": seed, "index": index})
