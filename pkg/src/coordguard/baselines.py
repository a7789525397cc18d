"""Comparison coordinators. All return :class:`NegotiationOutcome` with the same audit schema.

B1  unconstrained: every agent takes its raw-utility argmax over A_i.
B2  centralized greedy: utility argmax over the product of the F_i(s), τ ignored.
B3  static rules: raw argmax, non-compliant choices replaced by the safe
    default, one joint check, deadlock on failure.
B4  per-agent Lagrangian: each agent shapes its own utility with a private
    multiplier against a budget τ/n (hinge ascent), no projection and no
    joint predicate gate.
"""

from __future__ import annotations

import enum
from typing import Callable, Sequence

from .audit import AuditTrail, EventKind
from .domain import AgentSpec, CoordinationConfig, DualRule, EnterpriseState, JointAction
from .negotiation import (
    FallbackOperator,
    NegotiationOutcome,
    Status,
    _fallback,
    negotiate,
)
from .policy import PolicyBundle, eval_phi, feasible_set, satisfies_unary
from .risk import RiskProfile, RiskReport, fold_risks
from .shaping import ActionTable, LambdaState, update_lambda

import numpy as np

from . import kernels


class CoordinatorKind(str, enum.Enum):
    CAMCO = "camco"
    B1_UNCONSTRAINED_MARL = "b1"
    B2_CENTRALIZED_GREEDY = "b2"
    B3_STATIC_RULES = "b3"
    B4_LAGRANGIAN_MARL = "b4"

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    CoordinatorKind.CAMCO: "CAMCO",
    CoordinatorKind.B1_UNCONSTRAINED_MARL: "B1 (MARL)",
    CoordinatorKind.B2_CENTRALIZED_GREEDY: "B2 (Greedy)",
    CoordinatorKind.B3_STATIC_RULES: "B3 (Rules)",
    CoordinatorKind.B4_LAGRANGIAN_MARL: "B4 (Lag. MARL)",
}


def _single_shot(
    name: str,
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    cfg: CoordinationConfig,
    tables: list[ActionTable],
    chosen: list,
    episode_id: int,
    gate_phi: bool,
    fallback: FallbackOperator | None,
) -> NegotiationOutcome:
    ids = [ag.agent_id for ag in agents]
    trail = AuditTrail(episode_id)
    for t, a in zip(tables, chosen):
        u, r = t.utility_of(a), t.risk_of(a)
        trail.emit(EventKind.PROPOSAL, 1, t.agent.agent_id, action=a, lam=0.0, utility=u, risk=r, shaped=u)
    risks = [t.risk_of(a) for t, a in zip(tables, chosen)]
    r_tot = fold_risks(risks)
    joint = JointAction(tuple(zip(ids, chosen)))
    report = RiskReport(tuple(zip(ids, risks)), r_tot, cfg.tau)
    trail.emit(EventKind.RISK_EVAL, 1, None, joint=joint, per_agent=risks, r_tot=r_tot, tau=cfg.tau,
               within_bound=r_tot <= cfg.tau, r_prev=None)
    phi = eval_phi(bundle, state, joint)
    trail.emit(EventKind.PHI_VERDICT, 1, None, phi=phi.value, verdicts=[list(v) for v in phi.verdicts],
               failing=phi.failing)
    if gate_phi and phi.value != 1:
        op = fallback or FallbackOperator(agents, bundle, profile, cfg.tau)
        trail.emit(EventKind.FAIL, 1, None, iterations=1, last_joint=joint, r_tot=r_tot, phi=phi.value)
        fb = _fallback(trail, 1, op, state)
        return NegotiationOutcome(Status.FAILED, None, 1, (0.0,), report, tuple(trail.events), fb, (joint,), phi, name)
    trail.emit(EventKind.ACCEPT, 1, None, joint=joint, r_tot=r_tot, lam=0.0)
    if fallback is not None and gate_phi:
        fallback.record(joint)
    return NegotiationOutcome(Status.ACCEPTED, joint, 1, (0.0,), report, tuple(trail.events), None, (joint,), phi, name)


def _tables(agents, state, profile) -> list[ActionTable]:
    for ag in agents:
        if not ag.is_discrete:
            raise ValueError(f"baseline coordinators need discrete agents; {ag.agent_id!r} is continuous")
    return [ActionTable(ag, state, profile) for ag in agents]


def b1_unconstrained(agents, state, bundle, risk_profile, cfg, *, episode_id=0, fallback=None) -> NegotiationOutcome:
    tables = _tables(agents, state, risk_profile)
    chosen = [t.best(0.0) for t in tables]
    return _single_shot("b1", agents, state, bundle, risk_profile, cfg, tables, chosen, episode_id, False, None)


def _restricted_argmax(table: ActionTable, allowed, lam: float = 0.0):
    idx = [i for i, a in enumerate(table.actions) if a in allowed]
    u = np.ascontiguousarray(table.utility[idx])
    r = np.ascontiguousarray(table.risk[idx])
    return table.actions[idx[kernels.shaped_argmax(u, r, float(lam))]]


def b2_centralized_greedy(agents, state, bundle, risk_profile, cfg, *, episode_id=0, fallback=None) -> NegotiationOutcome:
    """Exact joint utility argmax over F_1(s) x ... x F_n(s).

    The objective is a sum of per-agent terms, so the joint argmax is the
    tuple of per-agent argmaxes (the lexicographic tie-break agrees too).
    """
    tables = _tables(agents, state, risk_profile)
    chosen = []
    for ag, t in zip(agents, tables):
        allowed = frozenset(feasible_set(bundle, state, ag).actions)
        chosen.append(_restricted_argmax(t, allowed))
    return _single_shot("b2", agents, state, bundle, risk_profile, cfg, tables, chosen, episode_id, False, None)


def b3_static_rules(agents, state, bundle, risk_profile, cfg, *, episode_id=0, fallback=None) -> NegotiationOutcome:
    tables = _tables(agents, state, risk_profile)
    chosen = []
    for ag, t in zip(agents, tables):
        a = t.best(0.0)
        allowed = feasible_set(bundle, state, ag).actions
        if a not in allowed or not satisfies_unary(bundle, state, ag.agent_id, a):
            a = ag.safe_default
        chosen.append(a)
    return _single_shot("b3", agents, state, bundle, risk_profile, cfg, tables, chosen, episode_id, True, fallback)


def b4_lagrangian_marl(agents, state, bundle, risk_profile, cfg, *, episode_id=0, fallback=None) -> NegotiationOutcome:
    """Independent per-agent multipliers against an equal budget split τ/n.

    Agents choose within their own F_i(s) but nothing coordinates them:
    joint predicates are only evaluated post hoc. The run is accepted once
    every agent is within its own budget; after ``k_max`` rounds it fails.
    """
    agents = tuple(agents)
    tables = _tables(agents, state, risk_profile)
    ids = [ag.agent_id for ag in agents]
    n = len(agents)
    budget = cfg.tau / n
    allowed = [frozenset(feasible_set(bundle, state, ag).actions) for ag in agents]
    states = [LambdaState(float(cfg.lambda0), 1, DualRule.HINGE_ASCENT, ()) for _ in agents]
    trajectories: list[list[float]] = [[] for _ in agents]
    trail = AuditTrail(episode_id)
    proposals = []
    report = None
    phi = None
    for k in range(1, cfg.k_max + 1):
        chosen = []
        for ag, t, al, ls, traj in zip(agents, tables, allowed, states, trajectories):
            traj.append(ls.lam)
            a = _restricted_argmax(t, al, ls.lam)
            u, r = t.utility_of(a), t.risk_of(a)
            trail.emit(EventKind.PROPOSAL, k, ag.agent_id, action=a, lam=ls.lam, utility=u, risk=r,
                       shaped=u - ls.lam * r)
            chosen.append(a)
        risks = [t.risk_of(a) for t, a in zip(tables, chosen)]
        r_tot = fold_risks(risks)
        joint = JointAction(tuple(zip(ids, chosen)))
        proposals.append(joint)
        report = RiskReport(tuple(zip(ids, risks)), r_tot, cfg.tau)
        trail.emit(EventKind.RISK_EVAL, k, None, joint=joint, per_agent=risks, r_tot=r_tot, tau=cfg.tau,
                   within_bound=r_tot <= cfg.tau, r_prev=None)
        phi = eval_phi(bundle, state, joint)
        trail.emit(EventKind.PHI_VERDICT, k, None, phi=phi.value, verdicts=[list(v) for v in phi.verdicts],
                   failing=phi.failing)
        if all(r <= budget for r in risks):
            trail.emit(EventKind.ACCEPT, k, None, joint=joint, r_tot=r_tot, lam=None)
            return NegotiationOutcome(Status.ACCEPTED, joint, k, tuple(trajectories[0]), report,
                                      tuple(trail.events), None, tuple(proposals), phi, "b4",
                                      tuple((i, tuple(tr)) for i, tr in zip(ids, trajectories)))
        for i, (ag, r) in enumerate(zip(agents, risks)):
            ls = states[i]
            new = update_lambda(ls, r, budget, cfg)
            trail.emit(EventKind.LAMBDA_UPDATE, k, ag.agent_id, rule=ls.rule, before=ls.lam, after=new.lam,
                       r_tot=r, tau=budget, t=ls.iteration, cause="risk" if r > budget else "none")
            states[i] = new
    op = fallback or FallbackOperator(agents, bundle, risk_profile, cfg.tau)
    trail.emit(EventKind.FAIL, cfg.k_max, None, iterations=cfg.k_max, last_joint=proposals[-1],
               r_tot=report.total, phi=phi.value)
    fb = _fallback(trail, cfg.k_max, op, state)
    return NegotiationOutcome(Status.FAILED, None, cfg.k_max, tuple(trajectories[0]), report, tuple(trail.events),
                              fb, tuple(proposals), phi, "b4",
                              tuple((i, tuple(tr)) for i, tr in zip(ids, trajectories)))


def camco(agents, state, bundle, risk_profile, cfg, *, episode_id=0, fallback=None) -> NegotiationOutcome:
    return negotiate(agents, state, bundle, risk_profile, cfg, episode_id=episode_id, fallback=fallback)


COORDINATORS: dict[CoordinatorKind, Callable[..., NegotiationOutcome]] = {
    CoordinatorKind.CAMCO: camco,
    CoordinatorKind.B1_UNCONSTRAINED_MARL: b1_unconstrained,
    CoordinatorKind.B2_CENTRALIZED_GREEDY: b2_centralized_greedy,
    CoordinatorKind.B3_STATIC_RULES: b3_static_rules,
    CoordinatorKind.B4_LAGRANGIAN_MARL: b4_lagrangian_marl,
}


def coordinator(kind: str | CoordinatorKind) -> Callable[..., NegotiationOutcome]:
    return COORDINATORS[CoordinatorKind(kind)]
