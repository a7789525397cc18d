"""The propose → project → evaluate → tighten negotiation loop.

Each round every agent proposes the argmax of its risk-shaped utility under
a shared multiplier λ, the proposal is projected onto the agent's constraint
set (a rejected projection becomes the safe default), and the tuple is
accepted only if every joint predicate holds and total risk is within τ.
Otherwise λ is raised and the agents propose again, for at most ``k_max``
rounds. A failed negotiation reports ``Failed`` and carries the fallback
joint action that the caller should execute instead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

from .audit import AuditEvent, AuditTrail, EventKind
from .domain import ActionValue, AgentSpec, CoordinationConfig, EnterpriseState, JointAction
from .errors import FallbackInfeasible
from .policy import PhiResult, PolicyBundle, eval_phi, in_feasible_set
from .projection import Outcome, make_projector
from .risk import RiskProfile, RiskReport, fold_risks
from .shaping import ActionTable, LambdaState, best_response, shaped_utility, update_lambda


class Status(str, enum.Enum):
    ACCEPTED = "Accepted"
    FAILED = "Failed"


@dataclass(frozen=True)
class NegotiationOutcome:
    status: Status
    joint: JointAction | None
    iterations_used: int
    lambda_trajectory: tuple[float, ...]
    final_risk: RiskReport
    audit: tuple[AuditEvent, ...]
    fallback: JointAction | None = None
    proposals: tuple[JointAction, ...] = ()
    phi: PhiResult | None = None
    coordinator: str = "camco"
    lambda_trajectories: tuple[tuple[str, tuple[float, ...]], ...] = field(default=())

    @property
    def accepted(self) -> bool:
        return self.status is Status.ACCEPTED

    @property
    def executed(self) -> JointAction | None:
        """The joint action that actually runs: the accepted tuple or the fallback."""
        return self.joint if self.accepted else self.fallback


# ---------------------------------------------------------------------------
# safe defaults and fallback


def safe_default_action(agent: AgentSpec, state: EnterpriseState) -> ActionValue:
    return agent.safe_default


def safe_default_joint(agents: Sequence[AgentSpec]) -> JointAction:
    return JointAction.of(agents, [ag.safe_default for ag in agents])


def joint_compliant(
    agents: Sequence[AgentSpec],
    joint: JointAction,
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    tau: float,
) -> bool:
    """Φ = 1, every a_i ∈ F_i(s) and total risk ≤ τ."""
    if not joint.matches(agents):
        return False
    if not all(in_feasible_set(bundle, state, ag, a) for ag, a in zip(agents, joint.actions)):
        return False
    if eval_phi(bundle, state, joint).value != 1:
        return False
    total = fold_risks([profile.agent_risk(ag.agent_id, a, state) for ag, a in zip(agents, joint.actions)])
    return total <= tau


class FallbackOperator:
    """Tracks the last compliant joint action of an episode.

    :meth:`apply` returns that configuration if it is still compliant in the
    current state, otherwise the all-safe-defaults tuple. Either way the
    result is checked; a non-compliant fallback raises
    :class:`FallbackInfeasible` (a mis-specified scenario).
    """

    def __init__(self, agents: Sequence[AgentSpec], bundle: PolicyBundle, profile: RiskProfile, tau: float):
        self.agents = tuple(agents)
        self.bundle = bundle
        self.profile = profile
        self.tau = tau
        self.last_compliant: JointAction | None = None

    def record(self, joint: JointAction) -> None:
        self.last_compliant = joint

    def verify(self, state: EnterpriseState) -> bool:
        """Fallback invariant for the all-safe-defaults tuple in ``state``."""
        return joint_compliant(self.agents, safe_default_joint(self.agents), state, self.bundle, self.profile, self.tau)

    def apply(self, state: EnterpriseState) -> tuple[JointAction, str]:
        if self.last_compliant is not None and joint_compliant(
            self.agents, self.last_compliant, state, self.bundle, self.profile, self.tau
        ):
            return self.last_compliant, "history"
        joint = safe_default_joint(self.agents)
        if not joint_compliant(self.agents, joint, state, self.bundle, self.profile, self.tau):
            raise FallbackInfeasible("all-safe-defaults joint action is not compliant in this state")
        return joint, "safe_defaults"


def apply_fallback(
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    tau: float,
    history: JointAction | None = None,
) -> JointAction:
    op = FallbackOperator(agents, bundle, profile, tau)
    if history is not None:
        op.record(history)
    return op.apply(state)[0]


def _fallback(trail: AuditTrail, iteration: int, op: FallbackOperator, state: EnterpriseState) -> JointAction | None:
    try:
        joint, source = op.apply(state)
    except FallbackInfeasible as exc:
        trail.emit(EventKind.FALLBACK, iteration, None, joint=None, source="unavailable", reason=str(exc))
        return None
    trail.emit(EventKind.FALLBACK, iteration, None, joint=joint, source=source)
    return joint


# ---------------------------------------------------------------------------
# the loop


class AgentPipeline:
    """best response → projection → safe-default substitution for one agent in one state."""

    def __init__(self, agent: AgentSpec, state: EnterpriseState, bundle: PolicyBundle, profile: RiskProfile):
        self.agent = agent
        self.state = state
        self.profile = profile
        self.table = ActionTable(agent, state, profile) if agent.is_discrete else None
        self.project = make_projector(bundle, state, agent)

    def propose(self, lam: float) -> ActionValue:
        if self.table is not None:
            return self.table.best(lam)
        return best_response(self.agent, self.state, lam, self.profile)

    def utility(self, action: ActionValue) -> float:
        if self.table is not None:
            u = self.table.utility_of(action)
            if u is not None:
                return u
        return self.agent.utility_of(self.state, action)

    def risk(self, action: ActionValue) -> float:
        if self.table is not None:
            r = self.table.risk_of(action)
            if r is not None:
                return r
        return self.profile.agent_risk(self.agent.agent_id, action, self.state)

    def effective(self, lam: float) -> ActionValue:
        """The action this agent ends up with in a round at multiplier ``lam``."""
        res = self.project(self.propose(lam))
        return self.agent.safe_default if res.rejected else res.action


def build_pipelines(agents, state, bundle, profile) -> list[AgentPipeline]:
    return [AgentPipeline(ag, state, bundle, profile) for ag in agents]


def negotiate(
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    risk_profile: RiskProfile,
    cfg: CoordinationConfig,
    *,
    episode_id: int = 0,
    fallback: FallbackOperator | None = None,
    pipelines: Sequence[AgentPipeline] | None = None,
) -> NegotiationOutcome:
    cfg.validate()
    tau = cfg.tau
    agents = tuple(agents)
    ids = [ag.agent_id for ag in agents]
    pipes = list(pipelines) if pipelines is not None else build_pipelines(agents, state, bundle, risk_profile)
    op = fallback if fallback is not None else FallbackOperator(agents, bundle, risk_profile, tau)
    trail = AuditTrail(episode_id)

    ls = LambdaState.start(cfg)
    r_prev = math.inf
    trajectory: list[float] = []
    proposals: list[JointAction] = []
    report = RiskReport(tuple((a, 0.0) for a in ids), 0.0, tau)
    phi = None

    for k in range(1, cfg.k_max + 1):
        lam = ls.lam
        trajectory.append(lam)
        raw = [p.propose(lam) for p in pipes]
        for p, a in zip(pipes, raw):
            u, r = p.utility(a), p.risk(a)
            trail.emit(EventKind.PROPOSAL, k, p.agent.agent_id, action=a, lam=lam, utility=u, risk=r,
                       shaped=shaped_utility(u, r, lam))
        results = [p.project(a) for p, a in zip(pipes, raw)]
        for p, a, res in zip(pipes, raw, results):
            trail.emit(EventKind.PROJECTION, k, p.agent.agent_id, before=a, after=res.action,
                       outcome=res.outcome, distance=res.distance)
        final: list[ActionValue] = []
        for p, res in zip(pipes, results):
            if res.outcome is Outcome.REJECT:
                a = safe_default_action(p.agent, state)
                trail.emit(EventKind.REJECT_TO_SAFE_DEFAULT, k, p.agent.agent_id, action=a)
            else:
                a = res.action
            final.append(a)
        risks = [p.risk(a) for p, a in zip(pipes, final)]
        r_tot = fold_risks(risks)
        joint = JointAction(tuple(zip(ids, final)))
        proposals.append(joint)
        report = RiskReport(tuple(zip(ids, risks)), r_tot, tau)
        trail.emit(EventKind.RISK_EVAL, k, None, joint=joint, per_agent=risks, r_tot=r_tot, tau=tau,
                   within_bound=r_tot <= tau, r_prev=r_prev)
        phi = eval_phi(bundle, state, joint)
        trail.emit(EventKind.PHI_VERDICT, k, None, phi=phi.value, verdicts=[list(v) for v in phi.verdicts],
                   failing=phi.failing)
        if phi.value == 1 and r_tot <= tau:
            trail.emit(EventKind.ACCEPT, k, None, joint=joint, r_tot=r_tot, lam=lam)
            op.record(joint)
            return NegotiationOutcome(Status.ACCEPTED, joint, k, tuple(trajectory), report, tuple(trail.events),
                                      None, tuple(proposals), phi, "camco")
        cause = "both" if (phi.value == 0 and r_tot > tau) else ("phi" if phi.value == 0 else "risk")
        new = update_lambda(ls, r_tot, tau, cfg)
        trail.emit(EventKind.LAMBDA_UPDATE, k, None, rule=ls.rule, before=ls.lam, after=new.lam, r_tot=r_tot,
                   tau=tau, t=ls.iteration, cause=cause)
        ls = new
        r_prev = r_tot

    trail.emit(EventKind.FAIL, cfg.k_max, None, iterations=cfg.k_max, last_joint=proposals[-1],
               r_tot=report.total, phi=phi.value if phi else None)
    fb = _fallback(trail, cfg.k_max, op, state)
    return NegotiationOutcome(Status.FAILED, None, cfg.k_max, tuple(trajectory), report, tuple(trail.events),
                              fb, tuple(proposals), phi, "camco")
