"""Brute-force reference for the constrained joint problem.

Enumerates A_1 x ... x A_n, keeps the tuples with every a_i in F_i(s),
Φ = 1 and total risk within τ, and returns the one with the largest summed
utility. It deliberately shares nothing with the negotiation loop beyond
the policy and risk definitions, so it can judge coordinator outputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

from .baselines import CoordinatorKind, coordinator
from .domain import AgentSpec, CoordinationConfig, DEFAULT_ORACLE_CAP, EnterpriseState, JointAction, joint_space_size
from .errors import OracleCapExceeded
from .policy import PolicyBundle, eval_phi, in_feasible_set
from .risk import RiskProfile

# slack on the risk bound so that sums accumulated in a different order agree
RISK_EPS = 1e-12


@dataclass(frozen=True)
class OracleResult:
    optimum: JointAction | None
    utility: float | None
    feasible_count: int
    examined: int

    @property
    def exists(self) -> bool:
        return self.optimum is not None


def constrained_optimum(
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    tau: float,
    cap: int = DEFAULT_ORACLE_CAP,
) -> OracleResult:
    agents = tuple(agents)
    if joint_space_size(agents) > cap:
        raise OracleCapExceeded(f"joint space exceeds cap {cap}")
    ids = [a.agent_id for a in agents]
    # per-agent columns: (action, utility, risk) restricted to F_i(s)
    columns = []
    for ag in agents:
        col = []
        for a in ag.actions:
            if in_feasible_set(bundle, state, ag, a):
                col.append((a, ag.utility_of(state, a), profile.agent_risk(ag.agent_id, a, state)))
        columns.append(col)
    best, best_u, count, examined = None, None, 0, 0
    for combo in itertools.product(*columns):
        examined += 1
        r_tot = 0.0
        for _, _, r in combo:
            r_tot += r
        if r_tot > tau + RISK_EPS:
            continue
        joint = JointAction(tuple(zip(ids, (c[0] for c in combo))))
        if eval_phi(bundle, state, joint).value != 1:
            continue
        count += 1
        u = 0.0
        for _, ui, _ in combo:
            u += ui
        if best_u is None or u > best_u:
            best, best_u = joint, u
    return OracleResult(best, best_u, count, examined)


def verify_joint(
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    tau: float,
    joint: JointAction,
) -> tuple[bool, bool, float]:
    """(Φ = 1 and every a_i ∈ F_i, R_tot ≤ τ, R_tot) recomputed from scratch."""
    inside = all(in_feasible_set(bundle, state, ag, a) for ag, a in zip(agents, joint.actions))
    phi = eval_phi(bundle, state, joint).value == 1
    r_tot = 0.0
    for ag, a in zip(agents, joint.actions):
        r_tot += profile.agent_risk(ag.agent_id, a, state)
    return inside and phi, r_tot <= tau + RISK_EPS, r_tot


@dataclass(frozen=True)
class Comparison:
    coordinator: str
    status: str
    iterations: int
    oracle_exists: bool
    oracle_utility: float | None
    feasible_count: int
    achieved_utility: float | None
    output_feasible: bool | None
    output_within_tau: bool | None
    fail_cause: str | None

    @property
    def gap(self) -> float | None:
        if self.oracle_utility is None or self.achieved_utility is None:
            return None
        return self.oracle_utility - self.achieved_utility

    @property
    def sound(self) -> bool:
        """An accepted output is feasible and within τ."""
        return self.status != "Accepted" or bool(self.output_feasible and self.output_within_tau)

    @property
    def fail_correct(self) -> bool:
        """No feasible joint action exists ⇒ the coordinator did not accept."""
        return self.oracle_exists or self.status == "Failed"

    def to_dict(self) -> dict:
        return {
            "coordinator": self.coordinator,
            "status": self.status,
            "iterations": self.iterations,
            "oracle_exists": self.oracle_exists,
            "oracle_utility": self.oracle_utility,
            "feasible_count": self.feasible_count,
            "achieved_utility": self.achieved_utility,
            "gap": self.gap,
            "output_feasible": self.output_feasible,
            "output_within_tau": self.output_within_tau,
            "sound": self.sound,
            "fail_correct": self.fail_correct,
            "fail_cause": self.fail_cause,
        }


def compare(
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    cfg: CoordinationConfig,
    kind: str | CoordinatorKind = CoordinatorKind.CAMCO,
) -> Comparison:
    agents = tuple(agents)
    kind = CoordinatorKind(kind)
    ref = constrained_optimum(agents, state, bundle, profile, cfg.tau, cfg.oracle_cap)
    out = coordinator(kind)(agents, state, bundle, profile, cfg)
    achieved = feasible = within = cause = None
    if out.accepted:
        feasible, within, _ = verify_joint(agents, state, bundle, profile, cfg.tau, out.joint)
        achieved = sum(ag.utility_of(state, a) for ag, a in zip(agents, out.joint.actions))
    else:
        last = out.proposals[-1] if out.proposals else None
        if not ref.exists:
            cause = "no_feasible_joint"
        elif last is not None and eval_phi(bundle, state, last).value == 0:
            cause = "joint_phi"
        else:
            cause = "risk"
    return Comparison(kind.value, out.status.value, out.iterations_used, ref.exists, ref.utility,
                      ref.feasible_count, achieved, feasible, within, cause)
