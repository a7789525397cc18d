"""Constraint-aware coordination of enterprise agents.

Agents propose actions, proposals are projected onto per-agent constraint
sets, and a shared risk multiplier is tightened until the joint action
satisfies every policy predicate and the aggregate risk bound.
"""

from .domain import (
    ActionValue,
    AgentSpec,
    CoordinationConfig,
    DualRule,
    EnterpriseState,
    JointAction,
    ScenarioId,
)
from .negotiation import NegotiationOutcome, Status, negotiate
from .policy import FeasibilityRule, PolicyBundle, PolicyPredicate, eval_phi, feasible_set
from .risk import IndicatorRef, RiskProfile

__version__ = "0.1.0"

__all__ = [
    "ActionValue",
    "AgentSpec",
    "CoordinationConfig",
    "DualRule",
    "EnterpriseState",
    "FeasibilityRule",
    "IndicatorRef",
    "JointAction",
    "NegotiationOutcome",
    "PolicyBundle",
    "PolicyPredicate",
    "RiskProfile",
    "ScenarioId",
    "Status",
    "eval_phi",
    "feasible_set",
    "negotiate",
]
