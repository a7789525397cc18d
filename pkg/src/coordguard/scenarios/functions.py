"""Utilities and risk indicators of the three enterprise scenarios.

Every function reads its numbers from ``params`` (see the scenario YAML
files); the code only fixes which state variables each one depends on.
"""

from __future__ import annotations

from ..builtins import scaled_lookup
from ..registry import indicator, utility


# payment approval -----------------------------------------------------------

@utility("payment_throughput", requires=("amount", "urgency"))
def payment_throughput(state, action, params):
    return scaled_lookup(action.label, state, params)


@indicator("financial_exposure", requires=("amount", "counterparty_rating"))
def financial_exposure(action, state, params):
    """Label coefficient scaled by transaction size and counterparty rating."""
    return scaled_lookup(action.label, state, params)


@indicator("approval_compliance_exposure", requires=("amount",))
def approval_compliance_exposure(action, state, params):
    return scaled_lookup(action.label, state, params)


# payroll adjustment ---------------------------------------------------------

@utility("payroll_adjustment_value", requires=("adjustment_pct", "backlog"))
def payroll_adjustment_value(state, action, params):
    return scaled_lookup(action.label, state, params)


@indicator("compliance_violation_probability", requires=("adjustment_pct", "retro_months", "executive"))
def compliance_violation_probability(action, state, params):
    return scaled_lookup(action.label, state, params)


@indicator("audit_exposure", requires=("adjustment_pct", "executive"))
def audit_exposure(action, state, params):
    return scaled_lookup(action.label, state, params)


# cloud deployment -----------------------------------------------------------

def _region_term(action, state, params, key: str) -> float:
    region = action.get("region")
    if region is None:
        return 0.0
    spec = params.get(key)
    if not spec:
        return 0.0
    return float(spec.get("bonus", 0.0)) if region == state.get(spec["var"]) else float(spec.get("otherwise", 0.0))


@utility("deployment_value", requires=("business_priority", "cheapest_region"))
def deployment_value(state, action, params):
    """Label value plus a bonus when the deployment targets the cheapest region."""
    return max(0.0, scaled_lookup(action.label, state, params) + _region_term(action, state, params, "region"))


@indicator("disruption_probability", requires=("change_size", "service_criticality"))
def disruption_probability(action, state, params):
    return scaled_lookup(action.label, state, params)


@indicator("rto_deviation", requires=("change_size", "service_criticality", "data_residency"))
def rto_deviation(action, state, params):
    """Label coefficient times blast radius, plus a penalty for serving away from the data's home region."""
    return scaled_lookup(action.label, state, params) + _region_term(action, state, params, "region")
