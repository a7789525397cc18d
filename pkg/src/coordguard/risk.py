"""Weighted-additive risk: R_i(a) = sum_d w_d * r_{i,d}(a, s), and the joint total.

Summation order is fixed (dimension order inside an agent, roster order
across agents) so totals are bit-reproducible under any scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Sequence

from .domain import ActionValue, AgentSpec, EnterpriseState, JointAction, _plain
from .errors import ConfigInvalid, MissingIndicator
from .registry import get_indicator

DEFAULT_DIMENSIONS = ("financial", "compliance", "operational", "reputational")


@dataclass(frozen=True)
class IndicatorRef:
    """A registered indicator function with its parameters and declared upper bound."""

    name: str
    r_max: float
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.r_max) and self.r_max >= 0):
            raise ConfigInvalid(f"indicator {self.name!r}: r_max must be finite and >= 0")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "_fn", get_indicator(self.name).fn)

    def __call__(self, action: ActionValue, state: EnterpriseState) -> float:
        return float(self._fn(action, state, self.params))

    def to_dict(self) -> dict:
        d = {"name": self.name, "r_max": self.r_max}
        if self.params:
            d["params"] = _plain(self.params)
        return d


@dataclass(frozen=True)
class RiskProfile:
    dimensions: tuple[str, ...] = DEFAULT_DIMENSIONS
    weights: Mapping[str, float] = field(default_factory=dict)
    indicators: Mapping[tuple[str, str], IndicatorRef] = field(default_factory=dict)

    def __post_init__(self):
        dims = tuple(self.dimensions)
        if len(set(dims)) != len(dims):
            raise ConfigInvalid("duplicate risk dimension")
        weights = {d: float(self.weights.get(d, 0.0)) for d in dims}
        extra = set(self.weights) - set(dims)
        if extra:
            raise ConfigInvalid(f"weights for undeclared dimensions: {sorted(extra)}")
        for d, w in weights.items():
            if not (math.isfinite(w) and w >= 0):
                raise ConfigInvalid(f"weight for {d!r} must be finite and >= 0, got {w!r}")
        for (_, d) in self.indicators:
            if d not in dims:
                raise ConfigInvalid(f"indicator for undeclared dimension {d!r}")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "weights", MappingProxyType(weights))
        object.__setattr__(self, "indicators", MappingProxyType(dict(self.indicators)))
        per_agent: dict[str, list[tuple[float, IndicatorRef]]] = {}
        for agent_id in sorted({a for a, _ in self.indicators}):
            per_agent[agent_id] = [
                (weights[d], self.indicators[(agent_id, d)]) for d in dims if (agent_id, d) in self.indicators
            ]
        object.__setattr__(self, "_terms", per_agent)

    def has_agent(self, agent_id: str) -> bool:
        return agent_id in self._terms

    def agent_risk(self, agent_id: str, action: ActionValue, state: EnterpriseState) -> float:
        try:
            terms = self._terms[agent_id]
        except KeyError:
            raise MissingIndicator(f"no risk indicators registered for agent {agent_id!r}") from None
        total = 0.0
        for w, ind in terms:
            total = total + w * ind(action, state)
        return total

    def required_variables(self) -> set[str]:
        out: set[str] = set()
        for ref in self.indicators.values():
            out.update(get_indicator(ref.name).requires)
        return out

    def with_weights(self, **weights: float) -> RiskProfile:
        merged = dict(self.weights)
        merged.update(weights)
        return RiskProfile(self.dimensions, merged, self.indicators)

    def to_dict(self) -> dict:
        by_agent: dict[str, dict] = {}
        for (a, d), ref in self.indicators.items():
            by_agent.setdefault(a, {})[d] = ref.to_dict()
        return {
            "dimensions": list(self.dimensions),
            "weights": dict(self.weights),
            "indicators": {a: dict(sorted(v.items())) for a, v in sorted(by_agent.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RiskProfile:
        indicators = {}
        for agent_id, dims in (d.get("indicators") or {}).items():
            for dim, ref in dims.items():
                indicators[(agent_id, dim)] = IndicatorRef(ref["name"], float(ref["r_max"]), ref.get("params") or {})
        return cls(
            dimensions=tuple(d.get("dimensions", DEFAULT_DIMENSIONS)),
            weights=d.get("weights") or {},
            indicators=indicators,
        )


@dataclass(frozen=True)
class RiskReport:
    per_agent: tuple[tuple[str, float], ...]
    total: float
    threshold: float

    @property
    def ratio(self) -> float:
        return self.total / self.threshold

    @property
    def within_bound(self) -> bool:
        return self.total <= self.threshold

    def to_dict(self) -> dict:
        return {
            "per_agent": [[a, r] for a, r in self.per_agent],
            "total": self.total,
            "threshold": self.threshold,
            "ratio": self.ratio,
            "within_bound": self.within_bound,
        }


def agent_risk(profile: RiskProfile, agent_id: str, action: ActionValue, state: EnterpriseState) -> float:
    return profile.agent_risk(agent_id, action, state)


def fold_risks(risks: Sequence[float]) -> float:
    total = 0.0
    for r in risks:
        total = total + r
    return total


def joint_risk(
    profile: RiskProfile,
    agents: Sequence[AgentSpec],
    joint: JointAction,
    state: EnterpriseState,
    tau: float,
) -> RiskReport:
    per = tuple((ag.agent_id, profile.agent_risk(ag.agent_id, joint[ag.agent_id], state)) for ag in agents)
    return RiskReport(per, fold_risks([r for _, r in per]), float(tau))


def indicator_bound_violations(
    profile: RiskProfile, agents: Sequence[AgentSpec], state: EnterpriseState
) -> list[tuple[str, str, str, float]]:
    """(agent, dimension, action, value) for every indicator output outside [0, r_max]."""
    out = []
    for ag in agents:
        acts = ag.actions if ag.is_discrete else (ag.safe_default,)
        for d in profile.dimensions:
            ref = profile.indicators.get((ag.agent_id, d))
            if ref is None:
                continue
            for a in acts:
                v = ref(a, state)
                if not (0.0 <= v <= ref.r_max) or not math.isfinite(v):
                    out.append((ag.agent_id, d, str(a), v))
    return out
