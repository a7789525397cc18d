"""Scenario definitions: roster, policy bundle, risk profile and a seeded state sampler.

The three shipped scenarios live in YAML files next to this module
(``s1.yaml``, ``s2.yaml``, ``s3.yaml``); each file documents its state
variable ranges and the reasoning behind its numbers.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from ..config import SourceMap, load_yaml, load_yaml_file
from ..domain import AgentSpec, CoordinationConfig, EnterpriseState, ScenarioId, derive_rng, derive_seed
from ..errors import ConfigInvalid, UnknownScenario
from ..policy import PolicyBundle
from ..risk import RiskProfile

SCENARIO_SCHEMA = "coordguard.scenario/1"
SHIPPED = {"S1": "s1.yaml", "S2": "s2.yaml", "S3": "s3.yaml"}

_DISTS = ("uniform", "loguniform", "integers", "bernoulli", "choice", "constant")


@dataclass(frozen=True)
class StateSampler:
    """Draws episode states from per-variable distributions.

    Variables are drawn in sorted-name order from a generator seeded by
    ``(seed, episode_index)``, so any episode can be regenerated on its own.
    """

    scenario_id: str
    variables: Mapping[str, Mapping[str, Any]]
    seed: int = 0

    def __post_init__(self):
        for name, spec in self.variables.items():
            if spec.get("dist") not in _DISTS:
                raise ConfigInvalid(f"state variable {name!r}: unknown dist {spec.get('dist')!r}")

    def sample(self, episode_index: int) -> EnterpriseState:
        if episode_index < 0:
            raise ValueError("episode_index must be >= 0")
        rng = derive_rng(self.seed, episode_index)
        values: dict[str, Any] = {}
        for name in sorted(self.variables):
            values[name] = _draw(rng, self.variables[name])
        return EnterpriseState(self.scenario_id, values, 0, derive_seed(self.seed, episode_index))

    def __call__(self, episode_index: int) -> EnterpriseState:
        return self.sample(episode_index)


def _draw(rng, spec: Mapping[str, Any]) -> Any:
    dist = spec["dist"]
    digits = spec.get("digits")
    if dist == "constant":
        return spec["value"]
    if dist == "bernoulli":
        return bool(rng.random() < float(spec["p"]))
    if dist == "integers":
        return int(rng.integers(int(spec["low"]), int(spec["high"]) + 1))
    if dist == "choice":
        vals = list(spec["values"])
        p = spec.get("p")
        return vals[int(rng.choice(len(vals), p=p))]
    u = float(rng.random())
    lo, hi = float(spec["low"]), float(spec["high"])
    if dist == "uniform":
        x = lo + (hi - lo) * u
    else:
        x = math.exp(math.log(lo) + (math.log(hi) - math.log(lo)) * u)
    return round(x, int(digits)) if digits is not None else x


@dataclass(frozen=True)
class ScenarioDefinition:
    id: str
    roster: tuple[AgentSpec, ...]
    bundle: PolicyBundle
    risk_profile: RiskProfile
    state_sampler: StateSampler
    tau_default: float = 1.0
    seed: int = 0
    coordination: Mapping[str, Any] = field(default_factory=dict)
    title: str = ""
    notes: str = ""

    def config(self, **overrides: Any) -> CoordinationConfig:
        """Run configuration: defaults, then the scenario's settings, then ``overrides``."""
        d = {"tau": self.tau_default}
        d.update(self.coordination)
        d.update(overrides)
        return CoordinationConfig.from_dict(d)

    def sample(self, episode_index: int) -> EnterpriseState:
        return self.state_sampler.sample(episode_index)

    def to_dict(self) -> dict:
        return {
            "schema": SCENARIO_SCHEMA,
            "id": self.id,
            "title": self.title,
            "notes": self.notes,
            "tau_default": self.tau_default,
            "coordination": dict(self.coordination),
            "state": {"variables": copy.deepcopy({k: dict(v) for k, v in self.state_sampler.variables.items()})},
            "agents": [a.to_dict() for a in self.roster],
            "risk": self.risk_profile.to_dict(),
            "policy": self.bundle.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping, seed: int = 0, source: SourceMap | None = None) -> ScenarioDefinition:
        src = source or SourceMap(None)
        known = {"schema", "id", "title", "notes", "tau_default", "coordination", "state", "agents", "risk", "policy"}
        if not isinstance(d, Mapping):
            raise src.error("scenario file must be a mapping")
        for k in d:
            if k not in known:
                raise src.error(f"unknown key {k!r}", [k])
        if d.get("schema", SCENARIO_SCHEMA) != SCENARIO_SCHEMA:
            raise src.error(f"unsupported schema {d.get('schema')!r}", ["schema"])
        try:
            sid = ScenarioId(d["id"]).value
        except (KeyError, ValueError):
            raise src.error(f"missing or unknown scenario id {d.get('id')!r}", ["id"]) from None

        agents = []
        for i, a in enumerate(d.get("agents") or []):
            try:
                agents.append(AgentSpec.from_dict(a))
            except (KeyError, TypeError, ValueError) as exc:
                raise src.error(f"bad agent: {exc}", ["agents", i]) from None
        if not agents:
            raise src.error("scenario needs at least one agent", ["agents"])
        try:
            profile = RiskProfile.from_dict(d.get("risk") or {})
        except (KeyError, TypeError, ValueError) as exc:
            raise src.error(f"bad risk profile: {exc}", ["risk"]) from None
        policy = d.get("policy") or {}
        for section in ("predicates", "feasibility"):
            for i, item in enumerate(policy.get(section) or []):
                try:
                    (PolicyBundle.from_dict({section: [item]}))
                except (KeyError, TypeError, ValueError) as exc:
                    raise src.error(f"bad {section[:-1] if section == 'predicates' else 'feasibility rule'}: {exc}",
                                    ["policy", section, i]) from None
        bundle = PolicyBundle.from_dict(policy)
        variables = (d.get("state") or {}).get("variables") or {}
        try:
            sampler = StateSampler(sid, {k: dict(v) for k, v in variables.items()}, seed)
        except (ValueError, TypeError, AttributeError) as exc:
            raise src.error(f"bad state sampler: {exc}", ["state"]) from None
        try:
            tau = float(d.get("tau_default", 1.0))
            coordination = dict(d.get("coordination") or {})
            CoordinationConfig.from_dict({"tau": tau, **coordination})
        except (TypeError, ValueError) as exc:
            raise src.error(f"bad coordination settings: {exc}", ["coordination"]) from None
        return cls(sid, tuple(agents), bundle, profile, sampler, tau, int(seed), coordination,
                   d.get("title", ""), d.get("notes", ""))


def load_scenario_text(text: str, seed: int = 0, filename: str | None = None) -> ScenarioDefinition:
    data, src = load_yaml(text, filename)
    return ScenarioDefinition.from_dict(data, seed, src)


def load_scenario_file(path: str | Path, seed: int = 0) -> ScenarioDefinition:
    data, src = load_yaml_file(path)
    return ScenarioDefinition.from_dict(data, seed, src)


def scenario_text(scenario_id: str) -> str:
    key = str(scenario_id).upper()
    if key not in SHIPPED:
        raise UnknownScenario(f"unknown scenario {scenario_id!r}; expected one of {sorted(SHIPPED)}")
    return resources.files(__name__).joinpath(SHIPPED[key]).read_text(encoding="utf-8")


def build_scenario(scenario_id: str | ScenarioId, seed: int = 0) -> ScenarioDefinition:
    sid = scenario_id.value if isinstance(scenario_id, ScenarioId) else str(scenario_id)
    return load_scenario_text(scenario_text(sid), seed, SHIPPED.get(sid.upper()))


def sample_episode_states(definition: ScenarioDefinition, episode_index: int) -> EnterpriseState:
    return definition.sample(episode_index)
