"""Core data model: states, actions, agents, joint actions and run configuration.

All types are immutable once built and safe to share between threads.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigInvalid, OracleCapExceeded
from .registry import get_utility, has_utility

DEFAULT_ORACLE_CAP = 10**6

_SCALAR_TYPES = (str, int, float, bool, type(None))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


class ScenarioId(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    SYNTHETIC = "Synthetic"


class ActionKind(str, enum.Enum):
    DISCRETE = "Discrete"
    CONTINUOUS = "Continuous"


class DualRule(str, enum.Enum):
    ALG1_RATIO = "Alg1Ratio"
    HINGE_ASCENT = "HingeAscent"
    DIMINISHING_HINGE = "DiminishingHinge"


# ---------------------------------------------------------------------------
# seeds


def derive_seed(seed: int, *counters: int) -> int:
    """64-bit seed derived from ``seed`` and a counter path (episode, step, agent...).

    Independent of call order, so serial and parallel runs draw identical streams.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(c) for c in counters))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def derive_rng(seed: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(c) for c in counters)))


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class EnterpriseState:
    scenario_id: str
    variables: Mapping[str, Any]
    step_index: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        ScenarioId(self.scenario_id)
        if self.step_index < 0:
            raise ValueError("step_index must be non-negative")
        for k, v in self.variables.items():
            if not isinstance(k, str) or not isinstance(v, _SCALAR_TYPES):
                raise TypeError(f"state variable {k!r} must be a scalar, got {type(v).__name__}")
        object.__setattr__(self, "variables", MappingProxyType(dict(self.variables)))

    def get(self, name: str, default: Any = None) -> Any:
        if name == "step_index":
            return self.step_index
        return self.variables.get(name, default)

    def next_step(self, **updates: Any) -> EnterpriseState:
        variables = dict(self.variables)
        variables.update(updates)
        return replace(self, variables=variables, step_index=self.step_index + 1)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "variables": dict(sorted(self.variables.items())),
            "step_index": self.step_index,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> EnterpriseState:
        return cls(
            scenario_id=d["scenario_id"],
            variables=d.get("variables", {}),
            step_index=int(d.get("step_index", 0)),
            rng_seed=int(d.get("rng_seed", 0)),
        )


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class ActionValue:
    """A single agent's action: a labelled discrete choice or a real vector.

    Use :meth:`discrete` / :meth:`continuous` rather than the raw constructor.
    ``attributes`` is kept as a sorted tuple of pairs so the value is hashable.
    """

    kind: ActionKind
    label: str | None = None
    attributes: tuple[tuple[str, Any], ...] = ()
    vector: tuple[float, ...] | None = None
    sort_key: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        kind = ActionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ActionKind.DISCRETE:
            if not isinstance(self.label, str) or self.vector is not None:
                raise ValueError("discrete action needs a string label and no vector")
            attrs = tuple(sorted((str(k), v) for k, v in dict(self.attributes).items()))
            for k, v in attrs:
                if not isinstance(v, _SCALAR_TYPES):
                    raise TypeError(f"attribute {k!r} must be a scalar")
                if isinstance(v, float) and not math.isfinite(v):
                    raise ValueError(f"attribute {k!r} must be finite")
            object.__setattr__(self, "attributes", attrs)
            object.__setattr__(self, "sort_key", (0, self.label, canonical_json(dict(attrs))))
        else:
            if self.vector is None or self.label is not None or self.attributes:
                raise ValueError("continuous action needs a vector and nothing else")
            vec = tuple(float(x) for x in self.vector)
            if not vec:
                raise ValueError("continuous action vector must be non-empty")
            if not all(math.isfinite(x) for x in vec):
                raise ValueError("continuous action vector must be finite")
            object.__setattr__(self, "vector", vec)
            object.__setattr__(self, "sort_key", (1, vec))

    @classmethod
    def discrete(cls, label: str, attrs: Mapping[str, Any] | None = None) -> ActionValue:
        return cls(ActionKind.DISCRETE, label=label, attributes=tuple((attrs or {}).items()))

    @classmethod
    def continuous(cls, vector: Iterable[float]) -> ActionValue:
        return cls(ActionKind.CONTINUOUS, vector=tuple(vector))

    @property
    def is_discrete(self) -> bool:
        return self.kind is ActionKind.DISCRETE

    @property
    def dim(self) -> int:
        return len(self.vector) if self.vector is not None else 0

    @property
    def attrs(self) -> dict[str, Any]:
        return dict(self.attributes)

    def get(self, name: str, default: Any = None) -> Any:
        for k, v in self.attributes:
            if k == name:
                return v
        return default

    def to_dict(self) -> dict:
        if self.kind is ActionKind.DISCRETE:
            return {"kind": "Discrete", "label": self.label, "attrs": dict(self.attributes)}
        return {"kind": "Continuous", "vector": list(self.vector)}

    @classmethod
    def from_dict(cls, d: Mapping) -> ActionValue:
        unknown = set(d) - {"kind", "label", "attrs", "vector"}
        if unknown:
            raise ValueError(f"unknown action keys {sorted(unknown)}")
        kind = ActionKind(d.get("kind", "Discrete"))
        if kind is ActionKind.DISCRETE:
            return cls.discrete(d["label"], d.get("attrs") or {})
        return cls.continuous(d["vector"])

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def __str__(self) -> str:
        if self.kind is ActionKind.DISCRETE:
            inner = ",".join(f"{k}={v}" for k, v in self.attributes)
            return f"{self.label}({inner})"
        return "(" + ", ".join(f"{x:g}" for x in self.vector) + ")"


# ---------------------------------------------------------------------------
# agents


@dataclass(frozen=True)
class AgentSpec:
    """One agent: its action space, utility reference and safe default.

    Discrete agents list ``actions`` (stored in canonical order); continuous
    agents give ``box`` bounds per dimension. ``utility`` names a registered
    function, called as ``fn(state, action, utility_params)``.
    """

    agent_id: str
    utility: str
    safe_default: ActionValue
    actions: tuple[ActionValue, ...] | None = None
    box: tuple[tuple[float, float], ...] | None = None
    utility_params: Mapping[str, Any] = field(default_factory=dict)
    role: str = ""
    attribute_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if (self.actions is None) == (self.box is None):
            raise ValueError(f"agent {self.agent_id!r}: give exactly one of actions/box")
        if self.actions is not None:
            acts = tuple(sorted(self.actions, key=lambda a: a.sort_key))
            if any(not a.is_discrete for a in acts):
                raise ValueError(f"agent {self.agent_id!r}: discrete action space holds a vector")
            object.__setattr__(self, "actions", acts)
        else:
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            if any(not (lo < hi) for lo, hi in box):
                raise ValueError(f"agent {self.agent_id!r}: degenerate box bounds")
            object.__setattr__(self, "box", box)
        object.__setattr__(self, "utility_params", MappingProxyType(dict(self.utility_params)))
        object.__setattr__(
            self,
            "attribute_ranges",
            MappingProxyType({k: (float(v[0]), float(v[1])) for k, v in dict(self.attribute_ranges).items()}),
        )

    def __hash__(self):
        return hash(self.agent_id)

    @property
    def is_discrete(self) -> bool:
        return self.actions is not None

    @property
    def dim(self) -> int:
        return len(self.box) if self.box is not None else 0

    def contains(self, action: ActionValue) -> bool:
        """Membership in the static action space A_i."""
        if self.actions is not None:
            return action in self.actions
        if action.is_discrete or action.dim != len(self.box):
            return False
        return all(lo <= x <= hi for x, (lo, hi) in zip(action.vector, self.box))

    def utility_of(self, state: EnterpriseState, action: ActionValue) -> float:
        return float(get_utility(self.utility).fn(state, action, self.utility_params))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"agent_id": self.agent_id, "role": self.role, "utility": self.utility}
        if self.utility_params:
            d["utility_params"] = _plain(self.utility_params)
        if self.actions is not None:
            d["action_space"] = [a.to_dict() for a in self.actions]
        else:
            d["action_space"] = {"box": [list(b) for b in self.box]}
        d["safe_default"] = self.safe_default.to_dict()
        if self.attribute_ranges:
            d["attribute_ranges"] = {k: list(v) for k, v in self.attribute_ranges.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> AgentSpec:
        space = d["action_space"]
        actions = box = None
        if isinstance(space, Mapping):
            box = tuple(tuple(b) for b in space["box"])
        else:
            actions = tuple(ActionValue.from_dict(a) for a in space)
        return cls(
            agent_id=d["agent_id"],
            utility=d["utility"],
            safe_default=ActionValue.from_dict(d["safe_default"]),
            actions=actions,
            box=box,
            utility_params=d.get("utility_params") or {},
            role=d.get("role", ""),
            attribute_ranges={k: tuple(v) for k, v in (d.get("attribute_ranges") or {}).items()},
        )


def _plain(obj: Any) -> Any:
    """Deep-copy mapping proxies and tuples into plain dicts/lists for serialisation."""
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass(frozen=True)
class JointAction:
    entries: tuple[tuple[str, ActionValue], ...]

    def __post_init__(self):
        entries = tuple((str(a), v) for a, v in self.entries)
        ids = [a for a, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate agent ids in joint action")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, agents: Sequence[AgentSpec], actions: Sequence[ActionValue]) -> JointAction:
        if len(agents) != len(actions):
            raise ValueError(f"expected {len(agents)} actions, got {len(actions)}")
        return cls(tuple((ag.agent_id, a) for ag, a in zip(agents, actions)))

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.entries)

    @property
    def actions(self) -> tuple[ActionValue, ...]:
        return tuple(v for _, v in self.entries)

    def as_dict(self) -> dict[str, ActionValue]:
        return dict(self.entries)

    def __getitem__(self, agent_id: str) -> ActionValue:
        for a, v in self.entries:
            if a == agent_id:
                return v
        raise KeyError(agent_id)

    def __len__(self) -> int:
        return len(self.entries)

    def matches(self, agents: Sequence[AgentSpec]) -> bool:
        return self.agent_ids == tuple(a.agent_id for a in agents)

    def to_dict(self) -> list:
        return [[a, v.to_dict()] for a, v in self.entries]

    @classmethod
    def from_dict(cls, d: Sequence) -> JointAction:
        return cls(tuple((a, ActionValue.from_dict(v)) for a, v in d))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class CoordinationConfig:
    tau: float = 1.0
    lambda0: float = 0.0
    delta: float = 0.25
    k_max: int = 10
    dual_update_rule: DualRule = DualRule.ALG1_RATIO
    eta0: float = 1.0
    alpha: float = 0.2
    oracle_cap: int = DEFAULT_ORACLE_CAP

    def __post_init__(self):
        try:
            object.__setattr__(self, "dual_update_rule", DualRule(self.dual_update_rule))
        except ValueError:
            raise ConfigInvalid(f"unknown dual_update_rule {self.dual_update_rule!r}") from None
        self.validate()

    def validate(self) -> None:
        def finite(x):
            return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)

        if not finite(self.tau) or self.tau <= 0:
            raise ConfigInvalid(f"tau must be > 0, got {self.tau!r}")
        if not finite(self.lambda0) or self.lambda0 < 0:
            raise ConfigInvalid(f"lambda0 must be >= 0, got {self.lambda0!r}")
        if not finite(self.delta) or self.delta <= 0:
            raise ConfigInvalid(f"delta must be > 0, got {self.delta!r}")
        if not isinstance(self.k_max, int) or isinstance(self.k_max, bool) or self.k_max < 1:
            raise ConfigInvalid(f"k_max must be an integer >= 1, got {self.k_max!r}")
        if not finite(self.eta0) or self.eta0 <= 0:
            raise ConfigInvalid(f"eta0 must be > 0, got {self.eta0!r}")
        if not finite(self.alpha) or self.alpha <= 0:
            raise ConfigInvalid(f"alpha must be > 0, got {self.alpha!r}")
        if not isinstance(self.oracle_cap, int) or self.oracle_cap < 1:
            raise ConfigInvalid(f"oracle_cap must be a positive integer, got {self.oracle_cap!r}")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "lambda0": self.lambda0,
            "delta": self.delta,
            "k_max": self.k_max,
            "dual_update_rule": self.dual_update_rule.value,
            "eta0": self.eta0,
            "alpha": self.alpha,
            "oracle_cap": self.oracle_cap,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CoordinationConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        for k in ("tau", "lambda0", "delta", "eta0", "alpha"):
            if k in kw and isinstance(kw[k], int) and not isinstance(kw[k], bool):
                kw[k] = float(kw[k])
        return cls(**kw)


# ---------------------------------------------------------------------------
# roster validation


@dataclass(frozen=True)
class Finding:
    code: str
    agent_id: str | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.findings

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]


def validate_roster(
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    *,
    bundle=None,
    risk_profile=None,
) -> ValidationReport:
    """Check a roster against a state (and optionally a bundle and risk profile).

    Never raises on bad input; every problem becomes a :class:`Finding`.
    """
    if not agents:
        raise ValueError("validate_roster needs a non-empty agent list")
    findings: list[Finding] = []
    seen: set[str] = set()
    for ag in agents:
        if ag.agent_id in seen:
            findings.append(Finding("DuplicateAgentId", ag.agent_id, "agent id used more than once"))
        seen.add(ag.agent_id)
        if not has_utility(ag.utility):
            findings.append(Finding("UnknownUtility", ag.agent_id, f"utility {ag.utility!r} is not registered"))
        if not ag.contains(ag.safe_default):
            findings.append(Finding("SafeDefaultOutsideActionSpace", ag.agent_id, str(ag.safe_default)))

    needed: set[str] = set()
    for ag in agents:
        if has_utility(ag.utility):
            needed.update(get_utility(ag.utility).requires)
    if bundle is not None:
        needed.update(bundle.referenced_variables())
        missing_rules = bundle.agents_without_rules([a.agent_id for a in agents])
        for aid in missing_rules:
            findings.append(Finding("MissingFeasibilityRule", aid, "no feasibility rule for agent"))
    if risk_profile is not None:
        needed.update(risk_profile.required_variables())
    for name in sorted(needed):
        if name != "step_index" and name not in state.variables:
            findings.append(Finding("MissingStateVariable", None, name))

    if risk_profile is not None:
        for ag in agents:
            try:
                r = risk_profile.agent_risk(ag.agent_id, ag.safe_default, state)
            except Exception as exc:  # reported, never raised
                findings.append(Finding("RiskEvaluationError", ag.agent_id, repr(exc)))
                continue
            if r != 0.0:
                findings.append(Finding("UnsafeDefault", ag.agent_id, f"R(safe_default) = {r!r}"))
    return ValidationReport(tuple(findings))


# ---------------------------------------------------------------------------
# enumeration


def joint_space_size(agents: Sequence[AgentSpec]) -> int:
    size = 1
    for ag in agents:
        if not ag.is_discrete:
            raise ValueError(f"agent {ag.agent_id!r} is continuous; joint space is not enumerable")
        size *= len(ag.actions)
    return size


def enumerate_joint_actions(agents: Sequence[AgentSpec], cap: int = DEFAULT_ORACLE_CAP) -> Iterator[JointAction]:
    """Every element of A_1 x ... x A_n once, in lexicographic (canonical) order."""
    size = joint_space_size(agents)
    if size > cap:
        raise OracleCapExceeded(f"joint space has {size} elements, cap is {cap}")
    ids = [ag.agent_id for ag in agents]
    for combo in itertools.product(*(ag.actions for ag in agents)):
        yield JointAction(tuple(zip(ids, combo)))
