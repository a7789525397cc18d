"""Joint policy feasibility (the predicate conjunction) and per-agent execution feasibility.

A :class:`PolicyBundle` holds the joint predicates and per-agent
:class:`FeasibilityRule` sets. Predicates see the state as well as the joint
action; a predicate that references exactly one agent is a *unary slice* and
is enforced by projection, everything else is left to negotiation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from .domain import ActionValue, AgentSpec, EnterpriseState, JointAction, _plain
from .errors import ConfigInvalid, SchemaMismatch
from .expr import Compiled, ExpressionError, bool_value, compile_expr


class PredicateKind(str, enum.Enum):
    APPROVAL_CHAIN = "ApprovalChain"
    SEGREGATION_OF_DUTIES = "SegregationOfDuties"
    TEMPORAL_ORDER = "TemporalOrder"
    THRESHOLD_GATE = "ThresholdGate"
    CUSTOM = "Custom"


def _labels(v: Any) -> frozenset[str]:
    if isinstance(v, str):
        return frozenset([v])
    return frozenset(v or ())


def _expr(tree: Any, where: str) -> Compiled:
    try:
        return compile_expr(tree)
    except ExpressionError as exc:
        raise ConfigInvalid(f"{where}: {exc} at {'/'.join(map(str, exc.path)) or '<root>'}") from None


_TRUE = compile_expr(True)


@dataclass(frozen=True)
class PolicyPredicate:
    """One joint predicate. ``params`` and ``expression`` keep the declarative form."""

    predicate_id: str
    kind: PredicateKind
    params: Mapping[str, Any] = field(default_factory=dict)
    expression: Any = None
    _check: Any = field(default=None, compare=False, repr=False)
    agents: frozenset[str] = field(default=frozenset(), compare=False, repr=False)
    variables: frozenset[str] = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        kind = PredicateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        check, agents, variables = _build_check(self.predicate_id, kind, dict(self.params), self.expression)
        object.__setattr__(self, "_check", check)
        object.__setattr__(self, "agents", frozenset(agents))
        object.__setattr__(self, "variables", frozenset(variables))

    def holds(self, state: EnterpriseState, joint: Mapping[str, ActionValue]) -> bool:
        return self._check(state, joint)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"predicate_id": self.predicate_id, "kind": self.kind.value}
        if self.params:
            d["params"] = _plain(self.params)
        if self.expression is not None:
            d["expression"] = _plain(self.expression)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> PolicyPredicate:
        return cls(
            predicate_id=d["predicate_id"],
            kind=d["kind"],
            params=d.get("params") or {},
            expression=d.get("expression"),
        )


def _build_check(pid: str, kind: PredicateKind, p: dict, expression: Any):
    where = f"predicate {pid!r}"
    if kind is PredicateKind.CUSTOM:
        if expression is None:
            raise ConfigInvalid(f"{where}: Custom predicate needs an expression")
        c = _expr(expression, where)
        return c, c.agents, c.variables

    if kind is PredicateKind.SEGREGATION_OF_DUTIES:
        pairs = [tuple(x) for x in p.get("pairs", [])]
        if not pairs or any(len(x) != 2 for x in pairs):
            raise ConfigInvalid(f"{where}: 'pairs' must list agent-id pairs")
        attr = p.get("attr", "signer")

        def sod(state, joint):
            for a, b in pairs:
                x, y = joint.get(a), joint.get(b)
                if x is None or y is None:
                    continue
                vx, vy = x.get(attr), y.get(attr)
                if vx is not None and vy is not None and vx == vy:
                    return False
            return True

        return sod, {a for pr in pairs for a in pr}, set()

    if kind is PredicateKind.TEMPORAL_ORDER:
        try:
            before, after = p["before"], p["after"]
            b_agent, b_labels = before["agent"], _labels(before["labels"])
            a_agent, a_labels = after["agent"], _labels(after["labels"])
        except (KeyError, TypeError):
            raise ConfigInvalid(f"{where}: TemporalOrder needs before/after with agent and labels") from None

        def order(state, joint):
            x = joint.get(a_agent)
            if x is None or x.label not in a_labels:
                return True
            y = joint.get(b_agent)
            return y is not None and y.label in b_labels

        return order, {b_agent, a_agent}, set()

    if kind is PredicateKind.THRESHOLD_GATE:
        try:
            agent, labels = p["agent"], _labels(p["labels"])
        except KeyError:
            raise ConfigInvalid(f"{where}: ThresholdGate needs agent and labels") from None
        value = _expr(p.get("value", {"var": "amount"}), where)
        threshold = _expr(p.get("threshold", 0), where)
        when = _expr(p.get("when", True), where)
        strict = p.get("op", "gt") == "gt"

        def gate(state, joint):
            if not bool_value(when.fn(state, joint)):
                return True
            v, t = value.fn(state, joint), threshold.fn(state, joint)
            if not isinstance(v, (int, float)) or not isinstance(t, (int, float)):
                return True
            exceeded = v > t if strict else v >= t
            if not exceeded:
                return True
            a = joint.get(agent)
            return a is not None and a.label in labels

        agents = {agent} | value.agents | threshold.agents | when.agents
        return gate, agents, value.variables | threshold.variables | when.variables

    if kind is PredicateKind.APPROVAL_CHAIN:
        chain = list(p.get("chain", []))
        if not chain:
            raise ConfigInvalid(f"{where}: ApprovalChain needs a non-empty 'chain'")
        raw_labels = p.get("approve_labels", ["approve"])
        if isinstance(raw_labels, Mapping):
            approve = {a: _labels(raw_labels.get(a, ["approve"])) for a in chain}
        else:
            approve = {a: _labels(raw_labels) for a in chain}
        trigger = _expr(p.get("trigger", True), where)
        required = {a: _expr(e, where) for a, e in (p.get("required") or {a: True for a in chain}).items()}
        unknown = set(required) - set(chain)
        if unknown:
            raise ConfigInvalid(f"{where}: 'required' names agents outside the chain: {sorted(unknown)}")

        def chain_ok(state, joint):
            if not bool_value(trigger.fn(state, joint)):
                return True
            approved = []
            for a in chain:
                x = joint.get(a)
                approved.append(x is not None and x.label in approve[a])
            for a, ok in zip(chain, approved):
                if not ok and a in required and bool_value(required[a].fn(state, joint)):
                    return False
            # approvals must form a prefix of the chain
            seen_gap = False
            for ok in approved:
                if not ok:
                    seen_gap = True
                elif seen_gap:
                    return False
            return True

        agents = set(chain) | trigger.agents
        variables = set(trigger.variables)
        for c in required.values():
            agents |= c.agents
            variables |= c.variables
        return chain_ok, agents, variables

    raise ConfigInvalid(f"{where}: unsupported kind {kind!r}")


# ---------------------------------------------------------------------------
# execution feasibility


@dataclass(frozen=True)
class FeasibilityRule:
    """perm / avail / window for one agent.

    ``perm`` is a list of grants ``{"labels": [...] | "*", "when": expr}``;
    any grant whose condition holds permits its labels. ``avail`` and
    ``window`` gate the labels in ``applies_to`` (default: every action except
    the safe default). ``window`` is ``{"open": k0, "close": k1}`` on the step
    index (half-open) or ``{"flag": var}`` on a boolean state variable.
    ``halfspaces`` (``[[normal, offset], ...]``) restrict continuous agents.
    """

    agent_id: str
    perm: tuple = ({"labels": "*"},)
    avail: Any = True
    window: Mapping[str, Any] | None = None
    applies_to: tuple[str, ...] | None = None
    halfspaces: tuple[tuple[tuple[float, ...], float], ...] = ()
    _grants: Any = field(default=None, compare=False, repr=False)
    _avail: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        where = f"feasibility rule for {self.agent_id!r}"
        grants = []
        for g in self.perm:
            if isinstance(g, (str, list, tuple)):
                g = {"labels": g}
            labels = g.get("labels", "*")
            grants.append((None if labels == "*" else _labels(labels), _expr(g.get("when", True), where)))
        object.__setattr__(self, "_grants", tuple(grants))
        object.__setattr__(self, "_avail", _expr(self.avail, where))
        if self.window is not None:
            w = dict(self.window)
            if not ("flag" in w or ("open" in w and "close" in w)):
                raise ConfigInvalid(f"{where}: window needs 'flag' or 'open'/'close'")
            object.__setattr__(self, "window", w)
        if self.applies_to is not None:
            object.__setattr__(self, "applies_to", tuple(self.applies_to))
        hs = []
        for normal, offset in self.halfspaces:
            normal = tuple(float(x) for x in normal)
            if not any(normal):
                raise ConfigInvalid(f"{where}: halfspace normal must be non-zero")
            hs.append((normal, float(offset)))
        object.__setattr__(self, "halfspaces", tuple(hs))

    @property
    def variables(self) -> set[str]:
        out = set(self._avail.variables)
        for _, w in self._grants:
            out |= w.variables
        if self.window and "flag" in self.window:
            out.add(self.window["flag"])
        return out

    def window_open(self, state: EnterpriseState) -> bool:
        w = self.window
        if w is None:
            return True
        if "flag" in w:
            return state.variables.get(w["flag"]) is True
        return w["open"] <= state.step_index < w["close"]

    def gates_open(self, state: EnterpriseState) -> bool:
        return bool_value(self._avail.fn(state, {})) and self.window_open(state)

    def permits(self, label: str | None, state: EnterpriseState) -> bool:
        for labels, when in self._grants:
            if (labels is None or label in labels) and bool_value(when.fn(state, {})):
                return True
        return False

    def admits(self, agent: AgentSpec, action: ActionValue, state: EnterpriseState, gates: bool | None = None) -> bool:
        if not self.permits(action.label, state):
            return False
        gated = action != agent.safe_default if self.applies_to is None else action.label in self.applies_to
        if not gated:
            return True
        return self.gates_open(state) if gates is None else gates

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"agent_id": self.agent_id, "perm": _plain(list(self.perm))}
        if self.avail is not True:
            d["avail"] = _plain(self.avail)
        if self.window is not None:
            d["window"] = dict(self.window)
        if self.applies_to is not None:
            d["applies_to"] = list(self.applies_to)
        if self.halfspaces:
            d["halfspaces"] = [[list(n), b] for n, b in self.halfspaces]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> FeasibilityRule:
        perm = d.get("perm", [{"labels": "*"}])
        if isinstance(perm, (str, Mapping)):
            perm = [perm]
        return cls(
            agent_id=d["agent_id"],
            perm=tuple(perm),
            avail=d.get("avail", True),
            window=d.get("window"),
            applies_to=tuple(d["applies_to"]) if d.get("applies_to") is not None else None,
            halfspaces=tuple((tuple(n), b) for n, b in d.get("halfspaces", [])),
        )


@dataclass(frozen=True)
class FeasibleSet:
    """F_i(s): an explicit action tuple, a convex region, or the degenerate {safe_default}."""

    agent_id: str
    actions: tuple[ActionValue, ...] | None = None
    box: tuple[tuple[float, float], ...] | None = None
    halfspaces: tuple[tuple[tuple[float, ...], float], ...] = ()
    safe_default: ActionValue | None = None

    @property
    def degenerate(self) -> bool:
        return self.actions is None and self.box is None

    def contains(self, action: ActionValue, tol: float = 1e-9) -> bool:
        if self.actions is not None:
            return action in self.actions
        if action == self.safe_default:
            return True
        if self.box is None or action.vector is None or len(action.vector) != len(self.box):
            return False
        x = action.vector
        if any(not (lo <= v <= hi) for v, (lo, hi) in zip(x, self.box)):
            return False
        for normal, offset in self.halfspaces:
            if sum(n * v for n, v in zip(normal, x)) > offset + tol * (1.0 + abs(offset)):
                return False
        return True


class PhiResult(NamedTuple):
    value: int
    verdicts: tuple[tuple[str, bool], ...]

    @property
    def failing(self) -> list[str]:
        return [pid for pid, ok in self.verdicts if not ok]

    def __bool__(self) -> bool:
        return self.value == 1


@dataclass(frozen=True)
class PolicyBundle:
    predicates: tuple[PolicyPredicate, ...] = ()
    feasibility: tuple[FeasibilityRule, ...] = ()
    bundle_version: str = "0"

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        object.__setattr__(self, "feasibility", tuple(self.feasibility))
        ids = [p.predicate_id for p in self.predicates]
        if len(set(ids)) != len(ids):
            raise ConfigInvalid("duplicate predicate_id in bundle")
        rules: dict[str, list[FeasibilityRule]] = {}
        for r in self.feasibility:
            rules.setdefault(r.agent_id, []).append(r)
        object.__setattr__(self, "_rules", {k: tuple(v) for k, v in rules.items()})
        unary: dict[str, list[PolicyPredicate]] = {}
        for p in self.predicates:
            if len(p.agents) == 1:
                (a,) = p.agents
                unary.setdefault(a, []).append(p)
        object.__setattr__(self, "_unary", {k: tuple(v) for k, v in unary.items()})

    @property
    def agent_ids(self) -> frozenset[str]:
        return frozenset(self._rules)

    def rules_for(self, agent_id: str) -> tuple[FeasibilityRule, ...]:
        return self._rules.get(agent_id, ())

    def unary_predicates(self, agent_id: str) -> tuple[PolicyPredicate, ...]:
        return self._unary.get(agent_id, ())

    def joint_predicates(self) -> tuple[PolicyPredicate, ...]:
        return tuple(p for p in self.predicates if len(p.agents) != 1)

    def agents_without_rules(self, agent_ids: Iterable[str]) -> list[str]:
        return [a for a in agent_ids if a not in self._rules]

    def referenced_variables(self) -> set[str]:
        out: set[str] = set()
        for p in self.predicates:
            out |= p.variables
        for r in self.feasibility:
            out |= r.variables
        return out

    def closure_problems(self, agent_ids: Iterable[str], variables: Iterable[str]) -> list[str]:
        """Names referenced by the bundle that the roster/state schema cannot resolve."""
        ids, names = set(agent_ids), set(variables) | {"step_index"}
        problems = []
        for p in self.predicates:
            for a in sorted(p.agents - ids):
                problems.append(f"predicate {p.predicate_id!r} references unknown agent {a!r}")
            for v in sorted(p.variables - names):
                problems.append(f"predicate {p.predicate_id!r} references unknown variable {v!r}")
        for r in self.feasibility:
            if r.agent_id not in ids:
                problems.append(f"feasibility rule for unknown agent {r.agent_id!r}")
            for v in sorted(r.variables - names):
                problems.append(f"feasibility rule for {r.agent_id!r} references unknown variable {v!r}")
        return problems

    def to_dict(self) -> dict:
        return {
            "bundle_version": self.bundle_version,
            "predicates": [p.to_dict() for p in self.predicates],
            "feasibility": [r.to_dict() for r in self.feasibility],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> PolicyBundle:
        return cls(
            predicates=tuple(PolicyPredicate.from_dict(p) for p in d.get("predicates") or ()),
            feasibility=tuple(FeasibilityRule.from_dict(r) for r in d.get("feasibility") or ()),
            bundle_version=str(d.get("bundle_version", "0")),
        )


# ---------------------------------------------------------------------------
# operations


def eval_phi(bundle: PolicyBundle, state: EnterpriseState, joint: JointAction) -> PhiResult:
    """Φ(joint) with one verdict per predicate, in bundle order."""
    unknown = [a for a in joint.agent_ids if a not in bundle.agent_ids]
    if unknown:
        raise SchemaMismatch(f"joint action references agents unknown to the bundle: {unknown}")
    jm = joint.as_dict()
    verdicts = tuple((p.predicate_id, bool(p.holds(state, jm))) for p in bundle.predicates)
    return PhiResult(int(all(ok for _, ok in verdicts)), verdicts)


def feasible_set(bundle: PolicyBundle, state: EnterpriseState, agent: AgentSpec) -> FeasibleSet:
    """F_i(s). Always contains the agent's safe default."""
    rules = bundle.rules_for(agent.agent_id)
    if agent.is_discrete:
        gates = [r.gates_open(state) for r in rules]
        keep = tuple(
            a
            for a in agent.actions
            if a == agent.safe_default or any(r.admits(agent, a, state, g) for r, g in zip(rules, gates))
        )
        return FeasibleSet(agent.agent_id, actions=keep, safe_default=agent.safe_default)
    # continuous: the first rule whose perm and gates hold defines the region
    for r in rules:
        if r.permits(None, state) and r.gates_open(state):
            return FeasibleSet(agent.agent_id, box=agent.box, halfspaces=r.halfspaces, safe_default=agent.safe_default)
    return FeasibleSet(agent.agent_id, safe_default=agent.safe_default)


def in_feasible_set(bundle: PolicyBundle, state: EnterpriseState, agent: AgentSpec, action: ActionValue) -> bool:
    """Single-action membership test for F_i(s), evaluated directly from the rules."""
    if action == agent.safe_default:
        return True
    if not agent.contains(action):
        return False
    if agent.is_discrete:
        return any(r.admits(agent, action, state) for r in bundle.rules_for(agent.agent_id))
    return feasible_set(bundle, state, agent).contains(action)


def satisfies_unary(bundle: PolicyBundle, state: EnterpriseState, agent_id: str, action: ActionValue) -> bool:
    jm = {agent_id: action}
    return all(p.holds(state, jm) for p in bundle.unary_predicates(agent_id))


def joint_feasible_region(
    bundle: PolicyBundle,
    state: EnterpriseState,
    agents: Sequence[AgentSpec],
    joint: JointAction,
) -> bool:
    """True iff every a_i ∈ F_i(s) and Φ(joint) = 1."""
    if not joint.matches(agents):
        raise SchemaMismatch("joint action does not match the roster")
    for ag, a in zip(agents, joint.actions):
        if not in_feasible_set(bundle, state, ag, a):
            return False
    return eval_phi(bundle, state, joint).value == 1
