"""Nearest-feasible-action projection.

Continuous agents are projected in Euclidean norm onto box ∩ halfspaces
(plain clamp when there are no halfspaces, Dykstra's alternating projections
otherwise). Discrete agents are projected by exhaustive minimum edit distance
over the per-agent constraint set C_i(s) = F_i(s) ∩ {unary policy slices}.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import kernels
from .domain import ActionValue, AgentSpec, EnterpriseState
from .errors import DimensionMismatch, NonConvergence
from .policy import PolicyBundle, feasible_set, satisfies_unary

PROJECTION_TOL = 1e-9
MAX_SWEEPS = 10_000
CERTIFY_MAX_DIM = 8


class Outcome(str, enum.Enum):
    UNCHANGED = "Unchanged"
    PROJECTED = "Projected"
    REJECT = "Reject"


@dataclass(frozen=True)
class ProjectionResult:
    outcome: Outcome
    action: ActionValue | None
    distance: float = 0.0
    candidates_examined: int = 0

    @property
    def rejected(self) -> bool:
        return self.outcome is Outcome.REJECT


@dataclass(frozen=True)
class EditDistanceSpec:
    """Label change costs ``label_cost``; numeric attributes cost |Δ| / range;
    categorical mismatches and missing-vs-present attributes cost 1."""

    label_cost: float = 1.0
    ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def for_agent(cls, agent: AgentSpec) -> EditDistanceSpec:
        ranges: dict[str, tuple[float, float]] = {}
        if agent.actions is not None:
            ranges.update(_observed_ranges(agent.actions))
        ranges.update(agent.attribute_ranges)
        return cls(ranges=ranges)

    def scale(self, attr: str) -> float:
        lo, hi = self.ranges.get(attr, (0.0, 1.0))
        span = hi - lo
        return span if span > 0 else 1.0


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _observed_ranges(actions: Sequence[ActionValue]) -> dict[str, tuple[float, float]]:
    vals: dict[str, list[float]] = {}
    for a in actions:
        for k, v in a.attributes:
            if _is_num(v):
                vals.setdefault(k, []).append(float(v))
    return {k: (min(v), max(v)) for k, v in vals.items()}


# ---------------------------------------------------------------------------
# continuous


def _in_region(x: Sequence[float], box, halfspaces, tol: float) -> bool:
    if any(not (lo <= v <= hi) for v, (lo, hi) in zip(x, box)):
        return False
    for normal, offset in halfspaces:
        s = 0.0
        for n, v in zip(normal, x):
            s = s + n * v
        if s > offset + tol * (1.0 + abs(offset)):
            return False
    return True


def polytope_nonempty(box, halfspaces, tol: float = PROJECTION_TOL) -> bool:
    """Exact emptiness test for box ∩ halfspaces by vertex enumeration.

    The set is bounded, so it is non-empty iff it has a vertex: a point where
    ``d`` linearly independent constraints are tight and all others hold.
    """
    d = len(box)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    if not halfspaces:
        return True
    if _in_region((lo + hi) / 2.0, box, halfspaces, tol):
        return True
    normals = np.array([h[0] for h in halfspaces], dtype=float)
    offsets = np.array([h[1] for h in halfspaces], dtype=float)
    m = len(halfspaces)
    for k in range(0, min(m, d) + 1):
        for hs_idx in itertools.combinations(range(m), k):
            for fixed in itertools.combinations(range(d), d - k):
                free = [i for i in range(d) if i not in fixed]
                for sides in itertools.product((0, 1), repeat=d - k):
                    x = np.empty(d)
                    for i, side in zip(fixed, sides):
                        x[i] = hi[i] if side else lo[i]
                    if k:
                        A = normals[list(hs_idx)][:, free]
                        rhs = offsets[list(hs_idx)] - normals[list(hs_idx)][:, list(fixed)] @ x[list(fixed)]
                        if np.linalg.cond(A) > 1e12:
                            continue
                        x[free] = np.linalg.solve(A, rhs)
                    if _in_region(x, box, halfspaces, tol):
                        return True
    return False


def project_continuous(
    action: Sequence[float],
    box: Sequence[tuple[float, float]],
    halfspaces: Sequence[tuple[Sequence[float], float]] = (),
    *,
    tol: float = PROJECTION_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> ProjectionResult:
    x = [float(v) for v in action]
    d = len(box)
    if len(x) != d:
        raise DimensionMismatch(f"action has dimension {len(x)}, box has {d}")
    if not all(math.isfinite(v) for v in x):
        raise ValueError("action must be finite")
    if any(not (lo < hi) for lo, hi in box):
        raise ValueError("box must be non-degenerate")
    for normal, _ in halfspaces:
        if len(normal) != d:
            raise DimensionMismatch(f"halfspace normal has dimension {len(normal)}, expected {d}")

    if _in_region(x, box, halfspaces, tol):
        return ProjectionResult(Outcome.UNCHANGED, ActionValue.continuous(x), 0.0)

    if not halfspaces:
        y = [min(max(v, lo), hi) for v, (lo, hi) in zip(x, box)]
    else:
        if d <= CERTIFY_MAX_DIM and not polytope_nonempty(box, halfspaces, tol):
            return ProjectionResult(Outcome.REJECT, None, 0.0)
        out, sweeps, converged = kernels.dykstra(
            np.asarray(x, dtype=np.float64),
            np.array([b[0] for b in box], dtype=np.float64),
            np.array([b[1] for b in box], dtype=np.float64),
            np.ascontiguousarray(np.array([h[0] for h in halfspaces], dtype=np.float64).reshape(len(halfspaces), d)),
            np.array([h[1] for h in halfspaces], dtype=np.float64),
            tol,
            max_sweeps,
        )
        if not converged:
            raise NonConvergence(f"alternating projections did not reach tol={tol} in {max_sweeps} sweeps")
        y = [float(v) for v in out]
    dist = math.dist(x, y)
    return ProjectionResult(Outcome.PROJECTED, ActionValue.continuous(y), dist)


# ---------------------------------------------------------------------------
# discrete


class _Encoder:
    """Turns discrete actions into float feature rows for the distance kernel."""

    def __init__(self, candidates: Sequence[ActionValue], metric: EditDistanceSpec, extra: Sequence[ActionValue] = ()):
        names: set[str] = set()
        for a in itertools.chain(candidates, extra):
            names.update(k for k, _ in a.attributes)
        self.columns = ["\x00label"] + sorted(names)
        self.numeric = []
        self.mixed = False
        self.codes: list[dict] = []
        scales = []
        for col in self.columns:
            if col == "\x00label":
                self.numeric.append(0)
                scales.append(1.0)
            else:
                vals = [a.get(col) for a in itertools.chain(candidates, extra) if a.get(col) is not None]
                num = bool(vals) and all(_is_num(v) for v in vals)
                if not num and any(_is_num(v) for v in vals):
                    self.mixed = True
                self.numeric.append(1 if num else 0)
                scales.append(metric.scale(col) if num else 1.0)
            self.codes.append({})
        self.label_cost = metric.label_cost
        self.scales = np.array(scales, dtype=np.float64)
        self.numeric_arr = np.array(self.numeric, dtype=np.int8)
        self.matrix = np.ascontiguousarray(
            np.array([self.row(a, grow=True) for a in candidates], dtype=np.float64).reshape(len(candidates), len(self.columns))
        )

    def row(self, a: ActionValue, grow: bool = False) -> list[float] | None:
        out = []
        for j, col in enumerate(self.columns):
            v = a.label if j == 0 else a.get(col)
            if v is None:
                out.append(math.nan)
            elif self.numeric[j]:
                if not _is_num(v):
                    return None
                out.append(float(v))
            else:
                key = (type(v).__name__, v)
                code = self.codes[j].get(key)
                if code is None:
                    if not grow:
                        code = -1.0
                    else:
                        code = float(len(self.codes[j]))
                        self.codes[j][key] = code
                out.append(code)
        return out

    def unseen_attrs(self, a: ActionValue) -> int:
        cols = set(self.columns)
        return sum(1 for k, _ in a.attributes if k not in cols)


def edit_distance(a: ActionValue, b: ActionValue, metric: EditDistanceSpec) -> float:
    """Reference edit distance between two discrete actions (column order: label, sorted attrs)."""
    total = 0.0
    if a.label != b.label:
        total = total + metric.label_cost
    for name in sorted(set(a.attrs) | set(b.attrs)):
        x, y = a.get(name), b.get(name)
        if x is None or y is None:
            if not (x is None and y is None):
                total = total + 1.0
        elif _is_num(x) and _is_num(y):
            total = total + abs(float(x) - float(y)) / metric.scale(name)
        elif (type(x), x) != (type(y), y):
            total = total + 1.0
    return total


class DiscreteProjector:
    """Projection onto a fixed candidate set, with the encoding built once."""

    def __init__(self, feasible: Sequence[ActionValue], metric: EditDistanceSpec):
        self.candidates = tuple(sorted(set(feasible), key=lambda a: a.sort_key))
        self.members = frozenset(self.candidates)
        self.metric = metric
        self._enc = _Encoder(self.candidates, metric) if self.candidates else None
        self._cache: dict[ActionValue, ProjectionResult] = {}

    def __call__(self, action: ActionValue) -> ProjectionResult:
        hit = self._cache.get(action)
        if hit is not None:
            return hit
        res = self._project(action)
        self._cache[action] = res
        return res

    def _project(self, action: ActionValue) -> ProjectionResult:
        if not self.candidates:
            return ProjectionResult(Outcome.REJECT, None, 0.0, 0)
        if action in self.members:
            return ProjectionResult(Outcome.UNCHANGED, action, 0.0, 0)
        n = len(self.candidates)
        enc = self._enc
        row = enc.row(action)
        # label mismatch contributes label_cost per unit in the kernel
        if row is None or enc.mixed or enc.label_cost != 1.0 or enc.unseen_attrs(action):
            # query outside the encoded schema: evaluate directly
            dists = [edit_distance(action, c, self.metric) for c in self.candidates]
            best = min(range(n), key=lambda i: (dists[i], i))
            return ProjectionResult(Outcome.PROJECTED, self.candidates[best], dists[best], n)
        best, dist = kernels.nearest(np.array(row, dtype=np.float64), enc.matrix, enc.scales, enc.numeric_arr)
        return ProjectionResult(Outcome.PROJECTED, self.candidates[best], float(dist), n)


def project_discrete(
    action: ActionValue, feasible: Sequence[ActionValue], metric: EditDistanceSpec | None = None
) -> ProjectionResult:
    """Nearest member of ``feasible`` by edit distance; ties go to the canonical-order first."""
    if metric is None:
        metric = EditDistanceSpec(ranges=_observed_ranges(list(feasible) + [action]))
    return DiscreteProjector(feasible, metric)(action)


def constrained_set(bundle: PolicyBundle, state: EnterpriseState, agent: AgentSpec) -> tuple[ActionValue, ...]:
    """C_i(s) for a discrete agent: F_i(s) filtered by the agent's unary predicate slices."""
    fs = feasible_set(bundle, state, agent)
    return tuple(a for a in fs.actions if satisfies_unary(bundle, state, agent.agent_id, a))


def make_projector(bundle: PolicyBundle, state: EnterpriseState, agent: AgentSpec, metric: EditDistanceSpec | None = None):
    """A callable ``action -> ProjectionResult`` for one (agent, state)."""
    if agent.is_discrete:
        return DiscreteProjector(constrained_set(bundle, state, agent), metric or EditDistanceSpec.for_agent(agent))
    fs = feasible_set(bundle, state, agent)

    def proj(action: ActionValue) -> ProjectionResult:
        if fs.degenerate:
            if action == agent.safe_default:
                return ProjectionResult(Outcome.UNCHANGED, action, 0.0)
            if action.vector is not None and agent.safe_default.vector is not None:
                dist = math.dist(action.vector, agent.safe_default.vector)
            else:
                dist = 1.0
            return ProjectionResult(Outcome.PROJECTED, agent.safe_default, dist)
        if action.vector is None:
            raise DimensionMismatch(f"agent {agent.agent_id!r} expects a continuous action")
        return project_continuous(action.vector, fs.box, fs.halfspaces)

    return proj


def project(
    agent: AgentSpec,
    state: EnterpriseState,
    bundle: PolicyBundle,
    action: ActionValue,
    metric: EditDistanceSpec | None = None,
) -> ProjectionResult:
    return make_projector(bundle, state, agent, metric)(action)
