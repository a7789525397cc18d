"""Batch metrics (violations, risk ratio, deadlock, convergence, utility retention) and their emission.

Every episode executes exactly one joint action: the accepted tuple, or the
fallback when negotiation failed. Violation, risk and retention are measured
on that executed tuple; deadlock and convergence on the outcome status.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

from .domain import AgentSpec, EnterpriseState, JointAction
from .negotiation import NegotiationOutcome, Status
from .policy import PolicyBundle, eval_phi, in_feasible_set
from .risk import RiskProfile, fold_risks
from .shaping import best_response


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    status: str
    iterations: int
    executed: list | None
    phi: int | None
    outside_feasible: bool
    r_tot: float
    utility: float
    utility_best: float
    proposals: int
    proposal_phi_failures: int

    @property
    def accepted(self) -> bool:
        return self.status == Status.ACCEPTED.value

    @property
    def violation(self) -> bool:
        return self.executed is not None and (self.phi == 0 or self.outside_feasible)

    @property
    def retention(self) -> float:
        if self.utility_best <= 0.0:
            return 100.0
        return 100.0 * self.utility / self.utility_best

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> EpisodeRecord:
        return cls(**d)


def unconstrained_best(agents: Sequence[AgentSpec], state: EnterpriseState) -> float:
    """Σ_i max_{A_i} U_i: the joint optimum of the separable objective without constraints."""
    total = 0.0
    for ag in agents:
        if ag.is_discrete:
            best = max(ag.utility_of(state, a) for a in ag.actions)
        else:
            best = ag.utility_of(state, best_response(ag, state, 0.0, _ZeroRisk()))
        total = total + best
    return total


class _ZeroRisk:
    # at λ = 0 the shaped objective ignores risk; this avoids evaluating indicators
    def agent_risk(self, agent_id, action, state):
        return 0.0


def joint_utility(agents: Sequence[AgentSpec], state: EnterpriseState, joint: JointAction) -> float:
    total = 0.0
    for ag, a in zip(agents, joint.actions):
        total = total + ag.utility_of(state, a)
    return total


def episode_record(
    episode: int,
    agents: Sequence[AgentSpec],
    state: EnterpriseState,
    bundle: PolicyBundle,
    profile: RiskProfile,
    outcome: NegotiationOutcome,
) -> EpisodeRecord:
    best = unconstrained_best(agents, state)
    fails = sum(1 for p in outcome.proposals if eval_phi(bundle, state, p).value == 0)
    ex = outcome.executed
    if ex is None:
        return EpisodeRecord(episode, outcome.status.value, outcome.iterations_used, None, None, False, 0.0, 0.0,
                             best, len(outcome.proposals), fails)
    phi = eval_phi(bundle, state, ex).value
    outside = not all(in_feasible_set(bundle, state, ag, a) for ag, a in zip(agents, ex.actions))
    r_tot = fold_risks([profile.agent_risk(ag.agent_id, a, state) for ag, a in zip(agents, ex.actions)])
    return EpisodeRecord(episode, outcome.status.value, outcome.iterations_used, ex.to_dict(), phi, outside, r_tot,
                         joint_utility(agents, state, ex), best, len(outcome.proposals), fails)


# ---------------------------------------------------------------------------
# metric folds (ordered, so results are reproducible bit for bit)


def _mean(xs: Iterable[float]) -> float:
    total, n = 0.0, 0
    for x in xs:
        total = total + x
        n += 1
    return total / n if n else math.nan


def violation_rate(records: Sequence[EpisodeRecord]) -> float:
    """Executed joints with Φ = 0 or some a_i outside F_i(s)."""
    if not records:
        return 0.0
    return sum(1 for r in records if r.violation) / len(records)


def phi_violation_rate(records: Sequence[EpisodeRecord]) -> float:
    if not records:
        return 0.0
    return sum(1 for r in records if r.executed is not None and r.phi == 0) / len(records)


def proposal_violation_rate(records: Sequence[EpisodeRecord]) -> float:
    """Fraction of all proposed joints (every round of every episode) with Φ = 0."""
    n = sum(r.proposals for r in records)
    return sum(r.proposal_phi_failures for r in records) / n if n else 0.0


def mean_risk_ratio(records: Sequence[EpisodeRecord], tau: float) -> float:
    return _mean(r.r_tot / tau for r in records if r.executed is not None)


def deadlock_rate(records: Sequence[EpisodeRecord]) -> float:
    if not records:
        return 0.0
    return sum(1 for r in records if not r.accepted) / len(records)


def convergence_iterations(records: Sequence[EpisodeRecord]) -> float:
    """Mean rounds over accepted episodes (NaN if none were accepted)."""
    return _mean(float(r.iterations) for r in records if r.accepted)


def utility_retention(records: Sequence[EpisodeRecord]) -> float:
    """Mean per-episode Σ U(executed) / Σ max U × 100. Failed episodes count with their fallback."""
    return _mean(r.retention for r in records)


@dataclass(frozen=True)
class BatchResult:
    scenario_id: str
    coordinator_kind: str
    episodes: int
    tau: float
    violation_rate: float
    mean_risk_ratio: float
    deadlock_rate: float
    mean_convergence_iterations: float
    utility_retention_pct: float
    phi_violation_rate: float = 0.0
    proposal_violation_rate: float = 0.0
    seed: int = 0
    per_episode_records: tuple[EpisodeRecord, ...] = field(default=(), repr=False, compare=False)

    @classmethod
    def from_records(cls, scenario_id: str, kind: str, tau: float, records: Sequence[EpisodeRecord],
                     seed: int = 0) -> BatchResult:
        return cls(
            scenario_id=scenario_id,
            coordinator_kind=kind,
            episodes=len(records),
            tau=tau,
            violation_rate=violation_rate(records),
            mean_risk_ratio=mean_risk_ratio(records, tau),
            deadlock_rate=deadlock_rate(records),
            mean_convergence_iterations=convergence_iterations(records),
            utility_retention_pct=utility_retention(records),
            phi_violation_rate=phi_violation_rate(records),
            proposal_violation_rate=proposal_violation_rate(records),
            seed=seed,
            per_episode_records=tuple(records),
        )

    def summary(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "per_episode_records"}
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


# ---------------------------------------------------------------------------
# emission

RESULTS_SCHEMA = "coordguard.results/1"

_TITLES = {"camco": "CAMCO", "b1": "B1 (MARL)", "b2": "B2 (Greedy)", "b3": "B3 (Rules)", "b4": "B4 (Lag. MARL)"}
TABLE_COLUMNS = ("Scen.", "Method", "Viol.%", "Risk ratio", "Dead.%", "Conv.", "Util.%")
CSV_COLUMNS = ("scenario", "method", "tau", "episodes", "viol_pct", "risk_ratio", "dead_pct", "conv", "util_pct",
               "phi_viol_pct", "proposal_viol_pct", "seed", "schema")


def _fmt(x: float, digits: int) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.{digits}f}"


def table_row(b: BatchResult) -> list[str]:
    return [
        b.scenario_id,
        _TITLES.get(b.coordinator_kind, b.coordinator_kind),
        _fmt(100 * b.violation_rate, 1),
        _fmt(b.mean_risk_ratio, 2),
        _fmt(100 * b.deadlock_rate, 1),
        _fmt(b.mean_convergence_iterations, 1),
        _fmt(b.utility_retention_pct, 1),
    ]


def format_table(results: Sequence[BatchResult]) -> str:
    rows = [list(TABLE_COLUMNS)] + [table_row(b) for b in results]
    show_tau = len({b.tau for b in results}) > 1
    if show_tau:
        rows[0].insert(2, "tau")
        for row, b in zip(rows[1:], results):
            row.insert(2, _fmt(b.tau, 2))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for j, row in enumerate(rows):
        cells = [c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(results: Sequence[BatchResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for b in results:
        w.writerow([
            b.scenario_id, b.coordinator_kind, _fmt(b.tau, 4), b.episodes,
            _fmt(100 * b.violation_rate, 4), _fmt(b.mean_risk_ratio, 6), _fmt(100 * b.deadlock_rate, 4),
            _fmt(b.mean_convergence_iterations, 6), _fmt(b.utility_retention_pct, 6),
            _fmt(100 * b.phi_violation_rate, 4), _fmt(100 * b.proposal_violation_rate, 4), b.seed, RESULTS_SCHEMA,
        ])
    return buf.getvalue()


def format_json_lines(results: Sequence[BatchResult]) -> str:
    return "".join(json.dumps({**b.summary(), "schema": RESULTS_SCHEMA}, sort_keys=True, separators=(",", ":")) + "\n" for b in results)


EMITTERS = {"table": format_table, "csv": format_csv, "json-lines": format_json_lines}


def emit(results: Sequence[BatchResult], fmt: str) -> str:
    try:
        return EMITTERS[fmt](results)
    except KeyError:
        raise ValueError(f"unknown emit format {fmt!r}; expected one of {sorted(EMITTERS)}") from None
