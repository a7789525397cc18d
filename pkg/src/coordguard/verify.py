"""Replay an audit log and recompute everything it claims.

The run header carries the full scenario definition and configuration, so a
log is self-contained. For every episode the verifier re-samples the state,
then walks the events: utilities, risks and shaped values of proposals,
projections, per-agent and total risk, every predicate verdict, each
multiplier update, the accept/fail decision and the fallback. Episode
metrics and the run summary are refolded from the recomputed values.

Any mismatch is a :class:`Divergence` pinned to the record index (0-based
line number). Policy violations by coordinators that do not enforce the
policy (B1, B2, B4) are expected behaviour and are listed separately; a
violating accept from CAMCO or B3 is a divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .audit import AUDIT_SCHEMA, iter_episodes, jsonable, read_records
from .baselines import CoordinatorKind
from .domain import ActionValue, CoordinationConfig, DualRule, EnterpriseState, JointAction
from .errors import AuditParseError, ConfigInvalid
from .metrics import BatchResult, EpisodeRecord, unconstrained_best
from .negotiation import joint_compliant, safe_default_joint
from .policy import eval_phi, feasible_set, in_feasible_set, satisfies_unary
from .projection import make_projector
from .risk import fold_risks
from .scenarios import ScenarioDefinition
from .shaping import lambda_increment, shaped_utility

@dataclass(frozen=True)
class Divergence:
    index: int
    episode: int | None
    what: str
    logged: Any = None
    recomputed: Any = None

    def __str__(self) -> str:
        ep = "" if self.episode is None else f" episode {self.episode}"
        return f"record {self.index}{ep}: {self.what}: logged {self.logged!r}, recomputed {self.recomputed!r}"

    def to_dict(self) -> dict:
        return jsonable({"index": self.index, "episode": self.episode, "what": self.what,
                         "logged": self.logged, "recomputed": self.recomputed})


@dataclass
class VerifyReport:
    path: str
    records: int = 0
    episodes: int = 0
    coordinator: str | None = None
    divergences: list[Divergence] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)
    truncated_at: int | None = None

    @property
    def ok(self) -> bool:
        return not self.divergences

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "records": self.records,
            "episodes": self.episodes,
            "coordinator": self.coordinator,
            "divergences": [d.to_dict() for d in self.divergences],
            "violations": self.violations,
            "truncated_at": self.truncated_at,
            "ok": self.ok,
        }


def _same(x: Any, y: Any) -> bool:
    """Exact equality on the JSON forms (floats compare bit for bit)."""
    return jsonable(x) == jsonable(y)


def _action(d: Any) -> ActionValue | None:
    return None if d is None else ActionValue.from_dict(d)


def _joint(d: Any) -> JointAction | None:
    return None if d is None else JointAction.from_dict(d)


class _Episode:
    """State machine for one episode's events."""

    def __init__(self, rep: VerifyReport, defn: ScenarioDefinition, kind: CoordinatorKind, cfg: CoordinationConfig,
                 episode: int, state: EnterpriseState):
        self.rep, self.defn, self.kind, self.cfg = rep, defn, kind, cfg
        self.episode, self.state = episode, state
        self.agents = defn.roster
        self.by_id = {a.agent_id: a for a in self.agents}
        self.ids = [a.agent_id for a in self.agents]
        self.n = len(self.agents)
        self.budget = cfg.tau / self.n if kind is CoordinatorKind.B4_LAGRANGIAN_MARL else cfg.tau
        self.u = {aid: {} for aid in self.ids}
        self.r = {aid: {} for aid in self.ids}
        self.projectors = {}
        self.lam_shared = float(cfg.lambda0)
        self.lam_agent = {aid: float(cfg.lambda0) for aid in self.ids}
        self.trajectory: list[float] = []
        self.trajectories = {aid: [] for aid in self.ids}
        self.round_actions: dict[str, ActionValue] = {}
        self.last_eval: tuple[JointAction, list[float], float] | None = None
        self.last_phi: int | None = None
        self.proposals: list[JointAction] = []
        self.status: str | None = None
        self.iterations = 0
        self.accepted: JointAction | None = None
        self.fallback: JointAction | None = None

    # -- helpers
    def diverge(self, idx: int, what: str, logged: Any, recomputed: Any) -> None:
        self.rep.divergences.append(Divergence(idx, self.episode, what, logged, recomputed))

    def utility(self, aid: str, a: ActionValue) -> float:
        cache = self.u[aid]
        if a not in cache:
            cache[a] = self.by_id[aid].utility_of(self.state, a)
        return cache[a]

    def risk(self, aid: str, a: ActionValue) -> float:
        cache = self.r[aid]
        if a not in cache:
            cache[a] = self.defn.risk_profile.agent_risk(aid, a, self.state)
        return cache[a]

    def candidates(self, aid: str) -> tuple[ActionValue, ...]:
        ag = self.by_id[aid]
        if self.kind in (CoordinatorKind.B2_CENTRALIZED_GREEDY, CoordinatorKind.B4_LAGRANGIAN_MARL):
            return feasible_set(self.defn.bundle, self.state, ag).actions
        return ag.actions

    def compliant_unary(self, aid: str, a: ActionValue) -> bool:
        ag = self.by_id[aid]
        return (in_feasible_set(self.defn.bundle, self.state, ag, a)
                and satisfies_unary(self.defn.bundle, self.state, aid, a))

    # -- events
    def proposal(self, idx: int, ev: dict) -> None:
        aid, p = ev["agent_id"], ev["payload"]
        if aid not in self.by_id:
            self.diverge(idx, "unknown agent", aid, self.ids)
            return
        a = _action(p["action"])
        lam = p["lam"]
        if self.kind is CoordinatorKind.CAMCO:
            expected_lam = self.lam_shared
        elif self.kind is CoordinatorKind.B4_LAGRANGIAN_MARL:
            expected_lam = self.lam_agent[aid]
        else:
            expected_lam = 0.0
        if not _same(lam, expected_lam):
            self.diverge(idx, f"multiplier used by {aid}", lam, expected_lam)
            lam = expected_lam
        u, r = self.utility(aid, a), self.risk(aid, a)
        if not _same(p["utility"], u):
            self.diverge(idx, f"utility of {aid}", p["utility"], u)
        if not _same(p["risk"], r):
            self.diverge(idx, f"risk of {aid}", p["risk"], r)
        s = shaped_utility(u, r, lam)
        if not _same(p["shaped"], s):
            self.diverge(idx, f"shaped utility of {aid}", p["shaped"], s)
        ag = self.by_id[aid]
        if ag.is_discrete:
            if self.kind is CoordinatorKind.B3_STATIC_RULES:
                top = max(self.utility(aid, b) for b in ag.actions)
                if a != ag.safe_default:
                    if not (self.compliant_unary(aid, a) and u == top):
                        self.diverge(idx, f"rules-baseline choice of {aid}", str(a), "a compliant utility maximiser")
                elif u != top and all(self.compliant_unary(aid, b) for b in ag.actions if self.utility(aid, b) == top):
                    self.diverge(idx, f"rules-baseline substitution for {aid}", str(a), "the compliant maximiser")
            else:
                pool = self.candidates(aid)
                if a not in pool:
                    self.diverge(idx, f"proposal of {aid} outside its choice set", str(a), [str(b) for b in pool])
                best = max(shaped_utility(self.utility(aid, b), self.risk(aid, b), lam) for b in pool)
                if s != best:
                    self.diverge(idx, f"proposal of {aid} is not a shaped-utility maximiser", s, best)
        if self.kind is CoordinatorKind.B4_LAGRANGIAN_MARL:
            self.trajectories[aid].append(lam)
        elif aid == self.ids[0]:
            self.trajectory.append(lam)
        self.round_actions[aid] = a

    def projection(self, idx: int, ev: dict) -> None:
        aid, p = ev["agent_id"], ev["payload"]
        if aid not in self.projectors:
            self.projectors[aid] = make_projector(self.defn.bundle, self.state, self.by_id[aid])
        before = _action(p["before"])
        if self.round_actions.get(aid) != before:
            self.diverge(idx, f"projection input of {aid}", p["before"], jsonable(self.round_actions.get(aid)))
        res = self.projectors[aid](before)
        if p["outcome"] != res.outcome.value:
            self.diverge(idx, f"projection outcome of {aid}", p["outcome"], res.outcome.value)
        if not _same(p["after"], res.action):
            self.diverge(idx, f"projected action of {aid}", p["after"], jsonable(res.action))
        if not _same(p["distance"], res.distance):
            self.diverge(idx, f"projection distance of {aid}", p["distance"], res.distance)
        if res.action is not None:
            self.round_actions[aid] = res.action

    def reject(self, idx: int, ev: dict) -> None:
        aid = ev["agent_id"]
        sd = self.by_id[aid].safe_default
        if not _same(ev["payload"]["action"], sd):
            self.diverge(idx, f"safe default of {aid}", ev["payload"]["action"], jsonable(sd))
        self.round_actions[aid] = sd

    def risk_eval(self, idx: int, ev: dict) -> None:
        p = ev["payload"]
        joint = _joint(p["joint"])
        expected = JointAction(tuple((aid, self.round_actions.get(aid)) for aid in self.ids))
        if joint != expected:
            self.diverge(idx, "evaluated joint action", p["joint"], jsonable(expected))
        risks = [self.risk(aid, a) for aid, a in zip(joint.agent_ids, joint.actions)]
        r_tot = fold_risks(risks)
        if not _same(p["per_agent"], risks):
            self.diverge(idx, "per-agent risks", p["per_agent"], risks)
        if not _same(p["r_tot"], r_tot):
            self.diverge(idx, "total risk", p["r_tot"], r_tot)
        if not _same(p["tau"], self.cfg.tau):
            self.diverge(idx, "risk threshold", p["tau"], self.cfg.tau)
        if p["within_bound"] != (r_tot <= self.cfg.tau):
            self.diverge(idx, "within-bound flag", p["within_bound"], r_tot <= self.cfg.tau)
        self.last_eval = (joint, risks, r_tot)
        self.proposals.append(joint)
        self.round_actions = {}

    def phi(self, idx: int, ev: dict) -> None:
        p = ev["payload"]
        if self.last_eval is None:
            self.diverge(idx, "predicate verdict without an evaluated joint", None, None)
            return
        res = eval_phi(self.defn.bundle, self.state, self.last_eval[0])
        if p["phi"] != res.value:
            self.diverge(idx, "Φ", p["phi"], res.value)
        if [list(v) for v in res.verdicts] != p["verdicts"]:
            self.diverge(idx, "predicate verdicts", p["verdicts"], [list(v) for v in res.verdicts])
        self.last_phi = res.value

    def lambda_update(self, idx: int, ev: dict) -> None:
        p = ev["payload"]
        if self.last_eval is None:
            self.diverge(idx, "multiplier update without an evaluated joint", None, None)
            return
        joint, risks, r_tot = self.last_eval
        t = ev["iteration"]
        if self.kind is CoordinatorKind.B4_LAGRANGIAN_MARL:
            aid = ev["agent_id"]
            r = risks[self.ids.index(aid)]
            before, rule, bound = self.lam_agent[aid], DualRule.HINGE_ASCENT, self.budget
        else:
            aid, r, before, rule, bound = None, r_tot, self.lam_shared, self.cfg.dual_update_rule, self.cfg.tau
        if self.last_phi == 1 and r_tot <= self.cfg.tau and self.kind is CoordinatorKind.CAMCO:
            self.diverge(idx, "multiplier raised although the joint action was acceptable", "update", "accept")
        if p["rule"] != rule.value:
            self.diverge(idx, "dual update rule", p["rule"], rule.value)
        if not _same(p["before"], before):
            self.diverge(idx, "multiplier before update", p["before"], before)
        if not _same(p["r_tot"], r):
            self.diverge(idx, "risk driving the update", p["r_tot"], r)
        if not _same(p["tau"], bound):
            self.diverge(idx, "bound driving the update", p["tau"], bound)
        after = before + lambda_increment(rule, r, bound, t, self.cfg)
        if not _same(p["after"], after):
            self.diverge(idx, "multiplier after update", p["after"], after)
        if aid is None:
            self.lam_shared = after
        else:
            self.lam_agent[aid] = after

    def accept(self, idx: int, ev: dict) -> None:
        p = ev["payload"]
        if self.last_eval is None:
            self.diverge(idx, "accept without an evaluated joint", None, None)
            return
        joint, risks, r_tot = self.last_eval
        if _joint(p["joint"]) != joint:
            self.diverge(idx, "accepted joint action", p["joint"], jsonable(joint))
        if not _same(p["r_tot"], r_tot):
            self.diverge(idx, "accepted total risk", p["r_tot"], r_tot)
        inside = all(in_feasible_set(self.defn.bundle, self.state, self.by_id[aid], a)
                     for aid, a in zip(joint.agent_ids, joint.actions))
        if self.kind is CoordinatorKind.CAMCO:
            if not (self.last_phi == 1 and inside and r_tot <= self.cfg.tau):
                self.diverge(idx, "accepted joint action is not compliant", jsonable(joint),
                             {"phi": self.last_phi, "inside_F": inside, "r_tot": r_tot})
        elif self.kind is CoordinatorKind.B3_STATIC_RULES:
            if not (self.last_phi == 1 and inside):
                self.diverge(idx, "rules baseline accepted a non-compliant joint action", jsonable(joint),
                             {"phi": self.last_phi, "inside_F": inside})
        elif self.kind is CoordinatorKind.B4_LAGRANGIAN_MARL:
            if not all(r <= self.budget for r in risks):
                self.diverge(idx, "accept with an agent over its budget", risks, self.budget)
        if self.last_phi == 0 or not inside:
            self.rep.violations.append({"index": idx, "episode": self.episode, "phi": self.last_phi,
                                        "inside_feasible": inside})
        self.status, self.iterations, self.accepted = "Accepted", ev["iteration"], joint

    def fail(self, idx: int, ev: dict) -> None:
        p = ev["payload"]
        expected = 1 if self.kind is CoordinatorKind.B3_STATIC_RULES else self.cfg.k_max
        if p["iterations"] != expected or len(self.proposals) != expected:
            self.diverge(idx, "rounds before failure", [p["iterations"], len(self.proposals)], expected)
        if self.kind is CoordinatorKind.B3_STATIC_RULES and self.last_phi != 0:
            self.diverge(idx, "rules baseline failed although Φ = 1", self.last_phi, 1)
        if self.kind in (CoordinatorKind.B1_UNCONSTRAINED_MARL, CoordinatorKind.B2_CENTRALIZED_GREEDY):
            self.diverge(idx, "single-shot baseline cannot fail", "Fail", "Accept")
        if self.last_eval is not None and _joint(p["last_joint"]) != self.last_eval[0]:
            self.diverge(idx, "last joint before failure", p["last_joint"], jsonable(self.last_eval[0]))
        self.status, self.iterations = "Failed", p["iterations"]

    def fallback_event(self, idx: int, ev: dict) -> None:
        p = ev["payload"]
        joint = _joint(p.get("joint"))
        ctx = (self.state, self.defn.bundle, self.defn.risk_profile, self.cfg.tau)
        if joint is None:
            safe = safe_default_joint(self.agents)
            if joint_compliant(self.agents, safe, *ctx):
                self.diverge(idx, "fallback reported unavailable", None, jsonable(safe))
        elif not joint_compliant(self.agents, joint, *ctx):
            self.diverge(idx, "fallback joint action is not compliant", p.get("joint"), "compliant tuple")
        self.fallback = joint

    # -- end of episode
    def finish(self, idx: int, end: dict) -> EpisodeRecord:
        if end["status"] != self.status:
            self.diverge(idx, "episode status", end["status"], self.status)
        if end["iterations"] != self.iterations:
            self.diverge(idx, "iterations used", end["iterations"], self.iterations)
        if not _same(end["joint"], self.accepted):
            self.diverge(idx, "episode joint action", end["joint"], jsonable(self.accepted))
        if not _same(end["fallback"], self.fallback):
            self.diverge(idx, "episode fallback", end["fallback"], jsonable(self.fallback))
        traj = (self.trajectories[self.ids[0]] if self.kind is CoordinatorKind.B4_LAGRANGIAN_MARL
                else self.trajectory)
        if not _same(end["lambda_trajectory"], traj):
            self.diverge(idx, "multiplier trajectory", end["lambda_trajectory"], traj)
        rec = self.record()
        logged = end.get("metrics")
        if logged != jsonable(rec.to_dict()):
            keys = sorted(k for k in rec.to_dict() if jsonable(rec.to_dict()[k]) != (logged or {}).get(k))
            self.diverge(idx, f"episode metrics {keys}", {k: (logged or {}).get(k) for k in keys},
                         {k: jsonable(rec.to_dict()[k]) for k in keys})
        return rec

    def record(self) -> EpisodeRecord:
        bundle, state = self.defn.bundle, self.state
        best = unconstrained_best(self.agents, state)
        fails = sum(1 for j in self.proposals if eval_phi(bundle, state, j).value == 0)
        ex = self.accepted if self.status == "Accepted" else self.fallback
        if ex is None:
            return EpisodeRecord(self.episode, self.status or "", self.iterations, None, None, False, 0.0, 0.0, best,
                                 len(self.proposals), fails)
        phi = eval_phi(bundle, state, ex).value
        outside = not all(in_feasible_set(bundle, state, self.by_id[aid], a) for aid, a in zip(ex.agent_ids, ex.actions))
        r_tot = fold_risks([self.risk(aid, a) for aid, a in zip(ex.agent_ids, ex.actions)])
        utility = 0.0
        for aid, a in zip(ex.agent_ids, ex.actions):
            utility = utility + self.utility(aid, a)
        return EpisodeRecord(self.episode, self.status or "", self.iterations, ex.to_dict(), phi, outside, r_tot,
                             utility, best, len(self.proposals), fails)


_HANDLERS = {
    "Proposal": _Episode.proposal,
    "Projection": _Episode.projection,
    "RejectToSafeDefault": _Episode.reject,
    "RiskEval": _Episode.risk_eval,
    "PhiVerdict": _Episode.phi,
    "LambdaUpdate": _Episode.lambda_update,
    "Accept": _Episode.accept,
    "Fail": _Episode.fail,
    "Fallback": _Episode.fallback_event,
}


def verify_records(records: Sequence[dict], path: str = "<memory>") -> VerifyReport:
    rep = VerifyReport(path, records=len(records))
    if not records or records[0].get("record") != "run_header":
        raise AuditParseError("log does not start with a run_header", 0)
    header = records[0]
    if header.get("schema") != AUDIT_SCHEMA:
        raise AuditParseError(f"unsupported audit schema {header.get('schema')!r}", 0)
    try:
        defn = ScenarioDefinition.from_dict(header["definition"], int(header["seed"]))
        cfg = CoordinationConfig.from_dict(header["config"])
        kind = CoordinatorKind(header["coordinator"])
    except (KeyError, ValueError, ConfigInvalid) as exc:
        raise AuditParseError(f"unusable run_header: {exc}", 0) from None
    rep.coordinator = kind.value
    if records[-1].get("record") != "run_summary":
        raise AuditParseError("log is truncated: no run_summary record", len(records))

    recs: list[EpisodeRecord] = []
    expected_ep = 0
    for ep, (start_idx, start), events, end in iter_episodes(records):
        state = defn.sample(ep)
        if ep != expected_ep:
            rep.divergences.append(Divergence(start_idx, ep, "episode order", ep, expected_ep))
        expected_ep = ep + 1
        run = _Episode(rep, defn, kind, cfg, ep, state)
        if start.get("state") != state.to_dict():
            run.diverge(start_idx, "sampled state", start.get("state"), state.to_dict())
        for idx, ev in events:
            if ev.get("episode") != ep:
                run.diverge(idx, "event episode id", ev.get("episode"), ep)
            handler = _HANDLERS.get(ev.get("kind"))
            if handler is None:
                run.diverge(idx, "unknown event kind", ev.get("kind"), sorted(_HANDLERS))
                continue
            try:
                handler(run, idx, ev)
            except (KeyError, TypeError, ValueError) as exc:
                run.diverge(idx, "malformed event", repr(exc), None)
        if end is None:
            raise AuditParseError(f"episode {ep} has no episode_end record", len(records) - 1)
        recs.append(run.finish(end[0], end[1]))
    rep.episodes = len(recs)
    if rep.episodes != header.get("episodes"):
        rep.divergences.append(Divergence(len(records) - 1, None, "episode count", header.get("episodes"),
                                          rep.episodes))
    summary = BatchResult.from_records(defn.id, kind.value, cfg.tau, recs, defn.seed).summary()
    logged = records[-1].get("metrics")
    if jsonable(summary) != logged:
        keys = sorted(k for k in summary if jsonable(summary[k]) != (logged or {}).get(k))
        rep.divergences.append(Divergence(len(records) - 1, None, f"run metrics {keys}",
                                          {k: (logged or {}).get(k) for k in keys},
                                          {k: jsonable(summary[k]) for k in keys}))
    return rep


def verify_file(path: str | Path) -> VerifyReport:
    """Verify one log file. Raises :class:`AuditParseError` for unreadable or truncated logs."""
    res = read_records(path)
    if res.truncated_at is not None:
        raise AuditParseError("log is truncated: partial final record discarded", res.truncated_at)
    return verify_records(res.records, str(path))
