"""Episode batches: sample states, run a coordinator, fold metrics, optionally keep audit lines.

Work is split into contiguous episode chunks. Chunks may run in worker
processes; results are merged in episode order, so the output does not
depend on the worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Mapping, Sequence

from .audit import AUDIT_SCHEMA, dumps, jsonable
from .baselines import CoordinatorKind, coordinator
from .config import dump_yaml
from .domain import CoordinationConfig
from .metrics import BatchResult, EpisodeRecord, episode_record
from .negotiation import FallbackOperator
from .scenarios import ScenarioDefinition, load_scenario_text


@dataclass(frozen=True)
class BatchRun:
    result: BatchResult
    audit_lines: tuple[str, ...] = ()


def scenario_source(defn: ScenarioDefinition) -> str:
    """Canonical YAML text of a definition; workers rebuild the definition from it."""
    return dump_yaml(defn.to_dict())


@lru_cache(maxsize=16)
def _definition(text: str, seed: int) -> ScenarioDefinition:
    return load_scenario_text(text, seed)


def run_episode(defn: ScenarioDefinition, kind: str, cfg: CoordinationConfig, episode: int, audit: bool = False):
    state = defn.sample(episode)
    fb = FallbackOperator(defn.roster, defn.bundle, defn.risk_profile, cfg.tau)
    outcome = coordinator(kind)(defn.roster, state, defn.bundle, defn.risk_profile, cfg, episode_id=episode, fallback=fb)
    rec = episode_record(episode, defn.roster, state, defn.bundle, defn.risk_profile, outcome)
    lines: list[str] = []
    if audit:
        lines.append(dumps({"record": "episode_start", "episode": episode, "state": state.to_dict()}))
        lines.extend(dumps(ev.to_record()) for ev in outcome.audit)
        lines.append(dumps({
            "record": "episode_end",
            "episode": episode,
            "status": outcome.status.value,
            "iterations": outcome.iterations_used,
            "joint": jsonable(outcome.joint),
            "fallback": jsonable(outcome.fallback),
            "lambda_trajectory": list(outcome.lambda_trajectory),
            "metrics": jsonable(rec.to_dict()),
        }))
    return rec, lines


def _run_chunk(text: str, seed: int, kind: str, cfg_dict: Mapping[str, Any], start: int, stop: int, audit: bool):
    defn = _definition(text, seed)
    cfg = CoordinationConfig.from_dict(cfg_dict)
    return [run_episode(defn, kind, cfg, ep, audit) for ep in range(start, stop)]


def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n))
    size, extra = divmod(n, parts)
    out, start = [], 0
    for i in range(parts):
        stop = start + size + (1 if i < extra else 0)
        out.append((start, stop))
        start = stop
    return out


def run_header(defn: ScenarioDefinition, kind: str, cfg: CoordinationConfig, episodes: int) -> dict:
    return {
        "record": "run_header",
        "schema": AUDIT_SCHEMA,
        "scenario": defn.id,
        "coordinator": CoordinatorKind(kind).value,
        "seed": defn.seed,
        "episodes": episodes,
        "config": cfg.to_dict(),
        "definition": defn.to_dict(),
        "definition_sha256": hashlib.sha256(scenario_source(defn).encode()).hexdigest(),
    }


def run_batch(
    defn: ScenarioDefinition,
    kind: str | CoordinatorKind,
    episodes: int,
    cfg: CoordinationConfig | None = None,
    *,
    workers: int = 1,
    audit: bool = False,
) -> BatchRun:
    kind = CoordinatorKind(kind).value
    cfg = cfg or defn.config()
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    if workers <= 1 or episodes < 2 * workers:
        pairs = [run_episode(defn, kind, cfg, ep, audit) for ep in range(episodes)]
    else:
        text = scenario_source(defn)
        spans = _chunks(episodes, workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, text, defn.seed, kind, cfg.to_dict(), a, b, audit) for a, b in spans]
            pairs = [p for f in futures for p in f.result()]
    records = [r for r, _ in pairs]
    result = BatchResult.from_records(defn.id, kind, cfg.tau, records, defn.seed)
    lines: list[str] = []
    if audit:
        lines.append(dumps(run_header(defn, kind, cfg, episodes)))
        for _, ls in pairs:
            lines.extend(ls)
        lines.append(dumps({"record": "run_summary", "metrics": result.summary()}))
    return BatchRun(result, tuple(lines))


def tau_sensitivity_sweep(
    defn: ScenarioDefinition,
    kind: str | CoordinatorKind,
    tau_grid: Sequence[float] = (0.4, 0.6, 0.8, 1.0, 1.2, 1.4),
    episodes: int = 500,
    *,
    workers: int = 1,
    audit: bool = False,
    **overrides: Any,
) -> list[BatchRun]:
    return [run_batch(defn, kind, episodes, defn.config(tau=float(t), **overrides), workers=workers, audit=audit)
            for t in tau_grid]


def records_of(results: Sequence[BatchResult]) -> list[EpisodeRecord]:
    return [r for b in results for r in b.per_episode_records]
