"""Audit events and their newline-delimited JSON persistence.

A log file is a sequence of records, one JSON object per line::

    {"record": "run_header", "schema": "coordguard.audit/1", ...}
    {"record": "episode_start", "episode": 0, "state": {...}}
    {"record": "event", "episode": 0, "iteration": 1, "kind": "Proposal", ...}
    {"record": "episode_end", "episode": 0, "status": "Accepted", ...}
    ...
    {"record": "run_summary", "metrics": {...}}

Appends only; a partial trailing line (crash mid-write) is dropped on read
with a warning.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping

from .domain import ActionValue, JointAction
from .errors import AuditParseError

AUDIT_SCHEMA = "coordguard.audit/1"

log = logging.getLogger(__name__)


class EventKind(str, enum.Enum):
    PROPOSAL = "Proposal"
    PROJECTION = "Projection"
    REJECT_TO_SAFE_DEFAULT = "RejectToSafeDefault"
    RISK_EVAL = "RiskEval"
    PHI_VERDICT = "PhiVerdict"
    LAMBDA_UPDATE = "LambdaUpdate"
    ACCEPT = "Accept"
    FAIL = "Fail"
    FALLBACK = "Fallback"


@dataclass(frozen=True, slots=True)
class AuditEvent:
    episode_id: int
    iteration: int
    kind: EventKind
    agent_id: str | None
    payload: Mapping[str, Any]
    timestamp: int

    def to_record(self) -> dict:
        return {
            "record": "event",
            "episode": self.episode_id,
            "iteration": self.iteration,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "agent_id": self.agent_id,
            "payload": jsonable(self.payload),
        }


class AuditTrail:
    """Append-only event list with a logical clock. Single writer."""

    __slots__ = ("episode_id", "events", "_clock")

    def __init__(self, episode_id: int = 0):
        self.episode_id = episode_id
        self.events: list[AuditEvent] = []
        self._clock = 0

    def emit(self, kind: EventKind, iteration: int, agent_id: str | None = None, **payload: Any) -> None:
        self.events.append(AuditEvent(self.episode_id, iteration, kind, agent_id, payload, self._clock))
        self._clock += 1


def jsonable(obj: Any) -> Any:
    if isinstance(obj, ActionValue):
        return obj.to_dict()
    if isinstance(obj, JointAction):
        return obj.to_dict()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def dumps(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


class AuditWriter:
    """Writes records to a file, one line each, flushing per episode."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8", newline="\n")

    def write(self, record: Mapping) -> None:
        self._fh.write(dumps(record) + "\n")

    def write_events(self, events) -> None:
        for ev in events:
            self._fh.write(dumps(ev.to_record()) + "\n")

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ReadResult:
    records: list[dict]
    truncated_at: int | None = None


def read_records(path: str | Path) -> ReadResult:
    """Parse a log. Raises :class:`AuditParseError` for a corrupt interior line.

    Record indices are 0-based line numbers. A final line that is not
    newline-terminated and does not parse is dropped and reported through
    ``truncated_at``.
    """
    data = Path(path).read_bytes()
    lines = data.split(b"\n")
    tail_unterminated = not data.endswith(b"\n")
    if not tail_unterminated:
        lines = lines[:-1]
    out: list[dict] = []
    truncated = None
    for i, raw in enumerate(lines):
        last = i == len(lines) - 1
        try:
            rec = json.loads(raw)
            if not isinstance(rec, dict) or "record" not in rec:
                raise ValueError("record is not an object with a 'record' field")
        except (ValueError, UnicodeDecodeError) as exc:
            if last and tail_unterminated:
                log.warning("%s: discarding partial final record %d", path, i)
                truncated = i
                break
            raise AuditParseError(str(exc), i) from None
        out.append(rec)
    return ReadResult(out, truncated)


def iter_episodes(records: list[dict]) -> Iterator[tuple[int, tuple[int, dict], list[tuple[int, dict]], tuple[int, dict] | None]]:
    """Group records into (episode, (index, start), [(index, event)], (index, end) | None)."""
    current = None
    for idx, rec in enumerate(records):
        kind = rec.get("record")
        if kind == "episode_start":
            if current is not None:
                yield current[0], current[1], current[2], None
            current = (rec["episode"], (idx, rec), [], None)
        elif kind == "event" and current is not None:
            current[2].append((idx, rec))
        elif kind == "episode_end" and current is not None:
            yield current[0], current[1], current[2], (idx, rec)
            current = None
    if current is not None:
        yield current[0], current[1], current[2], None
