"""Command line interface.

    coordguard run            scenarios x coordinators batches, audit logs, result tables, manifest
    coordguard sweep          τ-sensitivity sweep (run with a τ grid, CAMCO by default)
    coordguard verify-audit   replay audit logs and report divergences
    coordguard oracle         compare a coordinator with the brute-force constrained optimum
    coordguard validate-config  check a scenario file

Exit status: 0 success, 1 verification or oracle findings, 2 invalid
configuration, 3 unreadable or truncated files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .audit import dumps
from .baselines import CoordinatorKind
from .config import load_yaml_file
from .domain import validate_roster
from .errors import AuditParseError, ConfigInvalid, OracleCapExceeded, UnknownScenario
from .metrics import RESULTS_SCHEMA, BatchResult, emit
from .negotiation import FallbackOperator
from .oracle import compare
from .randomgen import random_instance
from .runner import run_batch
from .scenarios import SHIPPED, ScenarioDefinition, build_scenario, load_scenario_file
from .verify import verify_file

MANIFEST_SCHEMA = "coordguard.manifest/1"
OUT_ENV = "COORDGUARD_OUT_DIR"
DEFAULT_OUT = "coordguard-out"
DEFAULT_SWEEP = "0.4:1.4:0.2"

EXIT_OK, EXIT_FINDINGS, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("coordguard")


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class RunManifest:
    scenarios: tuple[str, ...] = ("S1", "S2", "S3")
    coordinators: tuple[str, ...] = ("camco",)
    episodes: int = 500
    seed: int = 0
    config: dict = field(default_factory=dict)
    tau_grid: tuple[float, ...] | None = None
    audit: bool = True

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "scenarios": list(self.scenarios),
            "coordinators": list(self.coordinators),
            "episodes": self.episodes,
            "seed": self.seed,
            "config": dict(sorted(self.config.items())),
            "tau_grid": None if self.tau_grid is None else list(self.tau_grid),
            "audit": self.audit,
        }


_MANIFEST_KEYS = {"schema", "scenarios", "coordinators", "episodes", "seed", "config", "tau_grid", "audit"}


def load_manifest(path: str) -> RunManifest:
    data, src = load_yaml_file(path)
    if not isinstance(data, dict):
        raise src.error("manifest must be a mapping")
    for k in data:
        if k not in _MANIFEST_KEYS:
            raise src.error(f"unknown manifest key {k!r}", [k])
    if data.get("schema", MANIFEST_SCHEMA) != MANIFEST_SCHEMA:
        raise src.error(f"unsupported manifest schema {data.get('schema')!r}", ["schema"])
    try:
        grid = data.get("tau_grid")
        if isinstance(grid, str):
            grid = parse_tau_grid(grid)
        m = RunManifest(
            scenarios=tuple(str(s) for s in data.get("scenarios", ("S1", "S2", "S3"))),
            coordinators=tuple(_coordinator_list(data.get("coordinators", ["camco"]))),
            episodes=int(data.get("episodes", 500)),
            seed=int(data.get("seed", 0)),
            config=dict(data.get("config") or {}),
            tau_grid=None if grid is None else tuple(float(t) for t in grid),
            audit=bool(data.get("audit", True)),
        )
    except (TypeError, ValueError) as exc:
        raise src.error(f"bad manifest: {exc}") from None
    _check_manifest(m)
    return m


def _check_manifest(m: RunManifest) -> None:
    if m.episodes < 1:
        raise ConfigInvalid(f"episodes must be >= 1, got {m.episodes}")
    if not (0 <= m.seed < 2**64):
        raise ConfigInvalid(f"seed must be a 64-bit unsigned integer, got {m.seed}")
    if not m.scenarios or not m.coordinators:
        raise ConfigInvalid("need at least one scenario and one coordinator")


def parse_tau_grid(spec: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    if "," in spec or ":" not in spec:
        vals = [float(x) for x in spec.split(",") if x.strip()]
    else:
        try:
            a, b, step = (float(x) for x in spec.split(":"))
        except ValueError:
            raise ConfigInvalid(f"bad tau grid {spec!r}; expected a:b:step") from None
        if step <= 0 or b < a:
            raise ConfigInvalid(f"bad tau grid {spec!r}; need step > 0 and b >= a")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        vals = [round(a + i * step, 10) for i in range(n)]
    if not vals or any(not (math.isfinite(t) and t > 0) for t in vals):
        raise ConfigInvalid(f"tau grid values must be positive, got {spec!r}")
    return tuple(vals)


def _coordinator_list(values: Any) -> list[str]:
    if isinstance(values, str):
        values = values.split(",")
    out: list[str] = []
    for v in values:
        v = str(v).strip().lower()
        if v == "all":
            out.extend(k.value for k in CoordinatorKind)
            continue
        try:
            out.append(CoordinatorKind(v).value)
        except ValueError:
            raise ConfigInvalid(f"unknown coordinator {v!r}; expected one of "
                                f"{[k.value for k in CoordinatorKind]} or 'all'") from None
    return list(dict.fromkeys(out))


def _scenario_list(values: Sequence[str]) -> list[str]:
    out: list[str] = []
    for v in values:
        for part in str(v).split(","):
            part = part.strip()
            if not part:
                continue
            if part.lower() == "all":
                out.extend(SHIPPED)
            elif part.upper() in SHIPPED:
                out.append(part.upper())
            else:
                out.append(part)
    return list(dict.fromkeys(out))


def resolve_scenario(name: str, seed: int) -> ScenarioDefinition:
    if name.upper() in SHIPPED:
        return build_scenario(name.upper(), seed)
    p = Path(name)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return load_scenario_file(p, seed)
    raise UnknownScenario(f"unknown scenario {name!r}; expected one of {sorted(SHIPPED)} or a scenario file")


def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigInvalid(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


# ---------------------------------------------------------------------------
# artifacts


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Artifacts:
    """Collects output files, writes them, and records their hashes."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def write(self, rel: str, text: str) -> Path:
        data = text.encode("utf-8")
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.files[rel] = _sha256(data)
        return path


def _fmt_tau(t: float) -> str:
    return f"{t:g}".replace(".", "p")


def execute(m: RunManifest, out_dir: Path, *, workers: int = 1) -> tuple[list[BatchResult], dict]:
    """Run a manifest and write every artifact under ``out_dir``. Returns results and the manifest record."""
    arts = _Artifacts(out_dir)
    results: list[BatchResult] = []
    for name in m.scenarios:
        defn = resolve_scenario(name, m.seed)
        taus = m.tau_grid if m.tau_grid is not None else (None,)
        for kind in m.coordinators:
            for tau in taus:
                overrides = dict(m.config)
                if tau is not None:
                    overrides["tau"] = tau
                cfg = defn.config(**overrides)
                run = run_batch(defn, kind, m.episodes, cfg, workers=workers, audit=m.audit)
                results.append(run.result)
                if m.audit:
                    stem = f"{defn.id.lower()}_{kind}" + ("" if tau is None else f"_tau{_fmt_tau(tau)}")
                    arts.write(f"audit/{stem}.jsonl", "".join(line + "\n" for line in run.audit_lines))
    arts.write("results.txt", emit(results, "table"))
    arts.write("results.csv", emit(results, "csv"))
    arts.write("results.jsonl", emit(results, "json-lines"))
    record = {
        **m.to_dict(),
        "version": __version__,
        "results_schema": RESULTS_SCHEMA,
        "files": dict(sorted(arts.files.items())),
    }
    text = json.dumps(record, sort_keys=True, indent=2) + "\n"
    (out_dir / "manifest.json").write_text(text, encoding="utf-8")
    return results, record


# ---------------------------------------------------------------------------
# subcommands


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _manifest_from_args(args, sweep: bool = False) -> RunManifest:
    base = load_manifest(args.manifest) if args.manifest else RunManifest()
    kw: dict[str, Any] = {}
    if args.scenario:
        kw["scenarios"] = tuple(_scenario_list(args.scenario))
    if args.coordinator:
        kw["coordinators"] = tuple(_coordinator_list(args.coordinator))
    if args.episodes is not None:
        kw["episodes"] = args.episodes
    if args.seed is not None:
        kw["seed"] = args.seed
    overrides = _parse_set(args.set)
    if args.tau is not None:
        overrides["tau"] = args.tau
    if overrides:
        kw["config"] = {**base.config, **overrides}
    grid = getattr(args, "sweep_tau", None)
    if sweep and grid is None and base.tau_grid is None:
        grid = DEFAULT_SWEEP
    if grid is not None:
        kw["tau_grid"] = parse_tau_grid(grid)
    if args.no_audit:
        kw["audit"] = False
    m = replace(base, **kw)
    _check_manifest(m)
    return m


def cmd_run(args, sweep: bool = False) -> int:
    m = _manifest_from_args(args, sweep)
    out = _out_dir(args)
    results, record = execute(m, out, workers=args.workers)
    sys.stdout.write(emit(results, args.emit))
    log.info("wrote %d files to %s", len(record["files"]) + 1, out)
    return EXIT_OK


def cmd_verify(args) -> int:
    paths: list[Path] = []
    for p in args.paths:
        p = Path(p)
        if p.is_dir():
            # a run directory keeps its logs under audit/; results.jsonl is not an audit log
            root = p / "audit" if (p / "audit").is_dir() else p
            paths.extend(sorted(root.rglob("*.jsonl")))
        else:
            paths.append(p)
    if not paths:
        print(json.dumps({"error": "no audit logs found"}))
        return EXIT_IO
    status = EXIT_OK
    for path in paths:
        try:
            rep = verify_file(path)
        except AuditParseError as exc:
            print(json.dumps({"path": str(path), "error": "parse", "record_index": exc.record_index,
                              "message": str(exc)}, sort_keys=True))
            status = max(status, EXIT_IO)
            continue
        except OSError as exc:
            print(json.dumps({"path": str(path), "error": "io", "message": str(exc)}, sort_keys=True))
            status = max(status, EXIT_IO)
            continue
        if args.json:
            print(json.dumps(rep.to_dict(), sort_keys=True))
        else:
            print(f"{path}: {rep.coordinator} episodes={rep.episodes} records={rep.records} "
                  f"divergences={len(rep.divergences)} policy_violations={len(rep.violations)}")
            for d in rep.divergences[: args.max_report]:
                print(f"  {d}")
        if not rep.ok:
            status = max(status, EXIT_FINDINGS)
    return status


def _oracle_rows(args) -> list[dict]:
    rows = []
    kind = _coordinator_list(args.coordinator or "camco")[0]
    if args.random:
        for i in range(args.random):
            inst = random_instance(args.seed or 0, i, n_agents=(1, 3), n_actions=(2, 6), allow_infeasible=True)
            c = compare(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg, kind)
            rows.append({"instance": i, **c.to_dict()})
        return rows
    for name in _scenario_list(args.scenario or ["S1"]):
        defn = resolve_scenario(name, args.seed or 0)
        cfg = defn.config(**_parse_set(args.set))
        for ep in range(args.episodes if args.episodes is not None else 50):
            c = compare(defn.roster, defn.sample(ep), defn.bundle, defn.risk_profile, cfg, kind)
            rows.append({"scenario": defn.id, "episode": ep, **c.to_dict()})
    return rows


def cmd_oracle(args) -> int:
    try:
        rows = _oracle_rows(args)
    except OracleCapExceeded as exc:
        print(json.dumps({"error": "oracle_cap", "message": str(exc)}))
        return EXIT_CONFIG
    if args.json:
        for r in rows:
            print(dumps(r))
    n = len(rows)
    accepted = [r for r in rows if r["status"] == "Accepted"]
    gaps = [r["gap"] for r in accepted if r["gap"] is not None]
    summary = {
        "instances": n,
        "accepted": len(accepted),
        "oracle_infeasible": sum(1 for r in rows if not r["oracle_exists"]),
        "unsound": sum(1 for r in rows if not r["sound"]),
        "fail_incorrect": sum(1 for r in rows if not r["fail_correct"]),
        "fails_joint_phi": sum(1 for r in rows if r["fail_cause"] == "joint_phi"),
        "fails_risk": sum(1 for r in rows if r["fail_cause"] == "risk"),
        "mean_gap": (sum(gaps) / len(gaps)) if gaps else None,
        "max_gap": max(gaps) if gaps else None,
        "optimal": sum(1 for g in gaps if g <= 1e-9),
    }
    print(dumps({"record": "oracle_summary", **summary}))
    # B1/B2/B4 are expected to be unsound; only report a failing status for the enforcing coordinators
    kind = _coordinator_list(args.coordinator or "camco")[0]
    enforcing = kind in ("camco", "b3")
    return EXIT_FINDINGS if enforcing and (summary["unsound"] or summary["fail_incorrect"]) else EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    for name in args.paths:
        try:
            defn = resolve_scenario(name, 0)
        except (ConfigInvalid, UnknownScenario) as exc:
            print(f"{name}: invalid: {exc}")
            status = EXIT_CONFIG
            continue
        problems: list[str] = []
        first = defn.sample(0)
        problems += defn.bundle.closure_problems([a.agent_id for a in defn.roster], first.variables)
        fb = FallbackOperator(defn.roster, defn.bundle, defn.risk_profile, defn.tau_default)
        for ep in range(args.states):
            st = defn.sample(ep)
            rep = validate_roster(defn.roster, st, bundle=defn.bundle, risk_profile=defn.risk_profile)
            problems += [f"state {ep}: {f.code} {f.agent_id or ''} {f.detail}".rstrip() for f in rep.findings]
            if not fb.verify(st):
                problems.append(f"state {ep}: all-safe-defaults tuple is not compliant")
            if len(problems) > 20:
                break
        if problems:
            status = EXIT_CONFIG
            print(f"{name}: invalid")
            for p in problems[:20]:
                print(f"  {p}")
        else:
            print(f"{name}: ok ({defn.id}, {len(defn.roster)} agents, {len(defn.bundle.predicates)} predicates, "
                  f"{args.states} states checked)")
    return status


# ---------------------------------------------------------------------------
# parser


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="YAML run manifest; flags override its fields")
    p.add_argument("--scenario", action="append", help="s1, s2, s3, all, or a scenario file (repeatable)")
    p.add_argument("--coordinator", help="camco, b1, b2, b3, b4 or all (comma-separated)")
    p.add_argument("--episodes", type=int, help="episodes per batch (default 500)")
    p.add_argument("--seed", type=int, help="64-bit run seed (default 0)")
    p.add_argument("--tau", type=float, help="override the scenario's risk threshold")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="coordination config override")
    p.add_argument("--emit", choices=("table", "csv", "json-lines"), default="table")
    p.add_argument("--workers", type=int, default=1, help="worker processes (output does not depend on it)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--no-audit", action="store_true", help="skip audit logs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coordguard", description="Constraint-aware multi-agent coordination runs.")
    ap.add_argument("--version", action="version", version=f"coordguard {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run scenario x coordinator batches")
    _run_flags(p)
    p.add_argument("--sweep-tau", metavar="A:B:STEP", help="run every batch at each τ of the grid")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help=f"τ-sensitivity sweep (default grid {DEFAULT_SWEEP})")
    _run_flags(p)
    p.add_argument("--sweep-tau", metavar="A:B:STEP")
    p.set_defaults(func=lambda a: cmd_run(a, sweep=True))

    p = sub.add_parser("verify-audit", help="replay audit logs and recompute every logged value")
    p.add_argument("paths", nargs="+", help="log files or directories")
    p.add_argument("--json", action="store_true", help="one JSON report per file")
    p.add_argument("--max-report", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="compare a coordinator with the brute-force constrained optimum")
    p.add_argument("--scenario", action="append")
    p.add_argument("--coordinator", default="camco")
    p.add_argument("--episodes", type=int, help="scenario states to check (default 50)")
    p.add_argument("--random", type=int, metavar="N", help="use N random small instances instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--json", action="store_true", help="also print one line per instance")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate-config", help="check scenario files (or shipped ids)")
    p.add_argument("paths", nargs="+")
    p.add_argument("--states", type=int, default=1000, help="sampled states to check the fallback on")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, UnknownScenario) as exc:
        msg = exc.args[0] if isinstance(exc, UnknownScenario) and exc.args else str(exc)
        print(f"coordguard: config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"coordguard: io error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
