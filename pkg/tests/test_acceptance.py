"""End-to-end acceptance checks. Each test records one PASS/FAIL line that is
printed in the terminal summary, whether or not its assertion holds."""

import itertools
import time

import numpy as np
import pytest

from coordguard.cli import RunManifest, execute
from coordguard.domain import ActionValue
from coordguard.negotiation import build_pipelines, negotiate
from coordguard.oracle import compare
from coordguard.projection import Outcome, project_continuous, project_discrete
from coordguard.randomgen import random_instance
from coordguard.runner import run_batch, tau_sensitivity_sweep
from coordguard.scenarios import build_scenario
from coordguard.verify import verify_file

from conftest import ACCEPTANCE_LINES

SCENARIOS = ("S1", "S2", "S3")
SEEDS = (0, 1, 2, 3, 4)
KINDS = ("camco", "b1", "b2", "b3", "b4")
EPISODES = 500
N_PROPERTY = 10_000


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def table():
    """(scenario, seed, kind) -> BatchResult, plus the CAMCO wall time."""
    out, camco_secs = {}, 0.0
    for sid, seed in itertools.product(SCENARIOS, SEEDS):
        defn = build_scenario(sid, seed)
        for kind in KINDS:
            t0 = time.perf_counter()
            out[sid, seed, kind] = run_batch(defn, kind, EPISODES).result
            if kind == "camco":
                camco_secs += time.perf_counter() - t0
    return out, camco_secs


def per_scenario(results, kind, attr):
    return {sid: [getattr(results[sid, s, kind], attr) for s in SEEDS] for sid in SCENARIOS}


def span(values):
    return f"{min(values):.3g}-{max(values):.3g}"


def test_criterion_01_zero_violations(table):
    results, secs = table
    rates = [results[sid, s, "camco"].violation_rate for sid in SCENARIOS for s in SEEDS]
    ok = all(r == 0.0 for r in rates) and secs < 60.0
    report(1, ok, f"CAMCO max violation rate {max(rates)} over 15 batches x {EPISODES}, {secs:.1f}s (< 60s)")


def test_criterion_02_rules_baseline_zero_violations(table):
    results, _ = table
    rates = [results[sid, s, "b3"].violation_rate for sid in SCENARIOS for s in SEEDS]
    report(2, all(r == 0.0 for r in rates), f"B3 max violation rate {max(rates)}")


def test_criterion_03_bounded_risk(table):
    results, _ = table
    ratios = per_scenario(results, "camco", "mean_risk_ratio")
    ok = all(r < 1.0 for v in ratios.values() for r in v)
    report(3, ok, "CAMCO risk ratio " + ", ".join(f"{k} {span(v)}" for k, v in ratios.items()))


def test_criterion_04_baseline_ordering(table):
    results, _ = table
    bad, parts = [], []
    for sid in SCENARIOS:
        for s in SEEDS:
            b1, b2, b4 = (results[sid, s, k].violation_rate for k in ("b1", "b2", "b4"))
            if not (b1 > b2 > b4 > 0 and b1 >= 0.05):
                bad.append((sid, s, b1, b2, b4))
        v = {k: [100 * results[sid, s, k].violation_rate for s in SEEDS] for k in ("b1", "b2", "b4")}
        parts.append(f"{sid} B1 {span(v['b1'])}% B2 {span(v['b2'])}% B4 {span(v['b4'])}%")
    report(4, not bad, "; ".join(parts) + (f"; violations of ordering: {bad}" if bad else ""))


def test_criterion_05_retention(table):
    results, _ = table
    bad, parts = [], []
    for sid in SCENARIOS:
        cm = [results[sid, s, "camco"].utility_retention_pct for s in SEEDS]
        b3 = [results[sid, s, "b3"].utility_retention_pct for s in SEEDS]
        bad += [(sid, s) for s, c, b in zip(SEEDS, cm, b3) if not (c >= 85.0 and c - b >= 10.0)]
        parts.append(f"{sid} CAMCO {span(cm)}% vs B3 {span(b3)}%")
    report(5, not bad, "; ".join(parts))


def test_criterion_06_deadlock(table):
    results, _ = table
    bad, parts = [], []
    for sid in SCENARIOS:
        cm = [results[sid, s, "camco"].deadlock_rate for s in SEEDS]
        b3 = [results[sid, s, "b3"].deadlock_rate for s in SEEDS]
        bad += [(sid, s) for s, c, b in zip(SEEDS, cm, b3) if not (c < b and c <= 0.05)]
        parts.append(f"{sid} CAMCO {span([100 * c for c in cm])}% vs B3 {span([100 * b for b in b3])}%")
    report(6, not bad, "; ".join(parts))


def test_criterion_07_convergence(table):
    results, _ = table
    conv = per_scenario(results, "camco", "mean_convergence_iterations")
    ok = all(1.5 <= c <= 4.0 for v in conv.values() for c in v)
    report(7, ok, "CAMCO rounds " + ", ".join(f"{k} {span(v)}" for k, v in conv.items()))


def test_criterion_08_termination():
    over = 0
    worst = 0.0
    for i in range(N_PROPERTY):
        k_max = 1 + i % 15
        inst = random_instance(8, i, k_max=k_max, allow_infeasible=i % 2 == 1)
        t0 = time.perf_counter()
        out = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg)
        worst = max(worst, time.perf_counter() - t0)
        if not (1 <= out.iterations_used <= k_max and len(out.lambda_trajectory) == out.iterations_used):
            over += 1
    report(8, over == 0, f"{N_PROPERTY} instances, K_max 1-15, {over} beyond K_max, slowest call {1000 * worst:.1f} ms")


def _monotone_effective_risk(pipes, lams) -> bool:
    for p in pipes:
        risks = [p.risk(p.effective(lam)) for lam in lams]
        if any(b > a for a, b in zip(risks, risks[1:])):
            return False
    return True


def test_criterion_09_conditional_monotonicity():
    checked = counter = 0
    for i in range(N_PROPERTY):
        inst = random_instance(9, i)
        pipes = build_pipelines(inst.agents, inst.state, inst.bundle, inst.profile)
        out = negotiate(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg, pipelines=pipes)
        traj = list(out.lambda_trajectory)
        grid = sorted(set(traj) | set(np.linspace(0.0, max(traj) + 1.0, 41).tolist()))
        if any(b < a for a, b in zip(traj, traj[1:])) or not _monotone_effective_risk(pipes, grid):
            continue
        checked += 1
        r = [e.payload["r_tot"] for e in out.audit if e.kind.value == "RiskEval"]
        infeasible = r[:-1] if out.accepted else r
        if any(b > a for a, b in zip(infeasible, infeasible[1:])):
            counter += 1
    ok = counter == 0 and checked > N_PROPERTY // 2
    report(9, ok, f"{checked}/{N_PROPERTY} instances meet the monotone-response condition, {counter} counterexamples")


# independent reference for discrete projection

LABELS = ("hold", "approve", "reject", "escalate", "defer")


def _random_action(rng):
    attrs = {}
    if rng.random() < 0.8:
        attrs["amount"] = int(rng.integers(0, 100)) if rng.random() < 0.5 else round(float(rng.uniform(0, 100)), 3)
    if rng.random() < 0.7:
        attrs["region"] = str(rng.choice(["eu", "us", "apac"]))
    if rng.random() < 0.5:
        attrs["urgent"] = bool(rng.random() < 0.5)
    return ActionValue.discrete(str(rng.choice(LABELS)), attrs)


def _ref_distance(a, b, ranges):
    total = 0.0 if a.label == b.label else 1.0
    for name in sorted(set(a.attrs) | set(b.attrs)):
        x, y = a.attrs.get(name), b.attrs.get(name)
        if x is None or y is None:
            total += 0.0 if x is None and y is None else 1.0
        elif all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y)):
            lo, hi = ranges.get(name, (0.0, 1.0))
            total += abs(float(x) - float(y)) / (hi - lo if hi > lo else 1.0)
        else:
            total += 0.0 if (type(x), x) == (type(y), y) else 1.0
    return total


def _ref_nearest(query, feasible):
    nums = {}
    for a in list(feasible) + [query]:
        for k, v in a.attrs.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                nums.setdefault(k, []).append(float(v))
    ranges = {k: (min(v), max(v)) for k, v in nums.items()}
    ordered = sorted(set(feasible), key=lambda a: a.sort_key)
    dists = [_ref_distance(query, c, ranges) for c in ordered]
    best = min(range(len(ordered)), key=lambda i: (dists[i], i))
    return ordered[best], dists[best]


def _grid_projection(x, box, halfspaces, pts=21, levels=36):
    """Dense-grid nearest feasible point. The grid is laid on every face of the
    polytope (affine hull of each active-constraint set) and refined around the
    incumbent; faces whose hull is already farther than the incumbent are skipped."""
    x = np.asarray(x, dtype=float)
    d = len(box)
    rows, rhs = [], []
    for i, (lo, hi) in enumerate(box):
        rows += [-np.eye(d)[i], np.eye(d)[i]]
        rhs += [-lo, hi]
    for n, c in halfspaces:
        rows.append(np.asarray(n, dtype=float))
        rhs.append(c)
    A, b = np.array(rows), np.array(rhs)
    faces = []
    for k in range(d + 1):
        for S in map(list, itertools.combinations(range(len(A)), k)):
            if k and np.linalg.matrix_rank(A[S]) < k:
                continue
            if k:
                p0 = np.linalg.lstsq(A[S], b[S], rcond=None)[0]
                basis = np.linalg.svd(A[S])[2][k:].T
            else:
                p0, basis = np.zeros(d), np.eye(d)
            foot = p0 + basis @ (basis.T @ (x - p0))
            faces.append((float(np.linalg.norm(foot - x)), foot, basis))
    faces.sort(key=lambda f: f[0])
    best, best_d = None, np.inf
    for bound, foot, basis in faces:
        if bound >= best_d:
            break
        k = basis.shape[1]
        if k == 0:
            if (A @ foot <= b + 1e-12).all():
                best, best_d = foot, bound
            continue
        centre, width, inc = np.zeros(k), 4.0 * np.sqrt(d), None
        for _ in range(levels):
            axes = [np.linspace(c - width / 2, c + width / 2, pts) for c in centre]
            u = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, k)
            y = foot + u @ basis.T
            keep = (y @ A.T <= b + 1e-12).all(axis=1)
            u, y = u[keep], y[keep]
            if inc is not None:
                u, y = np.vstack([u, inc[0]]), np.vstack([y, inc[1]])
            if not len(y):
                break
            j = int(np.argmin(((y - x) ** 2).sum(axis=1)))
            inc = (u[j], y[j])
            centre, width = u[j], width / 2
        if inc is not None and np.linalg.norm(inc[1] - x) < best_d:
            best, best_d = inc[1], float(np.linalg.norm(inc[1] - x))
    return best


def test_criterion_10_projection_properties():
    rng = np.random.default_rng(10)
    dist_bad = idem_bad = clamp_bad = 0
    for _ in range(N_PROPERTY):
        feasible = [_random_action(rng) for _ in range(int(rng.integers(1, 9)))]
        query = feasible[0] if rng.random() < 0.1 else _random_action(rng)
        res = project_discrete(query, feasible)
        want, d = _ref_nearest(query, feasible)
        if res.action != want or res.distance != d:
            dist_bad += 1
        again = project_discrete(res.action, feasible)
        if again.outcome is not Outcome.UNCHANGED or again.action != res.action or again.distance != 0.0:
            idem_bad += 1
        dim = int(rng.integers(1, 5))
        box = [tuple(sorted(rng.uniform(-5, 5, 2))) for _ in range(dim)]
        x = rng.uniform(-8, 8, dim)
        got = project_continuous(x, box).action.vector
        if got != tuple(min(max(float(v), lo), hi) for v, (lo, hi) in zip(x, box)):
            clamp_bad += 1

    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 4))
        box = [(-1.0, 1.0)] * dim
        centre = rng.uniform(-0.5, 0.5, dim)
        halfspaces = []
        for _ in range(int(rng.integers(1, 4))):
            n = rng.normal(size=dim)
            n /= np.linalg.norm(n)
            halfspaces.append((tuple(n), float(n @ centre + rng.uniform(0.05, 0.5))))
        x = rng.uniform(-2.5, 2.5, dim)
        got = np.array(project_continuous(x, box, halfspaces).action.vector)
        worst = max(worst, float(np.abs(got - _grid_projection(x, box, halfspaces)).max()))
    ok = dist_bad == idem_bad == clamp_bad == 0 and worst <= 1e-6
    report(10, ok, f"{N_PROPERTY} discrete: {dist_bad} distance/argmin mismatches, {idem_bad} non-idempotent, "
                   f"{clamp_bad} clamp mismatches; box+halfspace max deviation {worst:.1e} on 100")


def test_criterion_11_oracle_soundness():
    unsound = incorrect = accepted = infeasible = 0
    for i in range(1000):
        inst = random_instance(11, i, n_agents=(1, 3), n_actions=(2, 6), allow_infeasible=True)
        c = compare(inst.agents, inst.state, inst.bundle, inst.profile, inst.cfg, "camco")
        unsound += not c.sound
        incorrect += not c.fail_correct
        accepted += c.status == "Accepted"
        infeasible += not c.oracle_exists
    report(11, unsound == incorrect == 0,
           f"1000 instances: {accepted} accepted, {infeasible} provably infeasible, "
           f"{unsound} unsound, {incorrect} accepted-when-infeasible")


def test_criterion_12_tau_sensitivity():
    bad, parts = [], []
    for sid in SCENARIOS:
        runs = [r.result for r in tau_sensitivity_sweep(build_scenario(sid, 0), "camco", episodes=EPISODES)]
        ret = [r.utility_retention_pct for r in runs]
        viol = max(r.violation_rate for r in runs)
        monotone = all(b >= a - 1.0 for a, b in zip(ret, ret[1:]))
        if len(runs) != 6 or viol != 0.0 or not monotone or ret[-1] - ret[0] < 10.0:
            bad.append(sid)
        parts.append(f"{sid} " + "/".join(f"{r:.1f}" for r in ret))
    report(12, not bad, "retention at tau 0.4..1.4: " + "; ".join(parts))


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_13_determinism_and_replay(tmp_path):
    manifests = [
        RunManifest(scenarios=SCENARIOS, coordinators=KINDS, episodes=200, seed=2024),
        RunManifest(scenarios=("S3",), coordinators=("camco",), episodes=100, seed=7,
                    tau_grid=(0.4, 0.6, 0.8, 1.0, 1.2, 1.4), config={"dual_update_rule": "HingeAscent"}),
    ]
    same = logs = divergent = 0
    for j, m in enumerate(manifests):
        execute(m, tmp_path / f"{j}a")
        execute(m, tmp_path / f"{j}b", workers=2)
        a, b = _tree(tmp_path / f"{j}a"), _tree(tmp_path / f"{j}b")
        same += a == b
        for path in sorted((tmp_path / f"{j}a" / "audit").glob("*.jsonl")):
            logs += 1
            divergent += not verify_file(path).ok
    ok = same == len(manifests) and divergent == 0 and logs == 21
    report(13, ok, f"{same}/{len(manifests)} manifests byte-identical on rerun, "
                   f"{logs} logs replayed, {divergent} with divergences")
