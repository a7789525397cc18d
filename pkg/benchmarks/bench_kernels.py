"""Compiled vs pure-Python kernels, and one end-to-end CAMCO batch per backend.

    python benchmarks/bench_kernels.py [--repeat 5] [--episodes 200]

Each kernel is timed on representative inputs with both implementations and
the results are checked for exact agreement first. The batch timing runs in
a subprocess per backend because the backend is fixed at import.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from coordguard import kernels

BATCH_SNIPPET = """
import time
from coordguard import kernels
from coordguard.runner import run_batch
from coordguard.scenarios import build_scenario
d = build_scenario("{sid}", 0)
t = time.perf_counter()
run_batch(d, "camco", {episodes})
print(kernels.BACKEND, time.perf_counter() - t)
"""


def _inputs(rng: np.random.Generator) -> dict:
    n_actions, n_cands, n_feat, dim, n_half = 12, 64, 6, 6, 4
    numeric = np.array([1, 1, 0, 0, 1, 0], dtype=np.int8)
    return {
        "argmax": (rng.uniform(0, 2, n_actions), rng.uniform(0, 1, n_actions), 0.75),
        "distances": (rng.integers(0, 3, n_feat).astype(np.float64), rng.integers(0, 3, (n_cands, n_feat)).astype(np.float64),
                      np.ones(n_feat), numeric),
        "dykstra": (rng.uniform(-1, 2, dim), np.zeros(dim), np.ones(dim), rng.uniform(0.1, 1, (n_half, dim)),
                    rng.uniform(0.5, 1.5, n_half), 1e-9, 10_000),
    }


def _calls(mod, inp):
    return {
        "shaped_argmax": lambda: mod.shaped_argmax(*inp["argmax"]),
        "edit_distances": lambda: mod.edit_distances(*inp["distances"]),
        "nearest": lambda: mod.nearest(*inp["distances"]),
        "dykstra": lambda: mod.dykstra(*inp["dykstra"]),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.tobytes() == np.asarray(b).tobytes()
    return a == b


def bench_kernels(repeat: int) -> list[tuple[str, float, float | None]]:
    inp = _inputs(np.random.default_rng(0))
    py = _calls(kernels.pure, inp)
    cy = _calls(kernels.compiled, inp) if kernels.compiled is not None else None
    rows = []
    for name, fn in py.items():
        number = 200 if name == "dykstra" else 5000
        t_py = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        t_cy = None
        if cy is not None:
            if not _same(fn(), cy[name]()):
                raise SystemExit(f"{name}: backends disagree")
            t_cy = min(timeit.repeat(cy[name], number=number, repeat=repeat)) / number
        rows.append((name, t_py, t_cy))
    return rows


def bench_batch(episodes: int) -> dict[str, float]:
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, COORDGUARD_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", BATCH_SNIPPET.format(sid="S3", episodes=episodes)],
                             env=env, capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        out[backend] = float(secs)
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=200)
    args = ap.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<16}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, t_py, t_cy in bench_kernels(args.repeat):
        cy = f"{t_cy * 1e6:14.2f}" if t_cy is not None else f"{'n/a':>14}"
        sp = f"{t_py / t_cy:9.1f}x" if t_cy else f"{'n/a':>10}"
        print(f"{name:<16}{t_py * 1e6:14.2f}{cy}{sp}")
    print(f"\nCAMCO on S3, {args.episodes} episodes:")
    for backend, secs in sorted(bench_batch(args.episodes).items()):
        print(f"  {backend:<8}{secs:8.3f} s")


if __name__ == "__main__":
    main()
