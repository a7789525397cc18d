"""Generic utility and indicator functions usable from any config.

Both families look actions up by label in a ``values`` table and optionally
scale by state-dependent factors. A factor spec is a mapping::

    {var: amount, lo: 1000, hi: 500000, log: true, base: 0.2, slope: 0.8}

and evaluates to ``base + slope * t`` where ``t`` is the position of the
variable inside ``[lo, hi]`` (clipped to [0, 1], optionally on a log scale).
Boolean variables give t = 1 when true.
"""

from __future__ import annotations

import math
from typing import Any, Mapping, Sequence

from .registry import indicator, utility


def unit_position(x: Any, lo: float, hi: float, log: bool = False) -> float:
    if isinstance(x, bool):
        return 1.0 if x else 0.0
    if not isinstance(x, (int, float)):
        return 0.0
    if log:
        if x <= 0 or lo <= 0:
            return 0.0
        x, lo, hi = math.log(x), math.log(lo), math.log(hi)
    if hi == lo:
        return 1.0 if x >= hi else 0.0
    t = (x - lo) / (hi - lo)
    return min(1.0, max(0.0, t))


def factor(state, spec: Mapping[str, Any]) -> float:
    t = unit_position(state.get(spec["var"]), float(spec.get("lo", 0.0)), float(spec.get("hi", 1.0)),
                      bool(spec.get("log", False)))
    return float(spec.get("base", 0.0)) + float(spec.get("slope", 1.0)) * t


def scaled_lookup(label: str | None, state, params: Mapping[str, Any]) -> float:
    """values[label] times every factor, plus per-label additive modifiers."""
    values = params.get("values", {})
    v = float(values.get(label, params.get("default", 0.0)))
    if v != 0.0:
        for spec in params.get("factors", ()):
            v = v * factor(state, spec)
    for mod in params.get("modifiers", ()):
        slope = mod.get("per_label", {}).get(label)
        if slope:
            v = v + float(slope) * unit_position(
                state.get(mod["var"]), float(mod.get("lo", 0.0)), float(mod.get("hi", 1.0)), bool(mod.get("log", False))
            )
    cap = params.get("cap")
    if cap is not None:
        v = min(v, float(cap))
    return max(0.0, v)


@utility("constant_table")
def constant_table(state, action, params):
    return float(params.get("values", {}).get(action.label, params.get("default", 0.0)))


@utility("scaled_table")
def scaled_table_utility(state, action, params):
    return scaled_lookup(action.label, state, params)


@indicator("constant_table")
def constant_indicator(action, state, params):
    return float(params.get("values", {}).get(action.label, params.get("default", 0.0)))


@indicator("scaled_table")
def scaled_table_indicator(action, state, params):
    return scaled_lookup(action.label, state, params)


@utility("quadratic_target")
def quadratic_target(state, action, params):
    """Concave utility for continuous agents: peak - sum_j w_j (x_j - target_j)^2, floored at 0."""
    x: Sequence[float] = action.vector or ()
    target = params.get("target", [0.0] * len(x))
    weights = params.get("weights", [1.0] * len(x))
    v = float(params.get("peak", 1.0))
    for xi, ti, wi in zip(x, target, weights):
        v = v - float(wi) * (xi - float(ti)) ** 2
    return max(0.0, v)


@indicator("linear_load")
def linear_load(action, state, params):
    """Non-negative linear risk c . x for continuous agents (0 for discrete actions)."""
    x = action.vector
    if x is None:
        return 0.0
    return max(0.0, sum(float(c) * xi for c, xi in zip(params.get("coef", ()), x)))
