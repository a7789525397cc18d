"""Risk-shaped utility and the dual multiplier.

Three dual update rules are available:

* ``Alg1Ratio``        λ ← λ + δ · max(1, R_tot/τ)          (default)
* ``HingeAscent``      λ ← λ + α · max(0, R_tot − τ)
* ``DiminishingHinge`` λ ← λ + (η0/√t) · max(0, R_tot − τ)
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .domain import ActionValue, AgentSpec, CoordinationConfig, DualRule, EnterpriseState
from .risk import RiskProfile

GRID_POINTS = 33
# above this many product-grid points the continuous search goes coordinate-wise
MAX_PRODUCT_GRID = 33**3


def shaped_utility(utility: float, risk: float, lam: float) -> float:
    return utility - lam * risk


@dataclass(frozen=True)
class LambdaState:
    """The multiplier, the index ``iteration`` of the round it will be used in, and its history.

    ``history`` holds ``(iteration, lambda_after, r_tot)`` per update.
    """

    lam: float
    iteration: int = 1
    rule: DualRule = DualRule.ALG1_RATIO
    history: tuple[tuple[int, float, float], ...] = ()

    @classmethod
    def start(cls, cfg: CoordinationConfig) -> LambdaState:
        return cls(float(cfg.lambda0), 1, cfg.dual_update_rule, ())


def lambda_increment(rule: DualRule, r_tot: float, tau: float, t: int, cfg: CoordinationConfig) -> float:
    rule = DualRule(rule)
    if rule is DualRule.ALG1_RATIO:
        return cfg.delta * max(1.0, r_tot / tau)
    excess = max(0.0, r_tot - tau)
    if rule is DualRule.HINGE_ASCENT:
        return cfg.alpha * excess
    return cfg.eta0 / math.sqrt(t) * excess


def update_lambda(ls: LambdaState, r_tot: float, tau: float, cfg: CoordinationConfig) -> LambdaState:
    if r_tot < 0 or tau <= 0:
        raise ValueError("need r_tot >= 0 and tau > 0")
    new = ls.lam + lambda_increment(ls.rule, r_tot, tau, ls.iteration, cfg)
    return LambdaState(new, ls.iteration + 1, ls.rule, ls.history + ((ls.iteration, new, r_tot),))


# ---------------------------------------------------------------------------
# best response


class ActionTable:
    """Utilities and risks of every action of one discrete agent in one state.

    Neither depends on λ, so a negotiation builds the table once and each
    round is a single argmax kernel call.
    """

    def __init__(self, agent: AgentSpec, state: EnterpriseState, profile: RiskProfile):
        self.agent = agent
        self.actions = agent.actions
        self.utility = np.array([agent.utility_of(state, a) for a in self.actions], dtype=np.float64)
        self.risk = np.array([profile.agent_risk(agent.agent_id, a, state) for a in self.actions], dtype=np.float64)
        self._index = {a: i for i, a in enumerate(self.actions)}

    def best(self, lam: float) -> ActionValue:
        return self.actions[kernels.shaped_argmax(self.utility, self.risk, float(lam))]

    def best_index(self, lam: float) -> int:
        return kernels.shaped_argmax(self.utility, self.risk, float(lam))

    def risk_of(self, action: ActionValue) -> float | None:
        i = self._index.get(action)
        return None if i is None else float(self.risk[i])

    def utility_of(self, action: ActionValue) -> float | None:
        i = self._index.get(action)
        return None if i is None else float(self.utility[i])


def _grid(lo: float, hi: float, n: int = GRID_POINTS) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _continuous_best(agent: AgentSpec, state: EnterpriseState, lam: float, profile: RiskProfile) -> ActionValue:
    def score(x) -> float:
        a = ActionValue.continuous(x)
        return agent.utility_of(state, a) - lam * profile.agent_risk(agent.agent_id, a, state)

    def search(bounds) -> tuple[float, ...]:
        axes = [_grid(lo, hi) for lo, hi in bounds]
        if GRID_POINTS ** len(bounds) <= MAX_PRODUCT_GRID:
            best_x, best_v = None, -math.inf
            for x in itertools.product(*axes):
                v = score(x)
                if v > best_v:
                    best_x, best_v = x, v
            return best_x
        # coordinate-wise sweeps from the box centre until no coordinate moves
        x = [(lo + hi) / 2.0 for lo, hi in bounds]
        for _ in range(8):
            moved = False
            for i, axis in enumerate(axes):
                cur = score(x)
                for c in axis:
                    trial = x[:i] + [c] + x[i + 1 :]
                    v = score(trial)
                    if v > cur:
                        cur, x, moved = v, trial, True
            if not moved:
                break
        return tuple(x)

    coarse = search(agent.box)
    refined_bounds = []
    for xi, (lo, hi) in zip(coarse, agent.box):
        cell = (hi - lo) / (GRID_POINTS - 1)
        refined_bounds.append((max(lo, xi - cell), min(hi, xi + cell)))
    fine = search(refined_bounds)
    if score(fine) > score(coarse):
        return ActionValue.continuous(fine)
    return ActionValue.continuous(coarse)


def best_response(agent: AgentSpec, state: EnterpriseState, lam: float, profile: RiskProfile) -> ActionValue:
    """argmax over A_i of U − λR; ties go to the first action in canonical order."""
    if agent.is_discrete:
        if not agent.actions:
            raise ValueError(f"agent {agent.agent_id!r} has an empty action space")
        return ActionTable(agent, state, profile).best(lam)
    return _continuous_best(agent, state, lam, profile)


def zero_risk_threshold(utilities: Sequence[float], risks: Sequence[float]) -> float | None:
    """A λ beyond which the shaped argmax has zero risk (None if no zero-risk action).

    Any λ > (max U − max zero-risk U) / (min positive R) works.
    """
    zero = [u for u, r in zip(utilities, risks) if r == 0.0]
    if not zero:
        return None
    pos = [r for r in risks if r > 0.0]
    if not pos:
        return 0.0
    return max(0.0, (max(utilities) - max(zero)) / min(pos))
