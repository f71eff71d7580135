"""
Risk indicator and daily operating cost.

The indicator f flags states whose bin representatives cross every
participating threshold. The wildfire risk probability of a state is the
chance that tomorrow is flagged. Costs follow the CostSchedule convention:
the decision taken on day t (1..T) is priced with entry t-1, the forced
post-horizon day with entry T.
"""

import logging
from typing import Union

import numpy as np

from .markov_model import TransitionModel
from .models import CostSchedule, Direction, RiskRule, StateSpace

logger = logging.getLogger(__name__)


def _passes(values: np.ndarray, threshold: float, direction: Direction) -> np.ndarray:
    if direction == Direction.AT_MOST:
        return values <= threshold
    return values >= threshold


def indicator_vector(space: StateSpace, rule: RiskRule) -> np.ndarray:
    """f evaluated on every state, as a float array of zeros and ones."""
    names = [p.name for p in space.phenomena]
    unknown = sorted(set(rule.thresholds) - set(names))
    if unknown:
        raise ValueError(f"risk rule names phenomena missing from the state space: {unknown}")
    reps = space.representative_matrix()
    flagged = np.ones(space.cardinality, dtype=bool)
    for i, name in enumerate(names):
        if name in rule.thresholds:
            t = rule.thresholds[name]
            flagged &= _passes(reps[:, i], t.threshold, t.direction)
    logger.debug(f"risk rule flags {int(flagged.sum())} of {space.cardinality} states")
    return flagged.astype(float)


def risk_indicator(space: StateSpace, state: int, rule: RiskRule) -> int:
    """1 iff every participating phenomenon of the state crosses its threshold."""
    space.decode(state)
    return int(indicator_vector(space, rule)[state])


def wrp_vector(model: TransitionModel, f: np.ndarray) -> np.ndarray:
    """Wildfire risk probability of every state: E[f(X_next) | X = x]."""
    return model.P @ np.asarray(f, dtype=float)


def wrp(model: TransitionModel, f: np.ndarray, x: int) -> float:
    return float(model.P[x] @ np.asarray(f, dtype=float))


def switching_cost(u_prev: int, u: int, s1: float, s2: float) -> float:
    """s2 when switching 0->1, s1 when switching 1->0, zero otherwise."""
    return max(s1 * (u_prev - u), s2 * (u - u_prev), 0.0)


def stage_cost(
    costs: CostSchedule,
    t: int,
    u_prev: int,
    u: int,
    f_next: Union[int, float],
) -> float:
    """
    Realized operating cost of the decision taken on day t.

    Args:
        costs: Cost schedule
        t: Decision day, 1..T+1 (T+1 is the forced post-horizon day)
        u_prev: Previous decision
        u: Decision for the next day
        f_next: Risk indicator of the next day, or its expectation

    Returns:
        a u + A f (1 - u) + switching cost, priced with entry t-1
    """
    if not 1 <= t <= costs.horizon + 1:
        raise ValueError(f"day {t} outside 1..{costs.horizon + 1}")
    p = t - 1
    return (
        costs.a[p] * u
        + costs.A[p] * f_next * (1 - u)
        + switching_cost(u_prev, u, costs.s1[p], costs.s2[p])
    )


def expected_stage_cost(
    costs: CostSchedule,
    t: int,
    u_prev: int,
    u: int,
    wrp_x: float,
) -> float:
    """Conditional expectation of stage_cost given today's state."""
    return stage_cost(costs, t, u_prev, u, wrp_x)


def vll_adjustment(voll_per_mwh: float, unserved_mwh: float) -> float:
    """Per-event adjustment from a value of lost load and the energy one shutoff leaves unserved."""
    if voll_per_mwh < 0 or unserved_mwh < 0:
        raise ValueError("value of lost load and unserved energy must be nonnegative")
    return voll_per_mwh * unserved_mwh


def expected_stage_table(costs: CostSchedule, wrp_values: np.ndarray) -> np.ndarray:
    """
    Expected stage cost for every (entry, u_prev, u, state).

    Returns:
        Array of shape (T+1, 2, 2, n) where [p, u_prev, u, x] is the expected
        cost of deciding u in state x with entry p of the schedule
    """
    A, a, s1, s2 = costs.arrays()
    w = np.asarray(wrp_values, dtype=float)
    table = np.empty((len(A), 2, 2, w.size))
    for u_prev in (0, 1):
        for u in (0, 1):
            switch = np.where(u > u_prev, s2, np.where(u < u_prev, s1, 0.0))
            table[:, u_prev, u, :] = (a * u + switch)[:, None] + (A * (1 - u))[:, None] * w[None, :]
    return table
