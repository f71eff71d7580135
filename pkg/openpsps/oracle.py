"""
Shared machinery for the exhaustive checks.

- Desk-scale guard for brute-force oracles
- OracleResult, the common return type of every oracle
- Exact evaluation of a budgeted decision rule over the whole chain
- Two-objective Pareto frontiers (Minkowski sums with dominance pruning),
  used for threshold allocation
"""

import logging
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from shared import constants

from .errors import BudgetViolationError, ScaleGuardError
from .markov_model import TransitionModel
from .models import CostSchedule
from .risk_cost import expected_stage_table, wrp_vector

logger = logging.getLogger(__name__)

# rule(t, k, u_prev, x) -> u
BudgetRule = Callable[[int, int, int, int], int]


def check_desk_scale(T: int, n_states: int) -> None:
    """Refuse brute-force work above the configured horizon and state limits."""
    if T > constants.ORACLE_MAX_T or n_states > constants.ORACLE_MAX_STATES:
        raise ScaleGuardError(
            f"oracle limited to T <= {constants.ORACLE_MAX_T} and "
            f"{constants.ORACLE_MAX_STATES} states, got T={T} with {n_states} states"
        )


class OracleResult(BaseModel):
    """
    Optimal value and policy of an exhaustive backward induction.

    values[x0] is the optimum when the day before the first decision is in
    state x0; first_day[x] the optimum once the first decision day is
    observed in state x.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    first_day: np.ndarray
    policy: Dict[Tuple[int, ...], int] = Field(default_factory=dict)
    branches: Dict[Tuple[int, ...], Tuple[float, float]] = Field(default_factory=dict)
    expected_count: Optional[np.ndarray] = None


# =============================================================================
# Rule evaluation
# =============================================================================

def evaluate_budget_rule(
    T: int,
    N: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
    rule: BudgetRule,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact expected operating cost and event count of a budgeted rule.

    The rule sees the decision day t (1..T), the remaining budget k, the
    previous decision and today's state.

    Returns:
        (expected cost, expected count), both indexed by the state of day 0

    Raises:
        BudgetViolationError: If the rule calls an event with k = 0
    """
    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    A, _, s1, _ = costs.arrays()
    cost = np.empty((N + 1, 2, n))
    count = np.zeros((N + 1, 2, n))
    for u_prev in (0, 1):
        cost[:, u_prev, :] = u_prev * s1[T] + A[T] * w
    for t in range(T, 0, -1):
        next_cost = cost @ P.T
        next_count = count @ P.T
        new_cost = np.empty_like(cost)
        new_count = np.empty_like(count)
        for k in range(N + 1):
            for u_prev in (0, 1):
                for x in range(n):
                    u = int(rule(t, k, u_prev, x))
                    if u == 1 and k == 0:
                        raise BudgetViolationError(
                            f"rule called an event on day {t} with no budget left"
                        )
                    new_cost[k, u_prev, x] = stage[t - 1, u_prev, u, x] + next_cost[k - u, u, x]
                    new_count[k, u_prev, x] = u + next_count[k - u, u, x]
        cost, count = new_cost, new_count
    return P @ cost[N, 0], P @ count[N, 0]


# =============================================================================
# Pareto frontiers
# =============================================================================

class Frontier:
    """
    Points (weight, value) where no point has both a smaller weight and a
    smaller value than another. Sorted by increasing weight, so values are
    strictly decreasing. Optionally carries, per point, the index chosen in
    each combined successor frontier.
    """

    def __init__(self, weight: np.ndarray, value: np.ndarray, choice: Optional[np.ndarray] = None):
        self.weight = np.asarray(weight, dtype=float)
        self.value = np.asarray(value, dtype=float)
        self.choice = choice

    def __len__(self) -> int:
        return self.weight.size

    @classmethod
    def single(cls, weight: float, value: float, track: bool = False) -> "Frontier":
        choice = np.zeros((1, 0), dtype=int) if track else None
        return cls(np.array([weight]), np.array([value]), choice)

    def best_within(self, limit: np.ndarray, atol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray]:
        """
        Smallest value among points with weight <= limit, vectorized over limits.

        Returns:
            (values, indices); value is +inf and index -1 where nothing fits
        """
        limit = np.asarray(limit, dtype=float)
        slack = atol * np.maximum(1.0, np.abs(limit))
        idx = np.searchsorted(self.weight, limit + slack, side="right") - 1
        values = np.where(idx >= 0, self.value[np.clip(idx, 0, None)], np.inf)
        return values, idx


def pareto_prune(front: Frontier) -> Frontier:
    """Drop dominated points; ties in weight keep the smallest value."""
    if len(front) == 0:
        return front
    order = np.lexsort((front.value, front.weight))
    w, v = front.weight[order], front.value[order]
    running = np.minimum.accumulate(v)
    keep = np.ones(v.size, dtype=bool)
    keep[1:] = v[1:] < running[:-1]
    choice = front.choice[order][keep] if front.choice is not None else None
    return Frontier(w[keep], v[keep], choice)


def weighted_sum(
    fronts: Sequence[Frontier],
    probs: Sequence[float],
    track: bool = False,
    max_points: int = constants.FRONTIER_MAX_POINTS,
) -> Frontier:
    """
    Frontier of sum_i probs[i] * (one point of fronts[i]).

    Successors with zero probability are skipped (their choice index is -1).
    Any empty successor with positive probability makes the result empty.

    Raises:
        ScaleGuardError: If an intermediate frontier exceeds max_points
    """
    acc = Frontier.single(0.0, 0.0, track=track)
    for i, (front, p) in enumerate(zip(fronts, probs)):
        if p <= 0:
            if track:
                acc.choice = np.hstack([acc.choice, np.full((len(acc), 1), -1, dtype=int)])
            continue
        if len(front) == 0:
            empty_choice = np.zeros((0, i + 1), dtype=int) if track else None
            return Frontier(np.empty(0), np.empty(0), empty_choice)
        if len(acc) * len(front) > 20 * max_points:
            raise ScaleGuardError(
                f"frontier of {len(acc) * len(front)} candidate points exceeds the configured limit"
            )
        w = (acc.weight[:, None] + p * front.weight[None, :]).ravel()
        v = (acc.value[:, None] + p * front.value[None, :]).ravel()
        choice = None
        if track:
            m, k = len(acc), len(front)
            left = np.repeat(acc.choice, k, axis=0)
            right = np.tile(np.arange(k), m)[:, None]
            choice = np.hstack([left, right])
        acc = pareto_prune(Frontier(w, v, choice))
        if len(acc) > max_points:
            raise ScaleGuardError(
                f"frontier grew to {len(acc)} points; use a smaller instance or grid"
            )
    return acc


def frontier_from_steps(weights: np.ndarray, values: np.ndarray) -> Frontier:
    """Frontier of a step function given on a grid (non-finite values dropped)."""
    finite = np.isfinite(values)
    return pareto_prune(Frontier(weights[finite], values[finite], None))
