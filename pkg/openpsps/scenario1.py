"""
Budgeted shutoff scheduling.

build_s1 fills the continuation table g[d, k, u, x]: the expected future
operating cost with d free decisions left, k shutoffs left, previous decision
u and previous-day state x. Forward day t uses layer d = T + 1 - t. A
shutoff is called when tomorrow's wildfire risk probability reaches the
threshold derived from two neighbouring cells of the table.

The oracles here solve the penalized and hard-budget problems by exhaustive
induction over forward time, independently of the table code, at desk scale
only. The expected-budget problem is solved over fixed schedules, where the
shutoff count is known in advance.
"""

import itertools
import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import InfeasibleError
from .markov_model import TransitionModel, n_step
from .models import CostSchedule
from .oracle import OracleResult, check_desk_scale, evaluate_budget_rule
from .risk_cost import expected_stage_table, wrp_vector

logger = logging.getLogger(__name__)


class PolicyTableS1(BaseModel):
    """Continuation table of the budgeted problem, shape (T+1, N+1, 2, n)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: np.ndarray
    T: int
    N: int
    costs: CostSchedule
    wrp: np.ndarray

    @property
    def n_states(self) -> int:
        return self.g.shape[-1]


def _check_inputs(T: int, costs: CostSchedule, model: TransitionModel, f: np.ndarray) -> None:
    if T < 1:
        raise ValueError(f"horizon T must be at least 1, got {T}")
    if costs.horizon != T:
        raise ValueError(f"cost schedule covers {costs.horizon} days, horizon is {T}")
    if np.asarray(f).shape != (model.n_states,):
        shape = np.asarray(f).shape
        raise ValueError(f"risk indicator needs {model.n_states} entries, got {shape}")


def build_s1(
    T: int,
    N: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> PolicyTableS1:
    """
    Build the budgeted continuation table by backward induction.

    Args:
        T: Number of decision days
        N: Shutoff budget, 0 <= N <= T
        costs: Daily costs with T+1 entries
        model: Transition model
        f: Risk indicator per state

    Returns:
        PolicyTableS1

    Raises:
        ValueError: If N is outside 0..T or the inputs disagree in size
    """
    _check_inputs(T, costs, model, f)
    if not 0 <= N <= T:
        raise ValueError(f"budget N must lie in 0..T={T}, got {N}")

    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    A, a, s1, s2 = costs.arrays()
    # e[p] = expected wildfire cost of the day after a state, priced with entry p
    e = A[:, None] * w[None, :]

    g = np.empty((T + 1, N + 1, 2, n))
    never = P @ e[T]
    g[0, :, 0, :] = never
    g[0, :, 1, :] = never + s1[T]

    for d in range(1, T + 1):
        p = T - d
        never = P @ (e[p] + never)
        g[d, 0, 0, :] = never
        g[d, 0, 1, :] = never + s1[p]
        if N == 0:
            continue
        stay = g[d - 1, 1:, 0, :] + e[p]
        shut = g[d - 1, :-1, 1, :] + a[p]
        inner = np.concatenate([
            np.minimum(stay, shut + s2[p]),
            np.minimum(stay + s1[p], shut),
        ])
        outer = inner @ P.T
        g[d, 1:, 0, :] = outer[:N]
        g[d, 1:, 1, :] = outer[N:]

    logger.info(f"built budgeted table with shape {g.shape}")
    return PolicyTableS1(g=g, T=T, N=N, costs=costs, wrp=w)


# =============================================================================
# Threshold policy
# =============================================================================

def threshold_layer(table: PolicyTableS1, d: int, k: int, u_prev: int) -> np.ndarray:
    """Thresholds of every state at layer d with k shutoffs left."""
    if not 1 <= d <= table.T:
        raise ValueError(f"layer d must lie in 1..{table.T}, got {d}")
    if not 0 <= k <= table.N:
        raise ValueError(f"budget left must lie in 0..{table.N}, got {k}")
    if k == 0:
        return np.full(table.n_states, math.inf)
    p = table.T - d
    c = table.costs
    g = table.g[d - 1]
    offset = g[k - 1, 1] - g[k, 0] + c.a[p] + (1 - u_prev) * c.s2[p] - u_prev * c.s1[p]
    if c.A[p] > 0:
        return offset / c.A[p]
    # zero wildfire cost: shut off only when it is free
    return np.where(offset <= 0, -math.inf, math.inf)


def threshold_s1(table: PolicyTableS1, d: int, k: int, u_prev: int, x: int) -> float:
    """Risk-probability threshold at layer d; +inf once the budget is spent."""
    return float(threshold_layer(table, d, k, u_prev)[x])


def decide_s1(table: PolicyTableS1, d: int, k: int, u_prev: int, x: int) -> int:
    """1 iff budget remains and the risk probability reaches the threshold."""
    if k == 0:
        return 0
    return int(table.wrp[x] >= threshold_s1(table, d, k, u_prev, x))


def table_rule(table: PolicyTableS1):
    """decide_s1 as a rule of forward day t."""
    def rule(t: int, k: int, u_prev: int, x: int) -> int:
        return decide_s1(table, table.T + 1 - t, k, u_prev, x)
    return rule


def rollout_value(table: PolicyTableS1, model: TransitionModel, f: np.ndarray) -> np.ndarray:
    """Exact expected operating cost of the threshold policy, per day-0 state."""
    cost, _ = evaluate_budget_rule(table.T, table.N, table.costs, model, f, table_rule(table))
    return cost


# =============================================================================
# Oracles
# =============================================================================

def _terminal(costs: CostSchedule, w: np.ndarray) -> np.ndarray:
    """Cost of the forced post-horizon day by previous decision, shape (2, n)."""
    A, _, s1, _ = costs.arrays()
    T = costs.horizon
    return np.stack([A[T] * w, s1[T] + A[T] * w])


def oracle_budget(
    T: int,
    N: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> OracleResult:
    """
    Minimum expected operating cost with at most N shutoffs on every path.

    Backward induction over (day, shutoffs so far, previous decision, state).
    """
    _check_inputs(T, costs, model, f)
    check_desk_scale(T, model.n_states)
    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    V = np.broadcast_to(_terminal(costs, w), (N + 1, 2, n)).copy()
    policy, branches = {}, {}
    for t in range(T, 0, -1):
        ahead = V @ P.T
        new = np.empty_like(V)
        for c in range(N + 1):
            for u_prev in (0, 1):
                q0 = stage[t - 1, u_prev, 0] + ahead[c, 0]
                q1 = stage[t - 1, u_prev, 1] + ahead[c + 1, 1] if c < N else np.full(n, np.inf)
                new[c, u_prev] = np.minimum(q0, q1)
                for x in range(n):
                    policy[(t, c, u_prev, x)] = int(q1[x] < q0[x])
                    branches[(t, c, u_prev, x)] = (float(q0[x]), float(q1[x]))
        V = new
    first_day = V[0, 0].copy()
    return OracleResult(values=P @ first_day, first_day=first_day, policy=policy, branches=branches)


def oracle_penalized(
    T: int,
    N: int,
    gamma: float,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
    open_loop: bool = False,
) -> OracleResult:
    """
    Minimum expected operating cost plus gamma per shutoff beyond N.

    No hard cap: backward induction over (day, shutoffs so far, previous
    decision, state) with the penalty charged after the last day. With
    open_loop=True the decisions are a fixed schedule chosen on day 0, so
    the count is deterministic; policy is then keyed by (x0, t).
    """
    _check_inputs(T, costs, model, f)
    check_desk_scale(T, model.n_states)
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if open_loop:
        return _penalized_schedule(N, gamma, *schedule_costs(T, costs, model, f))
    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    used = np.arange(T + 2)
    penalty = gamma * np.maximum(0, used - N)
    V = _terminal(costs, w)[None, :, :] + penalty[:, None, None]
    count = np.broadcast_to(np.zeros(1), V.shape).copy()
    policy, branches = {}, {}
    for t in range(T, 0, -1):
        ahead = V @ P.T
        ahead_count = count @ P.T
        new, new_count = np.empty_like(V), np.empty_like(count)
        # shutoffs so far never exceed t - 1 before day t
        for m in range(T + 1):
            for u_prev in (0, 1):
                q0 = stage[t - 1, u_prev, 0] + ahead[m, 0]
                q1 = stage[t - 1, u_prev, 1] + ahead[m + 1, 1]
                pick = q1 < q0
                new[m, u_prev] = np.where(pick, q1, q0)
                new_count[m, u_prev] = np.where(pick, 1 + ahead_count[m + 1, 1], ahead_count[m, 0])
                if m < t:
                    for x in range(n):
                        policy[(t, m, u_prev, x)] = int(pick[x])
                        branches[(t, m, u_prev, x)] = (float(q0[x]), float(q1[x]))
        V[: T + 1], count[: T + 1] = new[: T + 1], new_count[: T + 1]
    first_day = V[0, 0].copy()
    return OracleResult(
        values=P @ first_day,
        first_day=first_day,
        policy=policy,
        branches=branches,
        expected_count=P @ count[0, 0],
    )


# =============================================================================
# Fixed schedules
# =============================================================================

def schedule_costs(
    T: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Expected operating cost of every fixed schedule u in {0,1}^T.

    Returns:
        (schedules, cost): schedules has shape (2^T, T); cost[s, x0] is the
        expected cost of schedule s when day 0 is in state x0
    """
    _check_inputs(T, costs, model, f)
    check_desk_scale(T, model.n_states)
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    schedules = np.array(list(itertools.product((0, 1), repeat=T)), dtype=int).reshape(-1, T)
    cost = np.zeros((len(schedules), model.n_states))
    prev = np.zeros(len(schedules), dtype=int)
    for t in range(1, T + 1):
        # expected stage cost from each day-0 state, shape (2, 2, n)
        expected = stage[t - 1] @ n_step(model, t).T
        cur = schedules[:, t - 1]
        cost += expected[prev, cur]
        prev = cur
    # forced post-horizon day, observed in state x_{T+1}
    cost += (_terminal(costs, w) @ n_step(model, T + 1).T)[prev]
    return schedules, cost


def _penalized_schedule(
    N: int,
    gamma: float,
    schedules: np.ndarray,
    cost: np.ndarray,
) -> OracleResult:
    count = schedules.sum(axis=1)
    total = cost + gamma * np.maximum(0, count - N)[:, None]
    best = np.argmin(total, axis=0)
    n = cost.shape[1]
    policy = {
        (x0, t): int(schedules[best[x0], t - 1])
        for x0 in range(n)
        for t in range(1, schedules.shape[1] + 1)
    }
    return OracleResult(
        values=total[best, np.arange(n)],
        first_day=np.full(n, np.nan),
        policy=policy,
        expected_count=count[best].astype(float),
    )


def oracle_expected_budget(
    T: int,
    N: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
    gamma_start: float = 1.0,
    max_doublings: int = 64,
) -> OracleResult:
    """
    Minimum expected operating cost over fixed schedules with E[count] <= N.

    Sweeps gamma upward on the open-loop penalized oracle until its optimum
    is within budget from every day-0 state. A within-budget penalized
    optimum pays no penalty and beats every other within-budget schedule,
    so its value is the constrained optimum.

    Raises:
        InfeasibleError: If no swept gamma yields a within-budget optimum
    """
    if N < 0:
        raise ValueError(f"budget N must be nonnegative, got {N}")
    gamma = gamma_start
    for _ in range(max_doublings):
        result = oracle_penalized(T, N, gamma, costs, model, f, open_loop=True)
        if np.all(result.expected_count <= N):
            logger.debug(f"expected budget {N} reached at gamma={gamma:g}")
            return result
        gamma *= 2.0
    raise InfeasibleError(f"no penalty up to {gamma:g} keeps the optimal schedule within {N}")


def relaxation_gap(
    T: int,
    N: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> np.ndarray:
    """
    Cheapest within-budget schedule minus cheapest schedule, per day-0 state.

    Solved by enumerating every schedule. Any gamma above this gap makes the
    penalized problem over schedules an exact relaxation of the
    expected-budget problem: same optimal value, and its optimum is within
    budget.
    """
    if not N < T:
        raise ValueError(f"the gap is defined for N < T, got N={N}, T={T}")
    schedules, cost = schedule_costs(T, costs, model, f)
    within = schedules.sum(axis=1) <= N
    return cost[within].min(axis=0) - cost.min(axis=0)


# =============================================================================
# Literal value recursion carrying the accumulated cost
# =============================================================================

class CarriedValue:
    """
    Value recursion v_d(w, k | u, x) that carries the cost accumulated so
    far, evaluated literally (no tabulation). Exponential in d; used to
    confirm v = w + g on small instances.
    """

    def __init__(self, costs: CostSchedule, model: TransitionModel, f: np.ndarray):
        self.T = costs.horizon
        self.P = model.P
        self.A, self.a, self.s1, self.s2 = costs.arrays()
        self.w = wrp_vector(model, f)
        self.powers = [n_step(model, i) for i in range(self.T + 2)]

    def _e(self, p: int, xi: int) -> float:
        return self.A[p] * self.w[xi]

    def value(self, d: int, carried: float, k: int, u: int, x: int) -> float:
        T, P = self.T, self.P
        n = P.shape[0]
        if d == 0:
            return carried + u * self.s1[T] + sum(P[x, xi] * self._e(T, xi) for xi in range(n))
        if k == 0:
            future = sum(
                self.powers[i + 1][x, xi] * self._e(T - d + i, xi)
                for i in range(d + 1)
                for xi in range(n)
            )
            return carried + u * self.s1[T - d] + future
        p = T - d
        total = 0.0
        for xi in range(n):
            if P[x, xi] == 0:
                continue
            keep_on = self.value(d - 1, carried + self._e(p, xi) + u * self.s1[p], k, 0, xi)
            shut = self.value(d - 1, carried + self.a[p] + (1 - u) * self.s2[p], k - 1, 1, xi)
            total += P[x, xi] * min(keep_on, shut)
        return total
