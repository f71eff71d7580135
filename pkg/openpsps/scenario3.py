"""
Minimum expected shutoff count under an expected operating-cost threshold.

The tail problem with tau decisions left is augmented by the expected
operating cost it may still spend, alpha. Thresholds handed to tomorrow's
states are restricted to a uniform AlphaGrid. For each (decision, state) the
successors' step functions are merged into one Pareto frontier of
(expected threshold, expected count), so the inner allocation is solved
exactly on the grid rather than by enumerating every assignment.

Value tensors carry the previous decision because switching costs make the
stage cost depend on it. The forced post-horizon day is charged on the last
decision day, so the objective matches the budgeted and adjusted problems.
"""

import logging
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import InfeasibleError, ScaleGuardError
from .markov_model import TransitionModel, n_step
from .models import AlphaGrid, CostSchedule
from .oracle import Frontier, check_desk_scale, frontier_from_steps, weighted_sum
from .risk_cost import expected_stage_table, wrp_vector
from .scenario1 import _check_inputs, _terminal

logger = logging.getLogger(__name__)

PolicyMode = Literal["argmin", "case_split"]

_ATOL = 1e-9
ENUMERATION_MAX_CANDIDATES = 1_000_000


def _fits(limit: np.ndarray, cost: np.ndarray) -> np.ndarray:
    limit = np.asarray(limit, dtype=float)
    return np.asarray(cost) <= limit + _ATOL * np.maximum(1.0, np.abs(limit))


# =============================================================================
# Value tensor
# =============================================================================

class ValueTensor(BaseModel):
    """
    V[tau - 1, u_prev, x, j] is the minimum expected number of shutoffs with
    tau decisions left, previous decision u_prev, decision-day state x and
    cost threshold grid.values()[j]. Cells no grid-valued policy can satisfy
    hold Vbar.

    b[tau, u_prev, x] is the smallest expected operating cost any policy can
    reach on the tail; b[0, u, x] is the post-horizon day alone.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    V: np.ndarray
    b: np.ndarray
    Vbar: float
    grid: AlphaGrid
    T: int
    costs: CostSchedule
    model: TransitionModel
    wrp: np.ndarray

    @property
    def n_states(self) -> int:
        return self.V.shape[2]

    def layer(self, tau: int) -> np.ndarray:
        if not 1 <= tau <= self.T:
            raise ValueError(f"tau must lie in 1..{self.T}, got {tau}")
        return self.V[tau - 1]

    def value(self, x: int, alpha: float, tau: Optional[int] = None, u_prev: int = 0) -> float:
        """V at the largest grid point not above alpha; Vbar below the grid."""
        tau = self.T if tau is None else tau
        j = self.grid.floor_index(alpha)
        if j < 0:
            return self.Vbar
        return float(self.layer(tau)[u_prev, x, j])

    def feasible(self, x: int, alpha: float, tau: Optional[int] = None, u_prev: int = 0) -> bool:
        return self.value(x, alpha, tau, u_prev) < self.Vbar


# =============================================================================
# Cost bounds
# =============================================================================

def closed_loop_bound(
    T: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> np.ndarray:
    """
    Minimum expected operating cost of every tail, shape (T+1, 2, n).

    This is the feasibility boundary of the threshold: a tail with tau
    decisions left in state x can meet alpha only if alpha >= b[tau, u_prev, x].
    """
    _check_inputs(T, costs, model, f)
    P = model.P
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    b = np.empty((T + 1, 2, model.n_states))
    b[0] = _terminal(costs, w)
    for tau in range(1, T + 1):
        p = T - tau
        ahead = b[tau - 1] @ P.T
        b[tau] = np.minimum(stage[p, :, 0, :] + ahead[0], stage[p, :, 1, :] + ahead[1])
    return b


def compute_b(
    tau: int,
    x: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
    u_prev: int = 0,
) -> float:
    """
    Smallest expected operating cost of an open-loop decision sequence.

    Day i of the tail is weighted by the i-step transition row of x, and the
    decision of each day is chosen per stage (carrying the previous decision
    through the switching costs). Without switching costs this is the sum of
    per-stage minima. Never below closed_loop_bound, which may adapt to the
    observed states.

    Args:
        tau: Decisions left, 1..T
        x: Decision-day state
        costs: Cost schedule with T+1 entries
        model: Transition model
        f: Risk indicator per state
        u_prev: Decision in force on the decision day

    Returns:
        Lower bound of the feasible thresholds for an open-loop policy
    """
    T = costs.horizon
    if not 1 <= tau <= T:
        raise ValueError(f"tau must lie in 1..{T}, got {tau}")
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    start = T - tau
    W = _terminal(costs, w) @ n_step(model, tau)[x]
    for i in range(tau - 1, -1, -1):
        weights = n_step(model, i)[x]
        per_stage = stage[start + i] @ weights
        W = np.min(per_stage + W[None, :], axis=1)
    return float(W[u_prev])


# =============================================================================
# Value iteration on the threshold grid
# =============================================================================

def _successor_fronts(prev: np.ndarray, Vbar: float, alphas: np.ndarray, u: int) -> List[Frontier]:
    """Pareto frontier of V_{tau-1}(u, xi, .) for every successor xi."""
    values = np.where(prev[u] >= Vbar, np.inf, prev[u])
    return [frontier_from_steps(alphas, values[xi]) for xi in range(values.shape[0])]


def _last_stage_cost(costs: CostSchedule, model: TransitionModel, w: np.ndarray) -> np.ndarray:
    """Expected cost of the last decision plus the post-horizon day, [u_prev, u, x]."""
    stage = expected_stage_table(costs, w)
    ahead_terminal = _terminal(costs, w) @ model.P.T
    return stage[costs.horizon - 1] + ahead_terminal[None, :, :]


def _check_grid(grid: AlphaGrid, alpha_bar: float, b: np.ndarray) -> None:
    if grid.hi < alpha_bar - _ATOL * max(1.0, abs(alpha_bar)):
        raise ValueError(f"grid ends at {grid.hi}, below alpha_bar={alpha_bar}")
    if grid.lo > b.min():
        raise ValueError(
            f"grid starts at {grid.lo}, above the smallest achievable cost {b.min():.6g}"
        )


def _first_layer(last: np.ndarray, alphas: np.ndarray, Vbar: float) -> np.ndarray:
    """No shutoff if it fits the threshold, else one shutoff if that fits, else Vbar."""
    fits0 = _fits(alphas[None, None, :], last[:, 0, :, None])
    fits1 = _fits(alphas[None, None, :], last[:, 1, :, None])
    return np.where(fits0, 0.0, np.where(fits1, 1.0, Vbar))


def _finish(
    V: np.ndarray,
    b: np.ndarray,
    grid: AlphaGrid,
    T: int,
    alpha_bar: float,
    costs: CostSchedule,
    model: TransitionModel,
    w: np.ndarray,
    x1: Optional[int],
) -> ValueTensor:
    tensor = ValueTensor(
        V=V, b=b, Vbar=float(T + 1), grid=grid, T=T, costs=costs, model=model, wrp=w
    )
    if x1 is not None and not tensor.feasible(x1, alpha_bar):
        raise InfeasibleError(
            f"alpha_bar={alpha_bar:.6g} cannot be met from state {x1}: the smallest expected "
            f"cost is {b[T, 0, x1]:.6g} (grid step {grid.step:.6g})"
        )
    return tensor


def build_value(
    T: int,
    alpha_bar: float,
    grid: AlphaGrid,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
    x1: Optional[int] = None,
) -> ValueTensor:
    """
    Fill the value tensor by backward induction over tau.

    Args:
        T: Number of decision days
        alpha_bar: Expected operating-cost threshold of the season
        grid: Threshold grid, from at most the smallest bound up to alpha_bar
        costs: Cost schedule with T+1 entries
        model: Transition model
        f: Risk indicator per state
        x1: Optional first decision-day state to check for feasibility

    Returns:
        ValueTensor

    Raises:
        ValueError: If the grid does not cover the required range
        InfeasibleError: If x1 is given and alpha_bar is below what any
            grid-valued policy can reach from it
        ScaleGuardError: If a frontier exceeds the configured size
    """
    b = closed_loop_bound(T, costs, model, f)
    _check_grid(grid, alpha_bar, b[T])
    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    alphas = grid.values()
    Vbar = float(T + 1)

    V = np.full((T, 2, n, alphas.size), Vbar)
    V[0] = _first_layer(_last_stage_cost(costs, model, w), alphas, Vbar)
    for tau in range(2, T + 1):
        p = T - tau
        largest = 0
        for u in (0, 1):
            fronts = _successor_fronts(V[tau - 2], Vbar, alphas, u)
            for x in range(n):
                combined = weighted_sum(fronts, P[x])
                largest = max(largest, len(combined))
                if len(combined) == 0:
                    continue
                for u_prev in (0, 1):
                    best, _ = combined.best_within(alphas - stage[p, u_prev, u, x])
                    candidate = np.where(np.isfinite(best), u + best, Vbar)
                    V[tau - 1, u_prev, x] = np.minimum(V[tau - 1, u_prev, x], candidate)
        logger.debug(f"tau={tau}: largest combined frontier has {largest} points")

    logger.info(f"built value tensor with shape {V.shape} on a grid of {alphas.size} thresholds")
    return _finish(V, b, grid, T, alpha_bar, costs, model, w, x1)


def build_value_enumerated(
    T: int,
    alpha_bar: float,
    grid: AlphaGrid,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> ValueTensor:
    """
    Same tensor as build_value, by trying every grid assignment of the
    successors' thresholds. Desk scale only.

    Raises:
        ScaleGuardError: If the instance or the number of assignments is too large
    """
    check_desk_scale(T, model.n_states)
    b = closed_loop_bound(T, costs, model, f)
    _check_grid(grid, alpha_bar, b[T])
    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    alphas = grid.values()
    G = alphas.size
    Vbar = float(T + 1)

    V = np.full((T, 2, n, G), Vbar)
    V[0] = _first_layer(_last_stage_cost(costs, model, w), alphas, Vbar)
    for tau in range(2, T + 1):
        p = T - tau
        prev = V[tau - 2]
        for x in range(n):
            support = np.flatnonzero(P[x] > 0)
            if G ** support.size > ENUMERATION_MAX_CANDIDATES:
                raise ScaleGuardError(
                    f"{G}^{support.size} threshold assignments exceed the enumeration limit"
                )
            probs = P[x, support]
            idx = np.indices((G,) * support.size).reshape(support.size, -1).T
            weight = alphas[idx] @ probs
            for u in (0, 1):
                vals = prev[u][support[None, :], idx]
                total = np.where((vals >= Vbar).any(axis=1), np.inf, vals @ probs)
                for u_prev in (0, 1):
                    limit = alphas - stage[p, u_prev, u, x]
                    ok = _fits(limit[:, None], weight[None, :])
                    best = np.where(ok, total[None, :], np.inf).min(axis=1)
                    candidate = np.where(np.isfinite(best), u + best, Vbar)
                    V[tau - 1, u_prev, x] = np.minimum(V[tau - 1, u_prev, x], candidate)

    return _finish(V, b, grid, T, alpha_bar, costs, model, w, None)


def solve_s3(
    T: int,
    alpha_bar: float,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
    points: int = 101,
    x1: Optional[int] = None,
) -> ValueTensor:
    """build_value on a grid of the given size from zero to alpha_bar."""
    return build_value(T, alpha_bar, AlphaGrid.covering(alpha_bar, points), costs, model, f, x1)


# =============================================================================
# Policy
# =============================================================================

def _choose(values: Tuple[float, float], mode: PolicyMode) -> int:
    if mode == "case_split":
        # no shutoff whenever it keeps the threshold reachable
        return 0 if np.isfinite(values[0]) else 1
    return 0 if values[0] <= values[1] + _ATOL else 1


def extract_policy(
    tensor: ValueTensor,
    t: int,
    x: int,
    alpha: float,
    u_prev: int = 0,
    mode: PolicyMode = "case_split",
) -> Tuple[int, Optional[np.ndarray]]:
    """
    Decision and next-day thresholds on day t.

    "argmin" picks the decision reaching the tensor value (ties to no
    shutoff); "case_split" shuts off only when staying energized cannot meet
    the threshold.

    Returns:
        (u, phi) where phi[xi] is tomorrow's threshold if tomorrow is in
        state xi (NaN for unreachable states), or None on the last day

    Raises:
        InfeasibleError: If no grid-valued policy meets alpha from (x, u_prev)
    """
    T = tensor.T
    if not 1 <= t <= T:
        raise ValueError(f"day t must lie in 1..{T}, got {t}")
    if mode not in ("argmin", "case_split"):
        raise ValueError(f"unknown policy mode {mode!r}")
    tau = T - t + 1
    if not tensor.feasible(x, alpha, tau, u_prev):
        raise InfeasibleError(f"threshold {alpha:.6g} cannot be met on day {t} in state {x}")

    alphas = tensor.grid.values()
    level = alphas[tensor.grid.floor_index(alpha)]
    costs = tensor.costs
    if tau == 1:
        cost = _last_stage_cost(costs, tensor.model, tensor.wrp)[u_prev, :, x]
        values = tuple(float(u) if _fits(level, cost[u]) else np.inf for u in (0, 1))
        return _choose(values, mode), None

    P = tensor.model.P
    stage = expected_stage_table(costs, tensor.wrp)[T - tau]
    values, plans = [np.inf, np.inf], [None, None]
    for u in (0, 1):
        fronts = _successor_fronts(tensor.V[tau - 2], tensor.Vbar, alphas, u)
        combined = weighted_sum(fronts, P[x], track=True)
        if len(combined) == 0:
            continue
        best, idx = combined.best_within(level - stage[u_prev, u, x])
        if int(idx) < 0:
            continue
        phi = np.full(tensor.n_states, np.nan)
        for xi, k in enumerate(combined.choice[int(idx)]):
            if k >= 0:
                phi[xi] = fronts[xi].weight[k]
        values[u], plans[u] = u + float(best), phi
    u = _choose((values[0], values[1]), mode)
    return u, plans[u]


def rollout(
    tensor: ValueTensor,
    x1: int,
    alpha_bar: float,
    u_prev: int = 0,
    mode: PolicyMode = "case_split",
) -> Tuple[float, float]:
    """
    Follow extract_policy over every path of the chain from x1.

    Returns:
        (expected number of shutoffs, expected operating cost)
    """
    T = tensor.T
    P = tensor.model.P
    stage = expected_stage_table(tensor.costs, tensor.wrp)
    last = _last_stage_cost(tensor.costs, tensor.model, tensor.wrp)
    memo: Dict[Tuple[int, int, int, int], Tuple[int, Optional[np.ndarray]]] = {}

    def decide(t: int, prev: int, x: int, alpha: float) -> Tuple[int, Optional[np.ndarray]]:
        key = (t, prev, x, tensor.grid.floor_index(alpha))
        if key not in memo:
            memo[key] = extract_policy(tensor, t, x, alpha, prev, mode)
        return memo[key]

    def visit(t: int, prev: int, x: int, alpha: float) -> Tuple[float, float]:
        u, phi = decide(t, prev, x, alpha)
        if t == T:
            return float(u), float(last[prev, u, x])
        count, cost = float(u), float(stage[t - 1, prev, u, x])
        for xi in np.flatnonzero(P[x] > 0):
            c, k = visit(t + 1, u, int(xi), float(phi[xi]))
            count += P[x, xi] * c
            cost += P[x, xi] * k
        return count, cost

    return visit(1, u_prev, x1, alpha_bar)


def policy_rule(
    tensor: ValueTensor, alpha_bar: float, mode: PolicyMode = "case_split"
) -> Callable:
    """
    Stateful day-by-day decider for one season: call it with (t, x, u_prev)
    in forward order; it carries the threshold between days.
    """
    state = {"alpha": alpha_bar, "phi": None}

    def decide(t: int, x: int, u_prev: int) -> Tuple[int, float]:
        if t > 1:
            state["alpha"] = float(state["phi"][x])
        alpha = state["alpha"]
        u, state["phi"] = extract_policy(tensor, t, x, alpha, u_prev, mode)
        return u, alpha

    return decide
