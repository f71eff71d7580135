"""
Critical peak pricing with an event budget.

Each day the operator may call an event for tomorrow, curtailing y MW of the
(state-determined) peak demand q at a revenue loss abar. Supply cost is
quadratic in the served load. g[d, k, x] is the expected future supply cost
plus revenue loss with d free decisions and k events left, given the
previous-day state x. No switching costs apply.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import BudgetViolationError, DegenerateParameterError
from .markov_model import TransitionModel
from .models import CppConfig, QuadCost
from .oracle import OracleResult, check_desk_scale

logger = logging.getLogger(__name__)


def power_cost(quad: QuadCost, z: Union[float, np.ndarray], p: int) -> Union[float, np.ndarray]:
    """B z^2 + C z + D with entry p of the supply-cost schedule."""
    B, C, D = quad.arrays()
    return B[p] * np.square(z) + C[p] * z + D[p]


def expected_power_tables(
    quad: QuadCost,
    q: np.ndarray,
    y: float,
    model: TransitionModel,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Expected supply cost of the day after each state, without and with an event.

    Returns:
        (E0, E1), each (T+1, n): E0[p, x] = E[cost_p(q(X'))] and
        E1[p, x] = E[cost_p(q(X') - y)] given today's state x
    """
    B, C, D = quad.arrays()
    q = np.asarray(q, dtype=float)
    served = np.stack([q, q - y])
    cost = B[None, :, None] * served[:, None, :] ** 2 + C[None, :, None] * served[:, None, :]
    cost = cost + D[None, :, None]
    E = cost @ model.P.T
    return E[0], E[1]


class PolicyTableCpp(BaseModel):
    """Continuation table of the CPP problem, shape (T+1, M+1, n)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: np.ndarray
    T: int
    M: int
    config: CppConfig
    q: np.ndarray
    mean_demand: np.ndarray
    E0: np.ndarray
    E1: np.ndarray

    @property
    def n_states(self) -> int:
        return self.g.shape[-1]


def build_cpp(
    T: int,
    config: CppConfig,
    q: np.ndarray,
    model: TransitionModel,
    M: Optional[int] = None,
) -> PolicyTableCpp:
    """
    Build the CPP continuation table by backward induction.

    Args:
        T: Number of decision days
        config: Event parameters and supply cost, T+1 entries each
        q: Peak demand (MW) per state, e.g. DemandModel.predict_states
        model: Transition model
        M: Event budget, defaults to config.params.M

    Returns:
        PolicyTableCpp

    Raises:
        ValueError: If M is outside 0..T or the inputs disagree in size
    """
    M = config.params.M if M is None else M
    if config.params.horizon != T:
        raise ValueError(f"CPP parameters cover {config.params.horizon} days, horizon is {T}")
    if not 0 <= M <= T:
        raise ValueError(f"budget M must lie in 0..T={T}, got {M}")
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_states,):
        raise ValueError(f"demand needs {model.n_states} entries, got {q.shape}")

    P = model.P
    abar = np.asarray(config.params.abar, dtype=float)
    E0, E1 = expected_power_tables(config.quad, q, config.params.y, model)

    g = np.empty((T + 1, M + 1, model.n_states))
    none = P @ E0[T]
    g[0] = none
    for d in range(1, T + 1):
        p = T - d
        none = P @ (E0[p] + none)
        g[d, 0] = none
        if M == 0:
            continue
        stay = g[d - 1, 1:] + E0[p]
        event = g[d - 1, :-1] + abar[p] + E1[p]
        g[d, 1:] = np.minimum(stay, event) @ P.T

    logger.info(f"built CPP table with shape {g.shape}")
    return PolicyTableCpp(
        g=g, T=T, M=M, config=config, q=q, mean_demand=P @ q, E0=E0, E1=E1
    )


# =============================================================================
# Threshold policy
# =============================================================================

def check_thresholds(config: CppConfig, days: Optional[range] = None) -> None:
    """
    Raise DegenerateParameterError unless y > 0 and B > 0 on every decision day.
    """
    if config.params.y <= 0:
        raise DegenerateParameterError("y", config.params.y)
    B = config.quad.B
    for p in days if days is not None else range(config.quad.horizon):
        if B[p] <= 0:
            raise DegenerateParameterError(f"B[{p}]", B[p])


def cpp_threshold(
    g_k: Union[float, np.ndarray],
    g_k_minus_1: Union[float, np.ndarray],
    abar: float,
    B: float,
    C: float,
    y: float,
) -> Union[float, np.ndarray]:
    """Expected-demand level above which calling an event is cheaper."""
    return (g_k_minus_1 - g_k + abar - C * y + B * y * y) / (2.0 * y * B)


def threshold_cpp(table: PolicyTableCpp, d: int, k: int, x: int) -> float:
    """Threshold on tomorrow's expected demand at layer d; +inf once the budget is spent."""
    if not 1 <= d <= table.T:
        raise ValueError(f"layer d must lie in 1..{table.T}, got {d}")
    if not 0 <= k <= table.M:
        raise ValueError(f"events left must lie in 0..{table.M}, got {k}")
    if k == 0:
        return math.inf
    p = table.T - d
    check_thresholds(table.config, range(p, p + 1))
    B, C, _ = table.config.quad.arrays()
    g = table.g[d - 1]
    abar = table.config.params.abar[p]
    return float(cpp_threshold(g[k, x], g[k - 1, x], abar, B[p], C[p], table.config.params.y))


def decide_cpp(table: PolicyTableCpp, d: int, k: int, x: int) -> int:
    """1 iff events remain and E[q | x] is strictly above the threshold."""
    if k == 0:
        return 0
    return int(table.mean_demand[x] > threshold_cpp(table, d, k, x))


def branch_values(table: PolicyTableCpp, d: int, k: int, x: int) -> Tuple[float, float]:
    """
    Expected cost-to-go of (no event, event) on the decision day in state x.
    The event branch is +inf once the budget is spent.
    """
    p = table.T - d
    g = table.g[d - 1]
    stay = g[k, x] + table.E0[p, x]
    if k == 0:
        return float(stay), math.inf
    event = g[k - 1, x] + table.config.params.abar[p] + table.E1[p, x]
    return float(stay), float(event)


def table_rule(table: PolicyTableCpp):
    """decide_cpp as a rule of forward day t."""
    def rule(t: int, k: int, x: int) -> int:
        return decide_cpp(table, table.T + 1 - t, k, x)
    return rule


# =============================================================================
# Oracle
# =============================================================================

def oracle_cpp(
    T: int,
    config: CppConfig,
    q: np.ndarray,
    model: TransitionModel,
    M: Optional[int] = None,
) -> OracleResult:
    """
    Minimum expected supply cost plus revenue loss with at most M events.

    Backward induction over (day, events so far, state), independent of the
    table recursion.
    """
    M = config.params.M if M is None else M
    check_desk_scale(T, model.n_states)
    P = model.P
    n = model.n_states
    abar = config.params.abar
    E0, E1 = expected_power_tables(config.quad, q, config.params.y, model)
    V = np.broadcast_to(E0[T], (M + 1, n)).copy()
    policy, branches = {}, {}
    for t in range(T, 0, -1):
        ahead = V @ P.T
        new = np.empty_like(V)
        for c in range(M + 1):
            stay = E0[t - 1] + ahead[c]
            event = abar[t - 1] + E1[t - 1] + ahead[c + 1] if c < M else np.full(n, np.inf)
            new[c] = np.minimum(stay, event)
            for x in range(n):
                policy[(t, c, x)] = int(event[x] < stay[x])
                branches[(t, c, x)] = (float(stay[x]), float(event[x]))
        V = new
    first_day = V[0].copy()
    return OracleResult(values=P @ first_day, first_day=first_day, policy=policy, branches=branches)


def evaluate_cpp_rule(table: PolicyTableCpp, model: TransitionModel, rule=None) -> np.ndarray:
    """
    Exact expected cost of a budgeted CPP rule(t, k, x), per day-0 state.
    Defaults to the table's threshold rule.
    """
    rule = rule or table_rule(table)
    P = model.P
    T, M, n = table.T, table.M, table.n_states
    abar = table.config.params.abar
    V = np.broadcast_to(table.E0[T], (M + 1, n)).copy()
    for t in range(T, 0, -1):
        ahead = V @ P.T
        new = np.empty_like(V)
        for k in range(M + 1):
            for x in range(n):
                u = int(rule(t, k, x))
                if u and k == 0:
                    raise BudgetViolationError(f"rule called an event on day {t} with no budget")
                if u:
                    new[k, x] = abar[t - 1] + table.E1[t - 1, x] + ahead[k - 1, x]
                else:
                    new[k, x] = table.E0[t - 1, x] + ahead[k, x]
        V = new
    return P @ V[M]
