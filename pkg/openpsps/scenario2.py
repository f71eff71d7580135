"""
Shutoff scheduling with a per-event cost adjustment.

No budget: every shutoff is charged lambda on top of its revenue loss, and
h[d, u, x] is the expected adjusted cost-to-go with d free decisions left.
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict

from .markov_model import TransitionModel
from .models import CostSchedule
from .oracle import OracleResult, check_desk_scale
from .risk_cost import expected_stage_table, wrp_vector
from .scenario1 import _check_inputs, _terminal

logger = logging.getLogger(__name__)


class PolicyTableS2(BaseModel):
    """Cost-to-go table of the adjusted problem, shape (T+1, 2, n)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h: np.ndarray
    T: int
    lam: float
    costs: CostSchedule
    wrp: np.ndarray

    @property
    def n_states(self) -> int:
        return self.h.shape[-1]


def build_s2(T: int, costs: CostSchedule, model: TransitionModel, f: np.ndarray) -> PolicyTableS2:
    """
    Build the adjusted cost-to-go table, charging costs.lam per shutoff.

    Raises:
        ValueError: If the inputs disagree in size
    """
    _check_inputs(T, costs, model, f)
    P = model.P
    w = wrp_vector(model, f)
    A, a, s1, s2 = costs.arrays()
    lam = costs.lam
    e = A[:, None] * w[None, :]

    h = np.empty((T + 1, 2, model.n_states))
    never = P @ e[T]
    h[0] = np.stack([never, never + s1[T]])
    for d in range(1, T + 1):
        p = T - d
        stay = h[d - 1, 0] + e[p]
        shut = h[d - 1, 1] + a[p] + lam
        inner = np.stack([np.minimum(stay, shut + s2[p]), np.minimum(stay + s1[p], shut)])
        h[d] = inner @ P.T

    logger.info(f"built adjusted table with shape {h.shape}")
    return PolicyTableS2(h=h, T=T, lam=lam, costs=costs, wrp=w)


def threshold_layer(table: PolicyTableS2, d: int, u_prev: int) -> np.ndarray:
    """Adjusted thresholds of every state at layer d."""
    if not 1 <= d <= table.T:
        raise ValueError(f"layer d must lie in 1..{table.T}, got {d}")
    p = table.T - d
    c = table.costs
    h = table.h[d - 1]
    offset = h[1] - h[0] + c.a[p] + table.lam + (1 - u_prev) * c.s2[p] - u_prev * c.s1[p]
    if c.A[p] > 0:
        return offset / c.A[p]
    return np.where(offset <= 0, -math.inf, math.inf)


def threshold_s2(table: PolicyTableS2, d: int, u_prev: int, x: int) -> float:
    return float(threshold_layer(table, d, u_prev)[x])


def decide_s2(table: PolicyTableS2, d: int, u_prev: int, x: int) -> int:
    """1 iff the risk probability reaches the adjusted threshold."""
    return int(table.wrp[x] >= threshold_s2(table, d, u_prev, x))


def oracle_adjustment(
    T: int,
    costs: CostSchedule,
    model: TransitionModel,
    f: np.ndarray,
) -> OracleResult:
    """
    Minimum expected operating cost plus lambda per shutoff, by backward
    induction over (day, previous decision, state).
    """
    _check_inputs(T, costs, model, f)
    check_desk_scale(T, model.n_states)
    P = model.P
    n = model.n_states
    w = wrp_vector(model, f)
    stage = expected_stage_table(costs, w)
    V = _terminal(costs, w)
    policy, branches = {}, {}
    for t in range(T, 0, -1):
        ahead = V @ P.T
        new = np.empty_like(V)
        for u_prev in (0, 1):
            q0 = stage[t - 1, u_prev, 0] + ahead[0]
            q1 = stage[t - 1, u_prev, 1] + costs.lam + ahead[1]
            new[u_prev] = np.minimum(q0, q1)
            for x in range(n):
                policy[(t, u_prev, x)] = int(q1[x] < q0[x])
                branches[(t, u_prev, x)] = (float(q0[x]), float(q1[x]))
        V = new
    first_day = V[0].copy()
    return OracleResult(values=P @ first_day, first_day=first_day, policy=policy, branches=branches)


class CarriedAdjustedValue:
    """Literal carried-cost recursion z_d(w, u, x) of the adjusted problem."""

    def __init__(self, costs: CostSchedule, model: TransitionModel, f: np.ndarray):
        self.T = costs.horizon
        self.P = model.P
        self.A, self.a, self.s1, self.s2 = costs.arrays()
        self.lam = costs.lam
        self.w = wrp_vector(model, f)

    def value(self, d: int, carried: float, u: int, x: int) -> float:
        T, P = self.T, self.P
        n = P.shape[0]
        if d == 0:
            return carried + u * self.s1[T] + self.A[T] * float(P[x] @ self.w)
        p = T - d
        total = 0.0
        for xi in range(n):
            if P[x, xi] == 0:
                continue
            keep_on = self.value(d - 1, carried + self.A[p] * self.w[xi] + u * self.s1[p], 0, xi)
            shut = self.value(d - 1, carried + self.a[p] + self.lam + (1 - u) * self.s2[p], 1, xi)
            total += P[x, xi] * min(keep_on, shut)
        return total
