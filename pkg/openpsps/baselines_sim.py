"""
Episode replay, baseline policies and the Monte Carlo harness.

A path holds the states x_1 .. x_{T+2}: decision day t observes x_t and
decides for day t+1, and the post-horizon day (always energized, no event)
is charged on the last decision day's entry of every trace. Each day is
scored twice, by the realized cost on the path and by its conditional
expectation given the decision-day state.
"""

import copy
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from shared import constants

from .cpp_sched import PolicyTableCpp, decide_cpp, power_cost, threshold_cpp
from .errors import BudgetViolationError, DataError
from .markov_model import TransitionModel, path_generator, sample_path
from .models import CostSchedule
from .risk_cost import expected_stage_table, stage_cost, wrp_vector
from .scenario1 import PolicyTableS1, decide_s1, threshold_s1
from .scenario2 import PolicyTableS2, decide_s2, threshold_s2
from .scenario3 import PolicyMode, ValueTensor, policy_rule

logger = logging.getLogger(__name__)

# initial-state draws use a separate stream per year
INITIAL_STREAM_OFFSET = 1_000_000

TRACE_COLUMNS = ["day", "metric", "threshold", "decision", "budget_left"]


# =============================================================================
# Cost models
# =============================================================================

class PspsCostModel:
    """Operating cost of shutoff decisions; the metric is the wildfire risk probability."""

    kind = "psps"

    def __init__(self, costs: CostSchedule, model: TransitionModel, f: np.ndarray):
        self.costs = costs
        self.f = np.asarray(f, dtype=float)
        self.wrp = wrp_vector(model, self.f)
        self.stage = expected_stage_table(costs, self.wrp)

    def metric(self, x: int) -> float:
        return float(self.wrp[x])

    def realized(
        self, p: int, u_prev: int, u: int, x_next: int, observed: Optional[float]
    ) -> float:
        return stage_cost(self.costs, p + 1, u_prev, u, self.f[x_next])

    def expected(self, p: int, u_prev: int, u: int, x: int) -> float:
        return float(self.stage[p, u_prev, u, x])


class CppCostModel:
    """Supply cost plus revenue loss; the metric is tomorrow's expected peak demand."""

    kind = "cpp"

    def __init__(self, table: PolicyTableCpp):
        self.table = table
        self.quad = table.config.quad
        self.abar = np.asarray(table.config.params.abar, dtype=float)
        self.y = table.config.params.y

    def metric(self, x: int) -> float:
        return float(self.table.mean_demand[x])

    def realized(
        self, p: int, u_prev: int, u: int, x_next: int, observed: Optional[float]
    ) -> float:
        demand = self.table.q[x_next] if observed is None else observed
        return float(self.abar[p] * u + power_cost(self.quad, demand - self.y * u, p))

    def expected(self, p: int, u_prev: int, u: int, x: int) -> float:
        branch = self.table.E1 if u else self.table.E0
        return float(self.abar[p] * u + branch[p, x])


CostModel = Union[PspsCostModel, CppCostModel]


# =============================================================================
# Policies
# =============================================================================

class Decision(NamedTuple):
    u: int
    metric: float
    threshold: float


class Policy:
    """
    Causal decision rule called once per decision day with (t, x, k, u_prev).
    k is None for policies without a budget.
    """

    name = "policy"
    budget: Optional[int] = None

    def reset(self) -> None:
        """Clear per-season state before a new episode."""

    def __call__(self, t: int, x: int, k: Optional[int], u_prev: int) -> Decision:
        raise NotImplementedError


class BudgetedShutoffPolicy(Policy):
    name = "P1"

    def __init__(self, table: PolicyTableS1):
        self.table = table
        self.budget = table.N

    def __call__(self, t, x, k, u_prev):
        d = self.table.T + 1 - t
        return Decision(
            decide_s1(self.table, d, k, u_prev, x),
            float(self.table.wrp[x]),
            threshold_s1(self.table, d, k, u_prev, x),
        )


class AdjustedShutoffPolicy(Policy):
    name = "P2"

    def __init__(self, table: PolicyTableS2):
        self.table = table

    def __call__(self, t, x, k, u_prev):
        d = self.table.T + 1 - t
        return Decision(
            decide_s2(self.table, d, u_prev, x),
            float(self.table.wrp[x]),
            threshold_s2(self.table, d, u_prev, x),
        )


class CostThresholdPolicy(Policy):
    """Minimum-expected-count policy; the trace threshold is the carried cost threshold."""

    name = "P3"

    def __init__(self, tensor: ValueTensor, alpha_bar: float, mode: PolicyMode = "case_split"):
        self.tensor = tensor
        self.alpha_bar = alpha_bar
        self.mode = mode
        self.reset()

    def reset(self) -> None:
        self._rule = policy_rule(self.tensor, self.alpha_bar, self.mode)

    def __call__(self, t, x, k, u_prev):
        u, alpha = self._rule(t, x, u_prev)
        return Decision(u, float(self.tensor.wrp[x]), alpha)


class CppThresholdPolicy(Policy):
    name = "CPP"

    def __init__(self, table: PolicyTableCpp):
        self.table = table
        self.budget = table.M

    def __call__(self, t, x, k, u_prev):
        d = self.table.T + 1 - t
        return Decision(
            decide_cpp(self.table, d, k, x),
            float(self.table.mean_demand[x]),
            threshold_cpp(self.table, d, k, x),
        )


class HistoricalPolicy(Policy):
    """Fires whenever the metric is strictly above a fixed threshold, with no event cap."""

    name = "Historical"

    def __init__(self, threshold: float, metric: np.ndarray):
        self.threshold = float(threshold)
        self.metric = np.asarray(metric, dtype=float)

    def __call__(self, t, x, k, u_prev):
        value = float(self.metric[x])
        return Decision(int(value > self.threshold), value, self.threshold)


class MyopicPolicy(Policy):
    """Shuts off whenever tomorrow's revenue loss is below its expected wildfire cost."""

    name = "Myopic"

    def __init__(self, costs: CostSchedule, wrp: np.ndarray):
        self.A, self.a, _, _ = costs.arrays()
        self.wrp = np.asarray(wrp, dtype=float)

    def __call__(self, t, x, k, u_prev):
        p = t - 1
        threshold = self.a[p] / self.A[p] if self.A[p] > 0 else math.inf
        return Decision(int(self.wrp[x] > threshold), float(self.wrp[x]), threshold)


class NeverPolicy(Policy):
    name = "No events"

    def __call__(self, t, x, k, u_prev):
        return Decision(0, math.nan, math.inf)


class FixedSchedule(Policy):
    """Replays a precomputed decision vector."""

    name = "Hindsight"

    def __init__(self, decisions: Sequence[int], name: Optional[str] = None):
        self.decisions = np.asarray(decisions, dtype=int)
        if name:
            self.name = name

    def __call__(self, t, x, k, u_prev):
        return Decision(int(self.decisions[t - 1]), math.nan, math.nan)


def historical_threshold(yearly_values: Sequence[np.ndarray], count: int) -> float:
    """
    Mean over training years of each year's count-th largest daily value.

    Raises:
        DataError: If a year has fewer than count days
    """
    if not yearly_values:
        raise DataError("historical threshold needs at least one training year")
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    picks = []
    for values in yearly_values:
        values = np.asarray(values, dtype=float)
        if values.size < count:
            raise DataError(f"a training year has {values.size} days, fewer than {count}")
        picks.append(np.sort(values)[::-1][count - 1])
    return float(np.mean(picks))


def historical_policy(
    training_paths: Sequence[np.ndarray],
    count: int,
    metric: np.ndarray,
    horizon: Optional[int] = None,
) -> HistoricalPolicy:
    """
    Historical baseline from training state sequences: the metric of each
    decision day is looked up per state. The count only sets the threshold;
    a test season may see more or fewer events.
    """
    metric = np.asarray(metric, dtype=float)
    yearly = [metric[np.asarray(path)[:horizon]] for path in training_paths]
    threshold = historical_threshold(yearly, count)
    logger.debug(f"historical threshold {threshold:.4g} from the {count}-th largest day")
    return HistoricalPolicy(threshold, metric)


def hindsight_policy(next_day_demand: Sequence[float], M: int) -> np.ndarray:
    """
    Events on the M decision days whose following day has the largest demand,
    ties to the earlier day.
    """
    demand = np.asarray(next_day_demand, dtype=float)
    if not 0 <= M <= demand.size:
        raise ValueError(f"M must lie in 0..{demand.size}, got {M}")
    decisions = np.zeros(demand.size, dtype=int)
    decisions[np.argsort(-demand, kind="stable")[:M]] = 1
    return decisions


# =============================================================================
# Episodes
# =============================================================================

class EpisodeResult(BaseModel):
    """
    One season under one policy. Per-day arrays have one entry per decision
    day; the post-horizon day is included in the last entry of the costs.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    policy: str
    decisions: np.ndarray
    realized: np.ndarray
    expected: np.ndarray
    metric: np.ndarray
    threshold: np.ndarray
    budget_left: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return int(self.decisions.sum())

    @property
    def total_realized(self) -> float:
        return float(self.realized.sum())

    @property
    def total_expected(self) -> float:
        return float(self.expected.sum())


def run_policy(
    path: Sequence[int],
    policy: Policy,
    cost_model: CostModel,
    T: Optional[int] = None,
    observed: Optional[Sequence[float]] = None,
) -> EpisodeResult:
    """
    Replay a policy over one path.

    Args:
        path: States x_1 .. x_{T+2} (longer paths are truncated)
        policy: Decision rule; copied and reset for this episode
        cost_model: PspsCostModel or CppCostModel
        T: Number of decision days, defaults to len(path) - 2
        observed: Optional realized demand aligned with path (CPP)

    Returns:
        EpisodeResult

    Raises:
        DataError: If the path is shorter than T + 2
        BudgetViolationError: If a budgeted policy fires with no budget left
    """
    path = np.asarray(path, dtype=int)
    T = len(path) - 2 if T is None else T
    if T < 1 or len(path) < T + 2:
        raise DataError(f"a path of {len(path)} days cannot cover {T} decisions plus two days")
    policy = copy.copy(policy)
    policy.reset()

    decisions = np.zeros(T, dtype=int)
    realized, expected = np.zeros(T), np.zeros(T)
    metric, threshold = np.zeros(T), np.zeros(T)
    budget_left = np.zeros(T, dtype=int) if policy.budget is not None else None
    k = policy.budget
    u_prev = 0
    for t in range(1, T + 1):
        x, x_next = int(path[t - 1]), int(path[t])
        decision = policy(t, x, k, u_prev)
        u = int(decision.u)
        if k is not None:
            if u and k == 0:
                raise BudgetViolationError(
                    f"{policy.name} called an event on day {t} with no budget"
                )
            budget_left[t - 1] = k
            k -= u
        seen = None if observed is None else float(observed[t])
        realized[t - 1] = cost_model.realized(t - 1, u_prev, u, x_next, seen)
        expected[t - 1] = cost_model.expected(t - 1, u_prev, u, x)
        decisions[t - 1], metric[t - 1], threshold[t - 1] = u, decision.metric, decision.threshold
        u_prev = u

    seen = None if observed is None else float(observed[T + 1])
    realized[-1] += cost_model.realized(T, u_prev, 0, int(path[T + 1]), seen)
    expected[-1] += cost_model.expected(T, u_prev, 0, int(path[T]))
    return EpisodeResult(
        policy=policy.name,
        decisions=decisions,
        realized=realized,
        expected=expected,
        metric=metric,
        threshold=threshold,
        budget_left=budget_left,
    )


def savings_vs_hindsight(no_events: float, policy: float, hindsight: float) -> float:
    """Share of the hindsight cost reduction a policy achieves; NaN if hindsight saves nothing."""
    denominator = no_events - hindsight
    if denominator <= 0:
        return math.nan
    return (no_events - policy) / denominator


# =============================================================================
# Experiments
# =============================================================================

class ExperimentResult(BaseModel):
    """Episodes per policy, one per season in the order of years."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    years: List[int]
    episodes: Dict[str, List[EpisodeResult]]

    def summary(self) -> Dict[str, Dict[str, float]]:
        """Mean and population standard deviation of counts and costs per policy."""
        out = {}
        for name, runs in self.episodes.items():
            stats = {}
            for key, values in (
                ("count", [r.count for r in runs]),
                ("expected_cost", [r.total_expected for r in runs]),
                ("realized_cost", [r.total_realized for r in runs]),
            ):
                arr = np.asarray(values, dtype=float)
                stats[f"{key}_mean"] = float(arr.mean())
                stats[f"{key}_std"] = float(arr.std(ddof=0))
            out[name] = stats
        return out

    def savings(self, policy: str) -> np.ndarray:
        """Per-season savings vs hindsight of a policy (needs 'No events' and 'Hindsight')."""
        none = self.episodes[NeverPolicy.name]
        best = self.episodes[FixedSchedule.name]
        runs = self.episodes[policy]
        return np.array([
            savings_vs_hindsight(n.total_realized, r.total_realized, h.total_realized)
            for n, r, h in zip(none, runs, best)
        ])

    def per_year(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """Count and costs of every policy in every season."""
        table: Dict[str, Dict[str, Dict[str, float]]] = {}
        for i, year in enumerate(self.years):
            table[str(year)] = {
                name: {
                    "count": runs[i].count,
                    "expected_cost": runs[i].total_expected,
                    "realized_cost": runs[i].total_realized,
                }
                for name, runs in self.episodes.items()
            }
        return table


def _season(
    path: np.ndarray,
    policies: Sequence[Policy],
    cost_model: CostModel,
    T: int,
    observed: Optional[np.ndarray],
    hindsight_budget: Optional[int],
) -> Dict[str, EpisodeResult]:
    runs = {p.name: run_policy(path, p, cost_model, T, observed) for p in policies}
    if hindsight_budget is not None:
        if observed is not None:
            next_day = np.asarray(observed, dtype=float)[1 : T + 1]
        else:
            next_day = cost_model.table.q[path[1 : T + 1]]
        schedule = FixedSchedule(hindsight_policy(next_day, hindsight_budget))
        runs[schedule.name] = run_policy(path, schedule, cost_model, T, observed)
        runs[NeverPolicy.name] = run_policy(path, NeverPolicy(), cost_model, T, observed)
    return runs


def _collect(years: List[int], seasons: List[Dict[str, EpisodeResult]]) -> ExperimentResult:
    names = list(seasons[0]) if seasons else []
    return ExperimentResult(
        years=years,
        episodes={name: [season[name] for season in seasons] for name in names},
    )


def monte_carlo(
    model: TransitionModel,
    T: int,
    policies: Sequence[Policy],
    cost_model: CostModel,
    n_years: int,
    seed: int = constants.DEFAULT_SEED,
    initial: Optional[np.ndarray] = None,
    workers: int = constants.DEFAULT_WORKERS,
    hindsight_budget: Optional[int] = None,
) -> ExperimentResult:
    """
    Evaluate policies on n_years simulated seasons.

    Season i samples its day-0 state from `initial` (uniform if omitted) and
    its path from stream i of the seed, so results do not depend on the
    number of workers.

    Args:
        model: Transition model to simulate
        T: Decision days per season
        policies: Policies to evaluate on every season
        cost_model: Cost model shared by all policies
        n_years: Number of simulated seasons
        seed: Base seed
        initial: Optional day-0 state distribution
        workers: Thread count
        hindsight_budget: If given (CPP), also run the hindsight and no-event baselines

    Returns:
        ExperimentResult with years 0..n_years-1
    """
    if n_years < 1:
        raise ValueError(f"n_years must be at least 1, got {n_years}")
    n = model.n_states
    initial = np.full(n, 1.0 / n) if initial is None else np.asarray(initial, dtype=float)
    cdf = np.cumsum(initial)
    cdf[-1] = 1.0

    def one_year(year: int) -> Dict[str, EpisodeResult]:
        draw = path_generator(seed, INITIAL_STREAM_OFFSET + year).random()
        x0 = min(int(np.searchsorted(cdf, draw, side="right")), n - 1)
        path = sample_path(model, x0, T + 2, seed, stream=year)[1:]
        return _season(path, policies, cost_model, T, None, hindsight_budget)

    years = list(range(n_years))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        seasons = list(pool.map(one_year, years))
    logger.info(f"simulated {n_years} seasons for {len(policies)} policies")
    return _collect(years, seasons)


def evaluate_seasons(
    paths: Dict[int, np.ndarray],
    policies: Sequence[Policy],
    cost_model: CostModel,
    T: int,
    observed: Optional[Dict[int, np.ndarray]] = None,
    hindsight_budget: Optional[int] = None,
) -> ExperimentResult:
    """Evaluate policies on observed seasons (e.g. held-out test years)."""
    years = sorted(paths)
    seasons = [
        _season(
            np.asarray(paths[year]),
            policies,
            cost_model,
            T,
            None if observed is None else observed[year],
            hindsight_budget,
        )
        for year in years
    ]
    return _collect(years, seasons)


# =============================================================================
# Output
# =============================================================================

def trace_frame(result: EpisodeResult) -> pd.DataFrame:
    T = len(result.decisions)
    budget = (
        pd.array(result.budget_left, dtype="Int64")
        if result.budget_left is not None
        else pd.array([None] * T, dtype="Int64")
    )
    return pd.DataFrame({
        "day": np.arange(1, T + 1),
        "metric": result.metric,
        "threshold": result.threshold,
        "decision": result.decisions,
        "budget_left": budget,
    })[TRACE_COLUMNS]


def write_trace_csv(result: EpisodeResult, path: Union[str, Path]) -> Path:
    """Per-day trace with columns day, metric, threshold, decision, budget_left."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(result).to_csv(path, index=False, lineterminator="\n")
    return path


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return None if not math.isfinite(float(value)) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def summary_json(summary: dict) -> str:
    """Deterministic JSON (sorted keys, non-finite numbers as null)."""
    return json.dumps(_clean(summary), indent=2, sort_keys=True)
