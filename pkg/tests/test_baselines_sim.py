"""Tests for episode replay, baseline policies and the Monte Carlo harness."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from openpsps import (
    BudgetViolationError,
    CostSchedule,
    CppConfig,
    DataError,
    TransitionModel,
    build_cpp,
    build_s1,
    build_s2,
    monte_carlo,
    run_policy,
    solve_s3,
)
from openpsps.baselines_sim import (
    TRACE_COLUMNS,
    AdjustedShutoffPolicy,
    BudgetedShutoffPolicy,
    CostThresholdPolicy,
    CppCostModel,
    CppThresholdPolicy,
    Decision,
    FixedSchedule,
    HistoricalPolicy,
    MyopicPolicy,
    NeverPolicy,
    Policy,
    PspsCostModel,
    evaluate_seasons,
    hindsight_policy,
    historical_policy,
    historical_threshold,
    savings_vs_hindsight,
    summary_json,
    write_trace_csv,
)
from openpsps.risk_cost import stage_cost
from openpsps.scenario3 import closed_loop_bound


class AlwaysPolicy(Policy):
    name = "Always"

    def __init__(self, budget):
        self.budget = budget

    def __call__(self, t, x, k, u_prev):
        return Decision(1, 0.0, 0.0)


@pytest.fixture
def psps(random_instance):
    inst = random_instance(T=6, n=3)
    return inst, PspsCostModel(inst.costs, inst.model, inst.f)


class TestHistorical:
    def test_threshold_single_year(self):
        assert historical_threshold([np.array([0.9, 0.8, 0.1])], 2) == pytest.approx(0.8)

    def test_threshold_averages_years(self):
        yearly = [np.array([0.9, 0.8, 0.1]), np.array([0.7, 0.6, 0.5])]
        assert historical_threshold(yearly, 2) == pytest.approx(0.7)

    def test_threshold_needs_enough_days(self):
        with pytest.raises(DataError, match="fewer than 4"):
            historical_threshold([np.array([0.9, 0.8, 0.1])], 4)
        with pytest.raises(ValueError, match="at least 1"):
            historical_threshold([np.array([0.9])], 0)

    def test_fires_strictly_above(self):
        policy = HistoricalPolicy(0.5, np.array([0.5, 0.6]))
        assert policy(1, 0, None, 0).u == 0
        assert policy(1, 1, None, 0).u == 1

    def test_may_exceed_the_event_budget(self, chain):
        T, M = 8, 2
        demand = np.array([15_000.0, 25_000.0, 35_000.0])
        table = build_cpp(T, CppConfig.build(T, M=M), demand, chain(3))
        low, high = np.argmin(table.mean_demand), np.argmax(table.mean_demand)
        policy = historical_policy([np.full(T + 2, low)], M, table.mean_demand, horizon=T)
        assert policy.budget is None
        assert policy.threshold == pytest.approx(table.mean_demand[low])
        result = run_policy(np.full(T + 2, high), policy, CppCostModel(table))
        assert result.decisions.sum() == T > M
        assert result.budget_left is None


class TestHindsight:
    def test_largest_days(self):
        np.testing.assert_array_equal(hindsight_policy([5, 9, 8, 1], 2), [0, 1, 1, 0])

    def test_ties_go_to_earlier_day(self):
        np.testing.assert_array_equal(hindsight_policy([3, 7, 7, 7], 2), [0, 1, 1, 0])

    def test_budget_edges(self):
        np.testing.assert_array_equal(hindsight_policy([1, 2, 3], 0), [0, 0, 0])
        np.testing.assert_array_equal(hindsight_policy([1, 2, 3], 3), [1, 1, 1])
        with pytest.raises(ValueError, match="M must lie"):
            hindsight_policy([1, 2, 3], 4)

    def test_savings_ratio(self):
        assert savings_vs_hindsight(10.0, 6.0, 2.0) == pytest.approx(0.5)
        assert math.isnan(savings_vs_hindsight(10.0, 6.0, 10.0))


class TestRunPolicy:
    def test_never_policy_costs(self, psps):
        inst, cost_model = psps
        path = np.array([0, 1, 2, 0, 1, 2, 0, 1])
        result = run_policy(path, NeverPolicy(), cost_model)
        A = np.asarray(inst.costs.A)
        realized = sum(A[t - 1] * inst.f[path[t]] for t in range(1, 8))
        expected = sum(A[t - 1] * cost_model.wrp[path[t - 1]] for t in range(1, 8))
        assert result.count == 0
        assert result.total_realized == pytest.approx(realized)
        assert result.total_expected == pytest.approx(expected)
        assert result.budget_left is None

    def test_fixed_schedule_pays_switching(self, psps):
        inst, cost_model = psps
        path = np.array([0, 1, 2, 0, 1, 2, 0, 1])
        decisions = [1, 0, 1, 1, 0, 0]
        result = run_policy(path, FixedSchedule(decisions), cost_model)
        u_prev, total = 0, 0.0
        for t, u in enumerate(decisions + [0], start=1):
            total += stage_cost(inst.costs, t, u_prev, u, inst.f[path[t]])
            u_prev = u
        assert result.count == 3
        assert result.total_realized == pytest.approx(total)

    def test_overspending_policy_raises(self, psps):
        _, cost_model = psps
        with pytest.raises(BudgetViolationError, match="no budget"):
            run_policy(np.zeros(8, dtype=int), AlwaysPolicy(budget=2), cost_model)

    def test_short_path(self, psps):
        _, cost_model = psps
        with pytest.raises(DataError, match="cannot cover"):
            run_policy(np.zeros(5, dtype=int), NeverPolicy(), cost_model, T=6)

    def test_budgeted_trace(self, psps):
        inst, cost_model = psps
        table = build_s1(inst.T, 2, inst.costs, inst.model, inst.f)
        path = np.array([2, 2, 1, 0, 2, 1, 0, 0])
        result = run_policy(path, BudgetedShutoffPolicy(table), cost_model)
        assert result.budget_left[0] == 2
        np.testing.assert_array_equal(
            result.budget_left[1:], 2 - np.cumsum(result.decisions)[:-1]
        )
        live = result.budget_left > 0
        np.testing.assert_array_equal(
            result.decisions[live], (result.metric >= result.threshold)[live]
        )
        assert result.count <= 2

    def test_myopic_compares_expected_cost(self, psps):
        inst, cost_model = psps
        policy = MyopicPolicy(inst.costs, cost_model.wrp)
        decision = policy(1, 0, None, 0)
        assert decision.threshold == pytest.approx(inst.costs.a[0] / inst.costs.A[0])
        assert decision.u == int(cost_model.wrp[0] > decision.threshold)

    def test_cost_threshold_policy_resets_between_seasons(self, psps):
        inst, cost_model = psps
        b = closed_loop_bound(inst.T, inst.costs, inst.model, inst.f)
        alpha_bar = 1.3 * float(b[inst.T, 0].max())
        tensor = solve_s3(inst.T, alpha_bar, inst.costs, inst.model, inst.f, points=41)
        policy = CostThresholdPolicy(tensor, alpha_bar)
        path = np.array([1, 0, 2, 2, 1, 0, 1, 2])
        first = run_policy(path, policy, cost_model)
        second = run_policy(path, policy, cost_model)
        np.testing.assert_array_equal(first.decisions, second.decisions)
        assert first.threshold[0] == alpha_bar


class TestMonteCarlo:
    def test_deterministic_chain_has_no_spread(self):
        model = TransitionModel(P=np.array([[1.0]]))
        costs = CostSchedule.build(5, A=100.0, a=10.0, s1=1.0, s2=1.0)
        f = np.array([1.0])
        table = build_s1(5, 2, costs, model, f)
        result = monte_carlo(
            model, 5, [BudgetedShutoffPolicy(table), NeverPolicy()],
            PspsCostModel(costs, model, f), n_years=20,
        )
        for stats in result.summary().values():
            assert stats["count_std"] == 0.0
            assert stats["realized_cost_std"] == 0.0
            assert stats["expected_cost_std"] == 0.0
        assert result.summary()["P1"]["count_mean"] == 2.0

    def test_worker_count_does_not_change_results(self, psps):
        inst, cost_model = psps
        policies = [
            BudgetedShutoffPolicy(build_s1(inst.T, 2, inst.costs, inst.model, inst.f)),
            AdjustedShutoffPolicy(build_s2(inst.T, inst.costs, inst.model, inst.f)),
        ]
        one = monte_carlo(inst.model, inst.T, policies, cost_model, 30, seed=5, workers=1)
        many = monte_carlo(inst.model, inst.T, policies, cost_model, 30, seed=5, workers=4)
        for name in ("P1", "P2"):
            for a, b in zip(one.episodes[name], many.episodes[name]):
                np.testing.assert_array_equal(a.decisions, b.decisions)
                np.testing.assert_array_equal(a.realized, b.realized)
        assert one.summary() == many.summary()

    def test_hindsight_beats_causal_supply_cost(self, rng, chain):
        T, M = 8, 2
        model = chain(3)
        config = CppConfig.build(T, M=M)
        table = build_cpp(T, config, rng.uniform(15_000.0, 35_000.0, 3), model)
        result = monte_carlo(
            model, T, [CppThresholdPolicy(table)], CppCostModel(table), 50, hindsight_budget=M
        )
        abar = np.asarray(config.params.abar[:T])
        for causal, best in zip(result.episodes["CPP"], result.episodes["Hindsight"]):
            supply = causal.total_realized - abar @ causal.decisions
            hindsight_supply = best.total_realized - abar @ best.decisions
            assert hindsight_supply <= supply + 1e-6
        assert len(result.savings("CPP")) == 50

    @pytest.mark.slow
    def test_expected_and_realized_costs_agree(self, psps):
        """Both accumulators estimate the same mean; they differ by under three standard errors."""
        inst, cost_model = psps
        policies = [
            BudgetedShutoffPolicy(build_s1(inst.T, 2, inst.costs, inst.model, inst.f)),
            NeverPolicy(),
        ]
        n = 10_000
        result = monte_carlo(inst.model, inst.T, policies, cost_model, n, seed=21)
        for runs in result.episodes.values():
            realized = np.array([r.total_realized for r in runs])
            expected = np.array([r.total_expected for r in runs])
            se = math.sqrt(realized.var() / n + expected.var() / n)
            assert abs(realized.mean() - expected.mean()) < 3 * se


class TestOutput:
    def test_trace_csv(self, psps, tmp_path):
        inst, cost_model = psps
        table = build_s1(inst.T, 2, inst.costs, inst.model, inst.f)
        path = np.array([2, 2, 1, 0, 2, 1, 0, 0])
        budgeted = run_policy(path, BudgetedShutoffPolicy(table), cost_model)
        never = run_policy(path, NeverPolicy(), cost_model)
        written = write_trace_csv(budgeted, tmp_path / "traces" / "p1.csv")
        assert written.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
        frame = pd.read_csv(written)
        np.testing.assert_array_equal(frame["day"], np.arange(1, 7))
        np.testing.assert_array_equal(frame["decision"], budgeted.decisions)
        blank = pd.read_csv(write_trace_csv(never, tmp_path / "never.csv"))
        assert blank["budget_left"].isna().all()

    def test_summary_json_is_deterministic(self):
        text = summary_json({"b": float("nan"), "a": np.int64(1), "c": {"z": np.inf}})
        assert json.loads(text) == {"a": 1, "b": None, "c": {"z": None}}
        assert text.index('"a"') < text.index('"b"')

    def test_evaluate_seasons_per_year(self, psps):
        inst, cost_model = psps
        paths = {2019: np.zeros(8, dtype=int), 2018: np.ones(8, dtype=int)}
        result = evaluate_seasons(paths, [NeverPolicy()], cost_model, inst.T)
        assert result.years == [2018, 2019]
        table = result.per_year()
        assert set(table) == {"2018", "2019"}
        assert table["2018"]["No events"]["count"] == 0
