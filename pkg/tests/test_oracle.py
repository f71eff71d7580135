"""Tests for the desk-scale guard, rule evaluation and Pareto frontiers."""

import numpy as np
import pytest

from openpsps import BudgetViolationError, ScaleGuardError
from openpsps.oracle import (
    Frontier,
    check_desk_scale,
    evaluate_budget_rule,
    frontier_from_steps,
    pareto_prune,
    weighted_sum,
)


def points(front: Frontier):
    return list(zip(front.weight.tolist(), front.value.tolist()))


class TestDeskScale:
    def test_within_limits(self):
        check_desk_scale(12, 5)

    @pytest.mark.parametrize("T, n", [(13, 2), (3, 6)])
    def test_refuses_large_instances(self, T, n):
        with pytest.raises(ScaleGuardError, match="oracle limited"):
            check_desk_scale(T, n)


class TestFrontier:
    def test_prune_drops_dominated_points(self):
        front = Frontier(np.array([1, 2, 2, 3, 4]), np.array([5, 3, 4, 3.5, 1]))
        assert points(pareto_prune(front)) == [(1, 5), (2, 3), (4, 1)]

    def test_best_within(self):
        front = Frontier(np.array([1.0, 2.0, 4.0]), np.array([5.0, 3.0, 1.0]))
        values, idx = front.best_within(np.array([0.5, 1.0, 3.9, 10.0]))
        np.testing.assert_array_equal(values, [np.inf, 5.0, 3.0, 1.0])
        np.testing.assert_array_equal(idx, [-1, 0, 1, 2])

    def test_best_within_tolerates_rounding(self):
        front = Frontier(np.array([0.3]), np.array([1.0]))
        values, _ = front.best_within(0.1 + 0.2 - 1e-12)
        assert values == 1.0

    def test_weighted_sum_tracks_choices(self):
        a = Frontier(np.array([0.0, 2.0]), np.array([4.0, 0.0]))
        b = Frontier(np.array([0.0, 1.0]), np.array([2.0, 0.0]))
        combined = weighted_sum([a, b], [0.5, 0.5], track=True)
        # (0,0) -> (0, 3), (0,1) -> (0.5, 2), (1,0) -> (1, 1), (1,1) -> (1.5, 0)
        assert points(combined) == [(0.0, 3.0), (0.5, 2.0), (1.0, 1.0), (1.5, 0.0)]
        np.testing.assert_array_equal(combined.choice, [[0, 0], [0, 1], [1, 0], [1, 1]])

    def test_zero_probability_successor_is_skipped(self):
        a = Frontier(np.array([1.0]), np.array([1.0]))
        empty = Frontier(np.empty(0), np.empty(0))
        combined = weighted_sum([a, empty], [1.0, 0.0], track=True)
        assert points(combined) == [(1.0, 1.0)]
        np.testing.assert_array_equal(combined.choice, [[0, -1]])

    def test_empty_successor_with_mass_empties_result(self):
        a = Frontier(np.array([1.0]), np.array([1.0]))
        empty = Frontier(np.empty(0), np.empty(0))
        assert len(weighted_sum([a, empty], [0.5, 0.5])) == 0

    def test_size_guard(self):
        front = Frontier(np.arange(10.0), -np.arange(10.0))
        with pytest.raises(ScaleGuardError):
            weighted_sum([front, front, front], [0.5, 0.3, 0.2], max_points=5)

    def test_steps_drop_unreachable_cells(self):
        steps = frontier_from_steps(np.array([0.0, 1.0, 2.0]), np.array([np.inf, 2.0, 2.0]))
        assert points(steps) == [(1.0, 2.0)]


class TestRuleEvaluation:
    def test_never_rule_costs_expected_wildfire_damage(self, random_instance):
        inst = random_instance(T=3, n=2)
        cost, count = evaluate_budget_rule(
            inst.T, 1, inst.costs, inst.model, inst.f, lambda t, k, u, x: 0
        )
        P, f = inst.model.P, inst.f
        A = np.asarray(inst.costs.A)
        # day-0 state; the risky days are 2 .. T+2
        expected = sum(A[i] * np.linalg.matrix_power(P, i + 2) @ f for i in range(inst.T + 1))
        np.testing.assert_allclose(cost, expected, rtol=1e-12)
        np.testing.assert_array_equal(count, 0.0)

    def test_rule_cannot_overspend(self, random_instance):
        inst = random_instance(T=3, n=2)
        with pytest.raises(BudgetViolationError):
            evaluate_budget_rule(inst.T, 1, inst.costs, inst.model, inst.f, lambda t, k, u, x: 1)
