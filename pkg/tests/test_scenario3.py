"""Tests for the cost-threshold value tensor, its bounds and the extracted policy."""

import numpy as np
import pytest

from openpsps import (
    AlphaGrid,
    CostSchedule,
    InfeasibleError,
    ScaleGuardError,
    TransitionModel,
    build_value,
    extract_policy,
    rollout,
    solve_s3,
)
from openpsps.baselines_sim import CostThresholdPolicy
from openpsps.scenario3 import (
    build_value_enumerated,
    closed_loop_bound,
    compute_b,
    policy_rule,
)


def feasible_alpha(inst, factor: float = 1.5) -> float:
    b = closed_loop_bound(inst.T, inst.costs, inst.model, inst.f)
    return factor * float(b[inst.T, 0].max())


@pytest.fixture
def one_state():
    """Certain risk every day: staying on costs 100, a shutoff 10."""
    model = TransitionModel(P=np.array([[1.0]]))
    costs = CostSchedule.build(1, A=100.0, a=10.0, s1=0.0, s2=0.0)
    return model, costs, np.array([1.0])


class TestBounds:
    def test_open_loop_never_below_closed_loop(self, random_instance):
        for _ in range(10):
            inst = random_instance(T=4, n=3)
            b = closed_loop_bound(inst.T, inst.costs, inst.model, inst.f)
            for tau in range(1, inst.T + 1):
                for x in range(3):
                    for u_prev in (0, 1):
                        open_loop = compute_b(tau, x, inst.costs, inst.model, inst.f, u_prev)
                        assert open_loop >= b[tau, u_prev, x] - 1e-9

    def test_constant_stage_minimum(self):
        """Without switching or terminal costs the bound is tau times the stage minimum."""
        model = TransitionModel(P=np.full((2, 2), 0.5))
        costs = CostSchedule.build(5, A=[100.0] * 5 + [0.0], a=30.0, s1=0.0, s2=0.0)
        f = np.array([1.0, 0.0])
        b = closed_loop_bound(5, costs, model, f)
        for tau in range(1, 6):
            assert compute_b(tau, 0, costs, model, f) == pytest.approx(30.0 * tau)
            np.testing.assert_allclose(b[tau], 30.0 * tau)

    def test_tau_out_of_range(self, random_instance):
        inst = random_instance(T=3, n=2)
        with pytest.raises(ValueError, match="tau"):
            compute_b(0, 0, inst.costs, inst.model, inst.f)


class TestValueTensor:
    def test_single_state_by_hand(self, one_state):
        model, costs, f = one_state
        tensor = build_value(1, 200.0, AlphaGrid.covering(200.0, 201), costs, model, f)
        # stay: 100 + 100 post-horizon; shut off: 10 + 100
        assert tensor.b[1, 0, 0] == pytest.approx(110.0)
        assert tensor.value(0, 200.0) == 0.0
        assert tensor.value(0, 150.0) == 1.0
        assert tensor.value(0, 100.0) == tensor.Vbar == 2.0
        assert not tensor.feasible(0, 100.0)
        assert tensor.value(0, -1.0) == tensor.Vbar

    @pytest.mark.parametrize("n, points", [(2, 101), (3, 51)])
    def test_frontier_allocation_matches_enumeration(self, random_instance, n, points):
        inst = random_instance(T=3, n=n)
        alpha_bar = feasible_alpha(inst)
        grid = AlphaGrid.covering(alpha_bar, points)
        fast = build_value(inst.T, alpha_bar, grid, inst.costs, inst.model, inst.f)
        slow = build_value_enumerated(inst.T, alpha_bar, grid, inst.costs, inst.model, inst.f)
        np.testing.assert_allclose(fast.V, slow.V, atol=1e-9)

    def test_nonincreasing_in_threshold(self, random_instance):
        inst = random_instance(T=4, n=3)
        tensor = solve_s3(inst.T, feasible_alpha(inst), inst.costs, inst.model, inst.f)
        assert tensor.V.shape == (4, 2, 3, 101)
        assert np.all(np.diff(tensor.V, axis=-1) <= 1e-12)

    def test_infeasible_start(self, random_instance):
        inst = random_instance(T=3, n=2)
        b = closed_loop_bound(inst.T, inst.costs, inst.model, inst.f)
        alpha_bar = 0.5 * float(b[inst.T, 0, 0])
        with pytest.raises(InfeasibleError, match="cannot be met from state 0"):
            solve_s3(inst.T, alpha_bar, inst.costs, inst.model, inst.f, x1=0)

    def test_grid_must_cover_threshold(self, random_instance):
        inst = random_instance(T=3, n=2)
        alpha_bar = feasible_alpha(inst)
        short = AlphaGrid(lo=0.0, hi=alpha_bar / 2, step=alpha_bar / 200)
        with pytest.raises(ValueError, match="below alpha_bar"):
            build_value(inst.T, alpha_bar, short, inst.costs, inst.model, inst.f)
        late = AlphaGrid(lo=alpha_bar * 0.9, hi=alpha_bar, step=alpha_bar / 100)
        with pytest.raises(ValueError, match="smallest achievable"):
            build_value(inst.T, alpha_bar, late, inst.costs, inst.model, inst.f)

    def test_enumeration_guard(self, random_instance):
        inst = random_instance(T=3, n=4)
        alpha_bar = feasible_alpha(inst)
        with pytest.raises(ScaleGuardError):
            build_value_enumerated(
                inst.T, alpha_bar, AlphaGrid.covering(alpha_bar, 101),
                inst.costs, inst.model, inst.f,
            )


class TestPolicy:
    def test_rollout_attains_value_within_threshold(self, random_instance):
        for _ in range(5):
            inst = random_instance(T=4, n=3)
            alpha_bar = feasible_alpha(inst, 1.2)
            tensor = solve_s3(inst.T, alpha_bar, inst.costs, inst.model, inst.f)
            for x1 in range(3):
                count, cost = rollout(tensor, x1, alpha_bar, mode="argmin")
                assert count == pytest.approx(tensor.value(x1, alpha_bar), abs=1e-8)
                assert cost <= alpha_bar * (1 + 1e-9)

    def test_case_split_stays_feasible(self, random_instance):
        inst = random_instance(T=4, n=3)
        alpha_bar = feasible_alpha(inst, 1.2)
        tensor = solve_s3(inst.T, alpha_bar, inst.costs, inst.model, inst.f)
        for x1 in range(3):
            best, _ = rollout(tensor, x1, alpha_bar, mode="argmin")
            count, cost = rollout(tensor, x1, alpha_bar)
            assert cost <= alpha_bar * (1 + 1e-9)
            assert count >= best - 1e-9

    def test_case_split_is_the_default(self, random_instance):
        inst = random_instance(T=3, n=3)
        alpha_bar = feasible_alpha(inst, 1.2)
        tensor = solve_s3(inst.T, alpha_bar, inst.costs, inst.model, inst.f)
        for x1 in range(3):
            explicit = rollout(tensor, x1, alpha_bar, mode="case_split")
            assert rollout(tensor, x1, alpha_bar) == explicit
            assert extract_policy(tensor, 1, x1, alpha_bar)[0] == extract_policy(
                tensor, 1, x1, alpha_bar, mode="case_split"
            )[0]
        assert CostThresholdPolicy(tensor, alpha_bar).mode == "case_split"

    def test_day_by_day_rule_carries_threshold(self, random_instance):
        inst = random_instance(T=3, n=2)
        alpha_bar = feasible_alpha(inst)
        tensor = solve_s3(inst.T, alpha_bar, inst.costs, inst.model, inst.f)
        decide = policy_rule(tensor, alpha_bar)
        u1, alpha1 = decide(1, 0, 0)
        expected_u, phi = extract_policy(tensor, 1, 0, alpha_bar)
        assert (u1, alpha1) == (expected_u, alpha_bar)
        _, alpha2 = decide(2, 1, u1)
        assert alpha2 == pytest.approx(phi[1])

    def test_last_day_has_no_plan(self, one_state):
        model, costs, f = one_state
        tensor = build_value(1, 200.0, AlphaGrid.covering(200.0, 201), costs, model, f)
        assert extract_policy(tensor, 1, 0, 150.0) == (1, None)
        assert extract_policy(tensor, 1, 0, 200.0) == (0, None)

    def test_rejects_infeasible_threshold_and_bad_arguments(self, one_state):
        model, costs, f = one_state
        tensor = build_value(1, 200.0, AlphaGrid.covering(200.0, 201), costs, model, f)
        with pytest.raises(InfeasibleError):
            extract_policy(tensor, 1, 0, 50.0)
        with pytest.raises(ValueError, match="day t"):
            extract_policy(tensor, 2, 0, 150.0)
        with pytest.raises(ValueError, match="mode"):
            extract_policy(tensor, 1, 0, 150.0, mode="greedy")
