"""Tests for the adjusted (per-event lambda) shutoff table."""

import numpy as np
import pytest

from openpsps import CostSchedule, TransitionModel, build_s1, build_s2, decide_s2
from openpsps.scenario2 import CarriedAdjustedValue, oracle_adjustment, threshold_layer


class TestAdjustedTable:
    def test_matches_oracle(self, random_instance):
        for _ in range(50):
            inst = random_instance(T=5, n=3)
            table = build_s2(inst.T, inst.costs, inst.model, inst.f)
            oracle = oracle_adjustment(inst.T, inst.costs, inst.model, inst.f)
            assert table.h.shape == (inst.T + 1, 2, 3)
            np.testing.assert_allclose(table.h[inst.T, 0], oracle.values, rtol=1e-9)

    def test_carried_recursion_decomposes(self, random_instance):
        inst = random_instance(T=4, n=3)
        table = build_s2(inst.T, inst.costs, inst.model, inst.f)
        carried = CarriedAdjustedValue(inst.costs, inst.model, inst.f)
        for d in range(inst.T + 1):
            for u in (0, 1):
                for x in range(3):
                    got = carried.value(d, 50.0, u, x)
                    assert got == pytest.approx(50.0 + table.h[d, u, x], rel=1e-9)

    def test_policy_agrees_with_oracle(self, random_instance):
        for _ in range(20):
            inst = random_instance(T=5, n=3)
            table = build_s2(inst.T, inst.costs, inst.model, inst.f)
            oracle = oracle_adjustment(inst.T, inst.costs, inst.model, inst.f)
            for (t, u_prev, x), (q0, q1) in oracle.branches.items():
                if abs(q0 - q1) <= 1e-7 * max(1.0, abs(q0)):
                    continue
                assert decide_s2(table, inst.T + 1 - t, u_prev, x) == oracle.policy[(t, u_prev, x)]

    def test_larger_adjustment_raises_thresholds(self, random_instance):
        inst = random_instance(T=4, n=3)
        cheap = inst.costs.model_copy(update={"lam": 0.0})
        dear = inst.costs.model_copy(update={"lam": 1e4})
        low = threshold_layer(build_s2(inst.T, cheap, inst.model, inst.f), 2, 0)
        high = threshold_layer(build_s2(inst.T, dear, inst.model, inst.f), 2, 0)
        assert np.all(high >= low)

    def test_full_budget_without_adjustment_matches_budgeted_table(self, random_instance):
        """With a budget of T the hard cap never binds."""
        inst = random_instance(T=4, n=2)
        free = inst.costs.model_copy(update={"lam": 0.0})
        s1 = build_s1(inst.T, inst.T, free, inst.model, inst.f)
        s2 = build_s2(inst.T, free, inst.model, inst.f)
        np.testing.assert_allclose(s1.g[inst.T, inst.T], s2.h[inst.T], rtol=1e-9)

    def test_layer_bounds(self):
        model = TransitionModel(P=np.array([[1.0]]))
        table = build_s2(2, CostSchedule.build(2), model, np.array([1.0]))
        with pytest.raises(ValueError, match="layer d"):
            threshold_layer(table, 3, 0)
