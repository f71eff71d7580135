"""Tests for the risk indicator, risk probabilities and stage costs."""

import numpy as np
import pytest

from openpsps import CostSchedule, RiskRule, TransitionModel
from openpsps.models import Direction, RiskThreshold
from openpsps.risk_cost import (
    expected_stage_table,
    indicator_vector,
    risk_indicator,
    stage_cost,
    switching_cost,
    vll_adjustment,
    wrp,
    wrp_vector,
)


@pytest.fixture
def hot_and_dry():
    return RiskRule(thresholds={
        "temp": RiskThreshold(threshold=30.0),
        "rh": RiskThreshold(threshold=20.0, direction=Direction.AT_MOST),
    })


@pytest.fixture
def costs():
    return CostSchedule.build(2, A=100.0, a=10.0, s1=3.0, s2=5.0)


class TestIndicator:
    def test_flags_hot_and_dry_states(self, space, hot_and_dry):
        # temp representatives 20, 25, 30; rh representatives 10, 15, 30, 40
        f = indicator_vector(space, hot_and_dry)
        assert f.shape == (space.cardinality,)
        np.testing.assert_array_equal(np.flatnonzero(f), [8, 9])

    def test_empty_rule_flags_everything(self, space):
        np.testing.assert_array_equal(indicator_vector(space, RiskRule()), 1.0)

    def test_single_state(self, space, hot_and_dry):
        assert risk_indicator(space, 9, hot_and_dry) == 1
        assert risk_indicator(space, 10, hot_and_dry) == 0
        with pytest.raises(ValueError, match="outside"):
            risk_indicator(space, space.cardinality, hot_and_dry)

    def test_unknown_phenomenon(self, space):
        rule = RiskRule(thresholds={"gust": RiskThreshold(threshold=40.0)})
        with pytest.raises(ValueError, match="gust"):
            indicator_vector(space, rule)

    def test_default_rule_covers_four_readings(self):
        assert sorted(RiskRule.default_psps().thresholds) == ["gust", "rh", "temp", "wind"]
        assert RiskRule.default_psps().thresholds["rh"].direction == Direction.AT_MOST


class TestRiskProbability:
    def test_row_times_indicator(self):
        model = TransitionModel(P=np.array([[0.8, 0.2], [0.3, 0.7]]))
        f = np.array([0.0, 1.0])
        np.testing.assert_allclose(wrp_vector(model, f), [0.2, 0.7])
        assert wrp(model, f, 1) == pytest.approx(0.7)


class TestCosts:
    def test_switching(self):
        assert switching_cost(0, 1, 3.0, 5.0) == 5.0
        assert switching_cost(1, 0, 3.0, 5.0) == 3.0
        assert switching_cost(1, 1, 3.0, 5.0) == 0.0
        assert switching_cost(0, 0, 3.0, 5.0) == 0.0

    def test_stage_cost(self, costs):
        assert stage_cost(costs, 1, 0, 0, 1) == 100.0
        assert stage_cost(costs, 1, 0, 1, 1) == 15.0
        assert stage_cost(costs, 1, 1, 0, 0) == 3.0
        assert stage_cost(costs, 1, 1, 1, 1) == 10.0
        assert stage_cost(costs, 2, 0, 0, 0.25) == 25.0

    def test_post_horizon_day_is_priced(self, costs):
        assert stage_cost(costs, 3, 1, 0, 1) == 103.0
        with pytest.raises(ValueError, match="outside"):
            stage_cost(costs, 4, 0, 0, 1)

    def test_expected_table_matches_stage_cost(self, costs):
        w = np.array([0.0, 0.3, 1.0])
        table = expected_stage_table(costs, w)
        assert table.shape == (3, 2, 2, 3)
        for p in range(3):
            for u_prev in (0, 1):
                for u in (0, 1):
                    for x, wx in enumerate(w):
                        assert table[p, u_prev, u, x] == pytest.approx(
                            stage_cost(costs, p + 1, u_prev, u, wx)
                        )

    def test_vll_adjustment(self):
        assert vll_adjustment(10_000, 4_050) == pytest.approx(40.5e6)
        with pytest.raises(ValueError):
            vll_adjustment(-1.0, 10.0)


class TestCostSchedule:
    def test_post_horizon_entry_defaults_to_last_day(self):
        costs = CostSchedule.build(3, A=[1.0, 2.0, 3.0])
        assert costs.A == [1.0, 2.0, 3.0, 3.0]
        assert costs.horizon == 3

    def test_negative_cost_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            CostSchedule.build(2, a=-1.0)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="daily values"):
            CostSchedule.build(4, A=[1.0, 2.0])

    def test_lambda_alias_round_trips(self, tmp_path):
        costs = CostSchedule.build(2, lam=7.5)
        path = tmp_path / "costs.json"
        path.write_text(costs.to_json(), encoding="utf-8")
        assert '"lambda"' in costs.to_json()
        assert CostSchedule.from_json(path).lam == 7.5
