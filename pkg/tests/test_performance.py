"""Full-season scale checks. Run with `pytest -m slow`."""

import time

import numpy as np
import pytest

from openpsps import CostSchedule, TransitionModel, build_s1, monte_carlo
from openpsps.baselines_sim import BudgetedShutoffPolicy, NeverPolicy, PspsCostModel

pytestmark = pytest.mark.slow


def sparse_chain(rng, n, successors=40):
    """Each state moves to a few random successors, like an estimated weather chain."""
    P = np.zeros((n, n))
    for i in range(n):
        cols = rng.choice(n, size=successors, replace=False)
        P[i, cols] = rng.dirichlet(np.ones(successors))
    return TransitionModel(P=P)


def test_full_season_table_on_eight_bins_per_phenomenon(rng):
    n = 8**4
    model = sparse_chain(rng, n)
    f = (rng.random(n) < 0.05).astype(float)
    started = time.perf_counter()
    table = build_s1(122, 10, CostSchedule.build(122), model, f)
    elapsed = time.perf_counter() - started
    assert table.g.shape == (123, 11, 2, n)
    assert np.isfinite(table.g).all()
    assert elapsed < 120.0


def test_thousand_simulated_seasons(rng):
    n = 4**4
    model = sparse_chain(rng, n, successors=20)
    f = (rng.random(n) < 0.1).astype(float)
    costs = CostSchedule.build(122)
    table = build_s1(122, 10, costs, model, f)
    started = time.perf_counter()
    result = monte_carlo(
        model, 122, [BudgetedShutoffPolicy(table), NeverPolicy()],
        PspsCostModel(costs, model, f), n_years=1000, seed=1,
    )
    assert time.perf_counter() - started < 300.0
    assert result.summary()["P1"]["count_mean"] <= 10
