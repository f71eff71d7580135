"""Tests for discretization, transition estimation and chain operations."""

import numpy as np
import pandas as pd
import pytest

from openpsps import DataError, NotErgodicError, StateSpace, TransitionModel
from openpsps.markov_model import (
    check_ergodic,
    count_transitions,
    discretize,
    discretize_frame,
    empirical_frequencies,
    estimate_transitions,
    n_step,
    sample_path,
    stationary,
)


class TestDiscretize:
    def test_edge_value_goes_to_upper_bin(self, space):
        # temp 30 sits on the second edge, rh 10 on the first
        assert discretize(space, [30.0, 10.0]) == space.encode((2, 1))
        assert space.encode((2, 1)) == 9

    def test_extremes(self, space):
        assert discretize(space, [-50.0, 0.0]) == 0
        assert discretize(space, [99.0, 99.0]) == space.cardinality - 1

    def test_decode_inverts_encode(self, space):
        for index in range(space.cardinality):
            assert space.encode(space.decode(index)) == index

    def test_missing_value(self, space):
        with pytest.raises(DataError, match="temp"):
            discretize(space, [float("nan"), 15.0])

    def test_wrong_length(self, space):
        with pytest.raises(DataError, match="expected 2 values"):
            discretize(space, [25.0])

    def test_day_type_factor_is_last(self, space):
        typed = StateSpace(phenomena=space.phenomena, day_types=["weekday", "weekend"])
        assert typed.sizes == (3, 4, 2)
        assert discretize(typed, [25.0, 15.0], "weekend") == typed.encode((1, 1, 1))
        with pytest.raises(DataError, match="day type"):
            discretize(typed, [25.0, 15.0])

    def test_frame_matches_scalar_path(self, space):
        typed = StateSpace(phenomena=space.phenomena, day_types=["weekday", "weekend"])
        frame = pd.DataFrame({
            # Saturday, Sunday, Monday
            "date": pd.to_datetime(["2024-06-01", "2024-06-02", "2024-06-03"]),
            "temp_c": [35.0, 20.0, 5.0],
            "rh_pct": [8.0, 40.0, 25.0],
        })
        states = discretize_frame(typed, frame)
        expected = [
            discretize(typed, [35.0, 8.0], "weekend"),
            discretize(typed, [20.0, 40.0], "weekend"),
            discretize(typed, [5.0, 25.0], "weekday"),
        ]
        np.testing.assert_array_equal(states, expected)


class TestEstimation:
    def test_counts_normalized(self):
        model = estimate_transitions([[0, 1, 1, 0, 1]], 2)
        np.testing.assert_allclose(model.P, [[0.0, 1.0], [0.5, 0.5]])

    def test_smoothing(self):
        model = estimate_transitions([[0, 1, 1, 0, 1]], 2, smoothing=1.0)
        np.testing.assert_allclose(model.P[0], [0.25, 0.75])

    def test_unseen_state_gets_uniform_row(self):
        model = estimate_transitions([[0, 1, 0]], 3)
        np.testing.assert_allclose(model.P[2], [1 / 3, 1 / 3, 1 / 3])

    def test_paths_are_not_joined(self):
        counts = count_transitions([[0, 1], [0, 1]], 2)
        assert counts[1, 0] == 0
        assert counts[0, 1] == 2

    def test_state_out_of_range(self):
        with pytest.raises(DataError, match="outside"):
            count_transitions([[0, 3]], 2)

    def test_no_paths(self):
        with pytest.raises(ValueError, match="at least one path"):
            estimate_transitions([], 2)

    def test_rows_must_sum_to_one(self):
        with pytest.raises(ValueError):
            TransitionModel(P=np.array([[0.5, 0.4], [0.5, 0.5]]))


class TestChain:
    def test_stationary_two_state(self):
        s = stationary(np.array([[0.9, 0.1], [0.5, 0.5]]))
        np.testing.assert_allclose(s, [5 / 6, 1 / 6], atol=1e-9)

    def test_stationary_is_fixed_point(self, rng):
        P = rng.dirichlet(np.ones(5), size=5)
        s = stationary(P)
        np.testing.assert_allclose(s @ P, s, atol=1e-10)
        assert s.sum() == pytest.approx(1.0)

    def test_periodic_chain_rejected(self):
        with pytest.raises(NotErgodicError, match="period 2"):
            stationary(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_reducible_chain_rejected(self):
        with pytest.raises(NotErgodicError, match="communicating classes"):
            check_ergodic(np.eye(2))

    def test_n_step(self):
        P = np.array([[0.9, 0.1], [0.5, 0.5]])
        np.testing.assert_array_equal(n_step(P, 0), np.eye(2))
        np.testing.assert_allclose(n_step(P, 3), P @ P @ P)

    def test_deterministic_chain_path(self):
        path = sample_path(np.array([[0.0, 1.0], [1.0, 0.0]]), 0, 4, seed=1)
        np.testing.assert_array_equal(path, [0, 1, 0, 1, 0])

    def test_sampling_reproducible_per_stream(self, rng):
        P = rng.dirichlet(np.ones(3), size=3)
        a = sample_path(P, 0, 50, seed=7, stream=3)
        b = sample_path(P, 0, 50, seed=7, stream=3)
        c = sample_path(P, 0, 50, seed=7, stream=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_long_run_frequencies(self):
        P = np.array([[0.9, 0.1], [0.5, 0.5]])
        path = sample_path(P, 0, 20_000, seed=11)
        np.testing.assert_allclose(empirical_frequencies(path, 2), stationary(P), atol=0.02)
