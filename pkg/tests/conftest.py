"""Shared fixtures: seeded random chains and small cost instances."""

from typing import NamedTuple

import numpy as np
import pytest

from openpsps import CostSchedule, Phenomenon, StateSpace, TransitionModel


class Instance(NamedTuple):
    T: int
    model: TransitionModel
    f: np.ndarray
    costs: CostSchedule


def random_chain(rng: np.random.Generator, n: int) -> TransitionModel:
    return TransitionModel(P=rng.dirichlet(np.ones(n), size=n))


def random_costs(rng: np.random.Generator, T: int) -> CostSchedule:
    return CostSchedule.build(
        T,
        A=list(rng.uniform(50.0, 150.0, T + 1)),
        a=list(rng.uniform(5.0, 40.0, T + 1)),
        s1=list(rng.uniform(0.0, 10.0, T + 1)),
        s2=list(rng.uniform(0.0, 10.0, T + 1)),
        gamma=float(rng.uniform(0.0, 50.0)),
        lam=float(rng.uniform(0.0, 20.0)),
    )


def random_indicator(rng: np.random.Generator, n: int) -> np.ndarray:
    f = (rng.random(n) < 0.5).astype(float)
    f[rng.integers(n)] = 1.0
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain(rng):
    """Factory of random dense chains with n states."""
    return lambda n: random_chain(rng, n)


@pytest.fixture
def random_instance(rng):
    """Factory of random (T, model, f, costs) instances drawn from the shared generator."""
    def make(T: int = 4, n: int = 3) -> Instance:
        return Instance(T, random_chain(rng, n), random_indicator(rng, n), random_costs(rng, T))
    return make


@pytest.fixture
def space():
    """Two phenomena with three and four bins."""
    return StateSpace(phenomena=[
        Phenomenon(name="temp", unit="c", edges=[20.0, 30.0]),
        Phenomenon(name="rh", unit="pct", edges=[10.0, 20.0, 40.0]),
    ])
