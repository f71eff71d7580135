"""
Markov model of daily observations.

Discretizes raw observation vectors into joint states, estimates the
row-stochastic transition matrix from state sequences and provides the chain
operations every scenario relies on: n-step powers, the stationary
distribution and seeded path sampling.
"""

import logging
import math
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from shared import constants

from .errors import DataError, NotErgodicError
from .models import StateSpace

logger = logging.getLogger(__name__)


# =============================================================================
# Transition model
# =============================================================================

class TransitionModel(BaseModel):
    """Row-stochastic transition matrix with the counts it was estimated from."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    P: np.ndarray
    smoothing: float = 0.0
    counts: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def check_stochastic(self) -> "TransitionModel":
        P = self.P
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ValueError(f"transition matrix must be square and non-empty, got shape {P.shape}")
        if not np.all(np.isfinite(P)) or P.min() < 0 or P.max() > 1:
            raise ValueError("transition probabilities must lie in [0, 1]")
        worst = np.abs(P.sum(axis=1) - 1.0).max()
        if worst > constants.ROW_TOL * P.shape[0]:
            raise ValueError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")
        return self

    @property
    def n_states(self) -> int:
        return self.P.shape[0]


# =============================================================================
# Discretization
# =============================================================================

def discretize(
    space: StateSpace,
    raw: Sequence[float],
    day_type: Optional[Union[str, int]] = None,
) -> int:
    """
    Map one raw observation vector to its joint state index.

    Args:
        space: State space declaring phenomena and bin edges
        raw: One value per phenomenon, in declaration order
        day_type: Day-type label or index, required when the space has day types

    Returns:
        Mixed-radix joint state index

    Raises:
        DataError: If a value is NaN or the vector has the wrong length
    """
    if len(raw) != len(space.phenomena):
        raise DataError(f"expected {len(space.phenomena)} values, got {len(raw)}")
    bins = []
    for phenomenon, value in zip(space.phenomena, raw):
        if value is None or math.isnan(float(value)):
            raise DataError(f"missing value for phenomenon {phenomenon.name!r}")
        bins.append(phenomenon.bin_of(float(value)))
    if space.day_types:
        if day_type is None:
            raise DataError("this state space needs a day type")
        if isinstance(day_type, (int, np.integer)):
            bins.append(int(day_type))
        else:
            bins.append(space.day_type_index(day_type))
    return space.encode(tuple(bins))


def day_type_labels(dates: pd.Series) -> pd.Series:
    return pd.Series(np.where(dates.dt.dayofweek >= 5, "weekend", "weekday"), index=dates.index)


def discretize_frame(space: StateSpace, frame: pd.DataFrame) -> np.ndarray:
    """Vectorized discretize over the rows of a frame with unit-suffixed columns."""
    factors = []
    for phenomenon in space.phenomena:
        values = frame[phenomenon.column].to_numpy(dtype=float)
        if np.isnan(values).any():
            row = int(np.flatnonzero(np.isnan(values))[0])
            raise DataError(f"missing value for phenomenon {phenomenon.name!r}", row=row)
        factors.append(np.searchsorted(phenomenon.edges, values, side="right"))
    if space.day_types:
        labels = day_type_labels(frame["date"])
        factors.append(np.array([space.day_type_index(label) for label in labels]))
    return np.ravel_multi_index(tuple(factors), space.sizes).astype(int)


# =============================================================================
# Estimation
# =============================================================================

def count_transitions(paths: Iterable[Sequence[int]], n_states: int) -> np.ndarray:
    counts = np.zeros((n_states, n_states))
    for path in paths:
        path = np.asarray(path, dtype=int)
        if path.size and (path.min() < 0 or path.max() >= n_states):
            raise DataError(f"path visits a state outside 0..{n_states - 1}")
        np.add.at(counts, (path[:-1], path[1:]), 1.0)
    return counts


def from_counts(counts: np.ndarray, smoothing: float = 0.0) -> TransitionModel:
    """Normalize counts plus pseudo-counts; rows with no mass become uniform."""
    n = counts.shape[0]
    totals = counts.sum(axis=1) + smoothing * n
    P = np.full((n, n), 1.0 / n)
    filled = totals > 0
    P[filled] = (counts[filled] + smoothing) / totals[filled, None]
    empty = int((~filled).sum())
    if empty:
        logger.info(f"{empty} of {n} states have no observed transitions; using uniform rows")
    return TransitionModel(P=P, smoothing=smoothing, counts=counts)


def estimate_transitions(
    paths: List[Sequence[int]],
    n_states: int,
    smoothing: float = 0.0,
) -> TransitionModel:
    """
    Estimate P from observed state sequences.

    P[i, j] = (count(i->j) + smoothing) / (count(i->.) + smoothing * n_states).

    Raises:
        ValueError: If no paths are given, or nothing is observed and smoothing is zero
    """
    if not paths:
        raise ValueError("estimate_transitions needs at least one path")
    if smoothing < 0:
        raise ValueError(f"smoothing must be nonnegative, got {smoothing}")
    counts = count_transitions(paths, n_states)
    if counts.sum() == 0 and smoothing == 0:
        raise ValueError("no transitions observed and smoothing is zero")
    logger.debug(f"estimated {n_states}x{n_states} chain from {int(counts.sum())} transitions")
    return from_counts(counts, smoothing)


# =============================================================================
# Chain operations
# =============================================================================

def _matrix(model: Union[TransitionModel, np.ndarray]) -> np.ndarray:
    return model.P if isinstance(model, TransitionModel) else np.asarray(model, dtype=float)


def n_step(model: Union[TransitionModel, np.ndarray], n: int) -> np.ndarray:
    """n-step transition matrix by repeated squaring; n=0 gives the identity."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    return np.linalg.matrix_power(_matrix(model), n)


def _period(P: np.ndarray) -> int:
    """Period of an irreducible chain from BFS levels on its support graph."""
    graph = csr_matrix(P > 0)
    order, preds = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for node in order[1:]:
        level[node] = level[preds[node]] + 1
    rows, cols = graph.nonzero()
    gaps = np.abs(level[rows] + 1 - level[cols])
    return int(reduce(math.gcd, gaps.tolist(), 0))


def check_ergodic(model: Union[TransitionModel, np.ndarray]) -> None:
    """Raise NotErgodicError unless the chain is irreducible and aperiodic."""
    P = _matrix(model)
    n_components, _ = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    if n_components != 1:
        raise NotErgodicError(f"chain is not ergodic: {n_components} communicating classes")
    period = _period(P)
    if period != 1:
        raise NotErgodicError(f"chain is not ergodic: period {period}")


def stationary(
    model: Union[TransitionModel, np.ndarray],
    tol: float = constants.STATIONARY_TOL,
) -> np.ndarray:
    """
    Stationary distribution s with sP = s.

    Raises:
        NotErgodicError: If the chain is reducible or periodic
    """
    P = _matrix(model)
    check_ergodic(P)
    n = P.shape[0]
    system = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    s, *_ = linalg.lstsq(system, rhs)
    s = np.clip(s, 0.0, None)
    s /= s.sum()
    for _ in range(10_000):
        if np.abs(s @ P - s).max() <= tol:
            break
        s = s @ P
    else:
        logger.warning(f"stationary residual {np.abs(s @ P - s).max():.3e} above tolerance {tol}")
    return s


def empirical_frequencies(path: Sequence[int], n_states: int) -> np.ndarray:
    counts = np.bincount(np.asarray(path, dtype=int), minlength=n_states)
    return counts / counts.sum()


def path_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator: stream i of a seed is independent of call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def sample_path(
    model: Union[TransitionModel, np.ndarray],
    x0: int,
    T: int,
    seed: int,
    stream: int = 0,
) -> np.ndarray:
    """
    Sample x0, x1, ..., xT by inverse-CDF lookup over each row in state order.

    Args:
        model: Transition model
        x0: Initial state
        T: Number of transitions
        seed: Seed of the counter-based generator
        stream: Stream index, e.g. the simulated year

    Returns:
        Integer array of length T+1
    """
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    P = _matrix(model)
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    draws = path_generator(seed, stream).random(T)
    path = np.empty(T + 1, dtype=int)
    path[0] = x0
    last = P.shape[0] - 1
    for t in range(T):
        path[t + 1] = min(int(np.searchsorted(cdf[path[t]], draws[t], side="right")), last)
    return path
