"""
OpenPSPS Data Models

Pydantic documents for state spaces, risk rules, cost schedules, CPP parameters,
run configuration and fitted artifacts. Everything here round-trips through JSON.
"""

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from shared import constants

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "1"


# =============================================================================
# State space
# =============================================================================

class Phenomenon(BaseModel):
    """One observed quantity and the interior edges of its bins."""
    name: str = Field(..., description="Short name, e.g. 'temp'")
    unit: str = Field(..., description="Unit suffix used in CSV headers, e.g. 'c'")
    edges: List[float] = Field(default_factory=list, description="Strictly ascending interior bin edges")

    @field_validator("edges")
    @classmethod
    def check_edges(cls, v: List[float]) -> List[float]:
        if any(not math.isfinite(e) for e in v):
            raise ValueError("bin edges must be finite")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("bin edges must be strictly ascending")
        return v

    @property
    def column(self) -> str:
        return f"{self.name}_{self.unit}"

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    def bin_of(self, value: float) -> int:
        """Bin holding a value; a value equal to an edge belongs to the upper bin."""
        return int(np.searchsorted(self.edges, value, side="right"))

    def representatives(self) -> np.ndarray:
        """Representative value per bin: midpoints inside, the finite edge at both ends."""
        if not self.edges:
            return np.zeros(1)
        edges = np.asarray(self.edges, dtype=float)
        mids = (edges[:-1] + edges[1:]) / 2.0
        return np.concatenate([[edges[0]], mids, [edges[-1]]])


class StateSpace(BaseModel):
    """
    Joint discrete state space.

    States are encoded in mixed radix with the phenomena in declaration order
    (most significant first) and the optional day-type factor last.
    """
    phenomena: List[Phenomenon] = Field(..., min_length=1)
    day_types: List[str] = Field(default_factory=list, description="Categorical day-type labels, empty if unused")

    @field_validator("phenomena")
    @classmethod
    def unique_names(cls, v: List[Phenomenon]) -> List[Phenomenon]:
        names = [p.name for p in v]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate phenomenon names: {names}")
        return v

    @property
    def sizes(self) -> Tuple[int, ...]:
        sizes = tuple(p.n_bins for p in self.phenomena)
        if self.day_types:
            sizes = sizes + (len(self.day_types),)
        return sizes

    @property
    def cardinality(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def columns(self) -> List[str]:
        return [p.column for p in self.phenomena]

    def encode(self, bins: Tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(tuple(bins), self.sizes))

    def decode(self, index: int) -> Tuple[int, ...]:
        if not 0 <= index < self.cardinality:
            raise ValueError(f"state {index} outside 0..{self.cardinality - 1}")
        return tuple(int(b) for b in np.unravel_index(index, self.sizes))

    def bin_matrix(self) -> np.ndarray:
        """(cardinality, factors) matrix of per-factor bins for every state."""
        grid = np.unravel_index(np.arange(self.cardinality), self.sizes)
        return np.stack(grid, axis=1)

    def representative_matrix(self) -> np.ndarray:
        """(cardinality, phenomena) matrix of bin representative values."""
        bins = self.bin_matrix()
        cols = [p.representatives()[bins[:, i]] for i, p in enumerate(self.phenomena)]
        return np.stack(cols, axis=1)

    def day_type_index(self, label: str) -> int:
        try:
            return self.day_types.index(label)
        except ValueError:
            raise ValueError(f"unknown day type {label!r}; expected one of {self.day_types}") from None


# =============================================================================
# Risk rule
# =============================================================================

class Direction(str, Enum):
    AT_LEAST = "at_least"
    AT_MOST = "at_most"


class RiskThreshold(BaseModel):
    threshold: float
    direction: Direction = Direction.AT_LEAST


class RiskRule(BaseModel):
    """Per-phenomenon thresholds; phenomena absent from the mapping pass through."""
    thresholds: Dict[str, RiskThreshold] = Field(default_factory=dict)

    @classmethod
    def default_psps(cls) -> "RiskRule":
        return cls(thresholds={
            name: RiskThreshold(threshold=value, direction=Direction(direction))
            for name, (value, direction) in constants.PSPS_RISK_THRESHOLDS.items()
        })


# =============================================================================
# Cost schedules
# =============================================================================

def _check_series(name: str, values: List[float]) -> List[float]:
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise ValueError(f"{name} must contain finite nonnegative values")
    return values


def _pad(values: Union[float, List[float]], length: int) -> List[float]:
    if isinstance(values, (int, float)):
        return [float(values)] * length
    values = [float(v) for v in values]
    if len(values) == length - 1:
        # post-horizon day defaults to the last season day
        values.append(values[-1])
    if len(values) != length:
        raise ValueError(f"expected {length - 1} or {length} daily values, got {len(values)}")
    return values


class CostSchedule(BaseModel):
    """
    Daily PSPS costs for a season of T decision days.

    Each series holds T+1 entries. Entry p (0-based) prices the day following
    decision day p+1; entry T prices the post-horizon day, which is always
    energized.
    """
    model_config = ConfigDict(populate_by_name=True)

    A: List[float] = Field(..., description="Wildfire cost per risky energized day")
    a: List[float] = Field(..., description="Revenue loss per shutoff day")
    s1: List[float] = Field(..., description="De-energization cost")
    s2: List[float] = Field(..., description="Re-energization cost")
    gamma: float = Field(default=constants.PSPS_PENALTY, ge=0, description="Penalty per event beyond budget")
    lam: float = Field(default=constants.PSPS_ADJUSTMENT, ge=0, alias="lambda", description="Adjustment per event")
    currency: str = Field(default="USD")
    infra_cost: float = Field(default=0.0, ge=0, description="Infrastructure upgrade cost, reported only")
    infra_budget: float = Field(default=0.0, ge=0, description="Remaining upgrade budget, reported only")

    @field_validator("A", "a", "s1", "s2")
    @classmethod
    def nonnegative(cls, v: List[float], info) -> List[float]:
        return _check_series(info.field_name, v)

    @model_validator(mode="after")
    def same_length(self) -> "CostSchedule":
        lengths = {len(self.A), len(self.a), len(self.s1), len(self.s2)}
        if len(lengths) != 1:
            raise ValueError(f"cost series lengths differ: {sorted(lengths)}")
        if len(self.A) < 2:
            raise ValueError("cost series need at least two entries (one day plus post-horizon)")
        return self

    @property
    def horizon(self) -> int:
        return len(self.A) - 1

    @classmethod
    def build(
        cls,
        T: int,
        A: Union[float, List[float]] = constants.PSPS_WILDFIRE_COST,
        a: Union[float, List[float]] = constants.PSPS_REVENUE_LOSS,
        s1: Union[float, List[float]] = constants.PSPS_DEENERGIZE_COST,
        s2: Union[float, List[float]] = constants.PSPS_REENERGIZE_COST,
        **kwargs,
    ) -> "CostSchedule":
        """Build a schedule from scalars or T/T+1 daily series."""
        n = T + 1
        return cls(A=_pad(A, n), a=_pad(a, n), s1=_pad(s1, n), s2=_pad(s2, n), **kwargs)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (np.asarray(self.A, float), np.asarray(self.a, float),
                np.asarray(self.s1, float), np.asarray(self.s2, float))

    def to_json(self) -> str:
        return json.dumps(self.model_dump(by_alias=True), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "CostSchedule":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


class QuadCost(BaseModel):
    """Daily quadratic supply cost B z^2 + C z + D, T+1 entries like CostSchedule."""
    B: List[float]
    C: List[float]
    D: List[float]

    @field_validator("B", "C", "D")
    @classmethod
    def nonnegative(cls, v: List[float], info) -> List[float]:
        return _check_series(info.field_name, v)

    @model_validator(mode="after")
    def same_length(self) -> "QuadCost":
        if not len(self.B) == len(self.C) == len(self.D) or len(self.B) < 2:
            raise ValueError("B, C and D need the same length of at least two")
        return self

    @property
    def horizon(self) -> int:
        return len(self.B) - 1

    @classmethod
    def build(
        cls,
        T: int,
        B: Union[float, List[float]] = constants.CPP_QUAD_B,
        C: Union[float, List[float]] = constants.CPP_QUAD_C,
        D: Union[float, List[float]] = constants.CPP_QUAD_D,
    ) -> "QuadCost":
        n = T + 1
        return cls(B=_pad(B, n), C=_pad(C, n), D=_pad(D, n))

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.asarray(self.B, float), np.asarray(self.C, float), np.asarray(self.D, float)


class CppParams(BaseModel):
    M: int = Field(default=constants.CPP_BUDGET, ge=0, description="Event budget")
    y: float = Field(default=constants.CPP_CURTAILMENT_MW, ge=0, description="Curtailed load per event (MW)")
    abar: List[float] = Field(..., description="Revenue loss per event, T+1 entries")

    @field_validator("abar")
    @classmethod
    def nonnegative(cls, v: List[float]) -> List[float]:
        return _check_series("abar", v)

    @property
    def horizon(self) -> int:
        return len(self.abar) - 1

    @classmethod
    def build(
        cls,
        T: int,
        M: int = constants.CPP_BUDGET,
        y: float = constants.CPP_CURTAILMENT_MW,
        abar: Union[float, List[float]] = constants.CPP_REVENUE_LOSS,
    ) -> "CppParams":
        return cls(M=M, y=y, abar=_pad(abar, T + 1))


class CppConfig(BaseModel):
    """CPP parameters and supply cost as stored in one JSON file."""
    params: CppParams
    quad: QuadCost

    @model_validator(mode="after")
    def same_horizon(self) -> "CppConfig":
        if self.params.horizon != self.quad.horizon:
            raise ValueError(
                f"horizon mismatch: params cover {self.params.horizon} days, quad {self.quad.horizon}"
            )
        return self

    @classmethod
    def build(cls, T: int, **kwargs) -> "CppConfig":
        quad_keys = {"B", "C", "D"}
        return cls(
            params=CppParams.build(T, **{k: v for k, v in kwargs.items() if k not in quad_keys}),
            quad=QuadCost.build(T, **{k: v for k, v in kwargs.items() if k in quad_keys}),
        )


# =============================================================================
# Scenario 3 grid
# =============================================================================

class AlphaGrid(BaseModel):
    """Uniform grid of expected-cost thresholds lo, lo+step, ..., hi."""
    lo: float
    hi: float
    step: float = Field(..., gt=0)

    @model_validator(mode="after")
    def integral_span(self) -> "AlphaGrid":
        if not self.lo < self.hi:
            raise ValueError(f"grid needs lo < hi, got lo={self.lo}, hi={self.hi}")
        span = (self.hi - self.lo) / self.step
        if abs(span - round(span)) > 1e-6 * max(1.0, span):
            raise ValueError(f"(hi - lo) / step = {span} is not an integer")
        return self

    @classmethod
    def covering(cls, alpha_bar: float, points: int = 101) -> "AlphaGrid":
        """Grid from zero to alpha_bar with the given number of points."""
        if points < 2:
            raise ValueError("a grid needs at least two points")
        return cls(lo=0.0, hi=alpha_bar, step=alpha_bar / (points - 1))

    @property
    def n_points(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    def values(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.n_points)

    def floor_index(self, alpha: float) -> int:
        """Largest grid index whose value is <= alpha, or -1 below the grid."""
        j = math.floor((alpha - self.lo) / self.step + 1e-9)
        return min(j, self.n_points - 1) if j >= 0 else -1


# =============================================================================
# Demand model
# =============================================================================

class DemandModel(BaseModel):
    """Linear peak-demand estimate over bin representatives plus a weekend indicator."""
    feature_names: List[str]
    coefficients: List[float]
    weekend_coefficient: float = 0.0
    intercept: float = 0.0
    rmse: float = 0.0
    n_rows: int = 0

    def predict_states(self, space: StateSpace) -> np.ndarray:
        """Demand (MW) for every state of the space."""
        reps = space.representative_matrix()
        names = [p.name for p in space.phenomena]
        missing = [n for n in self.feature_names if n not in names]
        if missing:
            raise ValueError(f"state space lacks demand features: {missing}")
        cols = [names.index(n) for n in self.feature_names]
        q = self.intercept + reps[:, cols] @ np.asarray(self.coefficients, float)
        if "weekend" in space.day_types:
            weekend = space.bin_matrix()[:, -1] == space.day_type_index("weekend")
            q = q + self.weekend_coefficient * weekend
        return q


# =============================================================================
# Run configuration and fitted artifacts
# =============================================================================

class RunConfig(BaseModel):
    """Settings for one solve; file values are overridden by CLI options."""
    scenario: Literal["s1", "s2", "s3", "cpp"]
    horizon: Optional[int] = Field(default=None, ge=1)
    budget: Optional[int] = Field(default=None, ge=0, description="N for s1, M for cpp")
    alpha_bar: Optional[float] = Field(default=None, gt=0, description="Expected-cost threshold for s3")
    grid_points: int = Field(default=101, ge=2)
    costs_path: Optional[str] = None
    cpp_path: Optional[str] = None
    model_path: str = "artifacts/model.json"
    seed: int = constants.DEFAULT_SEED
    output_dir: str = constants.ARTIFACT_DIR

    @model_validator(mode="after")
    def budget_matches_scenario(self) -> "RunConfig":
        if self.scenario in ("s1", "cpp") and self.budget is None:
            raise ValueError(f"scenario {self.scenario} needs an integer budget")
        if self.scenario == "s3" and self.alpha_bar is None:
            raise ValueError("scenario s3 needs alpha_bar")
        if self.scenario != "s3" and self.alpha_bar is not None:
            raise ValueError(f"alpha_bar only applies to s3, not {self.scenario}")
        return self


class ModelArtifact(BaseModel):
    """Fitted state space, transition counts and optional demand model."""
    version: str = ARTIFACT_VERSION
    kind: Literal["psps", "cpp"]
    state_space: StateSpace
    smoothing: float = Field(default=0.0, ge=0)
    transition_counts: List[List[int]] = Field(default_factory=list, description="Sparse [from, to, count] triples")
    train_paths: Dict[str, List[int]] = Field(default_factory=dict, description="Season year -> state sequence")
    test_paths: Dict[str, List[int]] = Field(default_factory=dict)
    risk_rule: Optional[RiskRule] = None
    demand: Optional[DemandModel] = None
    test_demand: Dict[str, List[float]] = Field(default_factory=dict, description="Observed MW per test season")

    @field_validator("version")
    @classmethod
    def known_version(cls, v: str) -> str:
        if v != ARTIFACT_VERSION:
            raise ValueError(f"unsupported artifact version {v}")
        return v

    def dense_counts(self) -> np.ndarray:
        n = self.state_space.cardinality
        counts = np.zeros((n, n))
        for i, j, c in self.transition_counts:
            counts[i, j] = c
        return counts

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)
