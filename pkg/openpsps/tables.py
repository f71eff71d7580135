"""
Versioned policy-table files.

A table file is an `.npz` archive holding a JSON header (format, version,
scenario, dims, params), the main table flattened in row-major order under
`values`, and the per-state vectors the decision rules need. Loading checks
the header and every shape before rebuilding the table object.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .cpp_sched import PolicyTableCpp
from .errors import DataError
from .markov_model import TransitionModel
from .models import AlphaGrid, CostSchedule, CppConfig
from .scenario1 import PolicyTableS1
from .scenario2 import PolicyTableS2
from .scenario3 import ValueTensor

logger = logging.getLogger(__name__)

TABLE_FORMAT = "openpsps-table"
TABLE_VERSION = "1"

Scenario = Literal["s1", "s2", "s3", "cpp"]
AnyTable = Union[PolicyTableS1, PolicyTableS2, ValueTensor, PolicyTableCpp]

# per-state vectors stored next to the main table
_EXTRAS = {
    "s1": ("wrp",),
    "s2": ("wrp",),
    "s3": ("b", "wrp"),
    "cpp": ("q", "mean_demand", "E0", "E1"),
}


class TableHeader(BaseModel):
    format: str = TABLE_FORMAT
    version: str = TABLE_VERSION
    scenario: Scenario
    dims: list = Field(..., description="Shape of the main table")
    params: Dict[str, Any] = Field(default_factory=dict)


def _costs(costs: CostSchedule) -> dict:
    return costs.model_dump(mode="json", by_alias=True)


def _describe(table: AnyTable) -> tuple:
    if isinstance(table, PolicyTableS1):
        return "s1", table.g, {"T": table.T, "N": table.N, "costs": _costs(table.costs)}
    if isinstance(table, PolicyTableS2):
        return "s2", table.h, {"T": table.T, "lam": table.lam, "costs": _costs(table.costs)}
    if isinstance(table, ValueTensor):
        return "s3", table.V, {
            "T": table.T,
            "costs": _costs(table.costs),
            "grid": table.grid.model_dump(mode="json"),
            "Vbar": table.Vbar,
        }
    if isinstance(table, PolicyTableCpp):
        config = table.config.model_dump(mode="json")
        return "cpp", table.g, {"T": table.T, "M": table.M, "config": config}
    raise TypeError(f"cannot store a {type(table).__name__}")


def save_table(table: AnyTable, path: Union[str, Path], **params) -> Path:
    """
    Write a policy table.

    Args:
        table: Any scenario's table
        path: Target file (`.npz` is appended if missing)
        **params: Extra JSON-serializable header params (e.g. alpha_bar)

    Returns:
        Path written
    """
    scenario, values, base = _describe(table)
    header = TableHeader(scenario=scenario, dims=list(values.shape), params={**base, **params})
    arrays = {name: np.asarray(getattr(table, name), dtype=float) for name in _EXTRAS[scenario]}
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_name(path.name + ".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        header=np.array(json.dumps(header.model_dump(mode="json"), sort_keys=True)),
        values=np.ascontiguousarray(values, dtype=float).ravel(),
        **arrays,
    )
    logger.info(f"saved {scenario} table {tuple(values.shape)} to {path}")
    return path


def read_header(path: Union[str, Path]) -> TableHeader:
    """Parse and validate the header of a table file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Table file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "header" not in data.files:
            raise DataError("not a policy table (no header)", path=str(path))
        raw = str(data["header"])
    try:
        header = TableHeader.model_validate(json.loads(raw))
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataError(f"unreadable table header: {e}", path=str(path)) from e
    if header.format != TABLE_FORMAT:
        raise DataError(f"unknown table format {header.format!r}", path=str(path))
    if header.version != TABLE_VERSION:
        raise DataError(f"unsupported table version {header.version}", path=str(path))
    return header


def _expected_dims(header: TableHeader, n: int) -> tuple:
    T = header.params["T"]
    if header.scenario == "s1":
        return (T + 1, header.params["N"] + 1, 2, n)
    if header.scenario == "s2":
        return (T + 1, 2, n)
    if header.scenario == "s3":
        grid = AlphaGrid.model_validate(header.params["grid"])
        return (T, 2, n, grid.n_points)
    return (T + 1, header.params["M"] + 1, n)


def load_table(path: Union[str, Path], model: Optional[TransitionModel] = None) -> AnyTable:
    """
    Load a policy table written by save_table.

    Args:
        path: Table file
        model: Transition model, required for scenario-3 tensors

    Returns:
        PolicyTableS1, PolicyTableS2, ValueTensor or PolicyTableCpp

    Raises:
        FileNotFoundError: If the file does not exist
        DataError: If the header or any shape is inconsistent
    """
    path = Path(path)
    header = read_header(path)
    with np.load(path, allow_pickle=False) as data:
        missing = [k for k in ("values", *_EXTRAS[header.scenario]) if k not in data.files]
        if missing:
            raise DataError(f"table lacks arrays {missing}", path=str(path))
        values = data["values"]
        extras = {k: data[k] for k in _EXTRAS[header.scenario]}

    dims = tuple(header.dims)
    if values.size != int(np.prod(dims)):
        raise DataError(
            f"header declares {dims} but the file holds {values.size} values", path=str(path)
        )
    n = dims[-2] if header.scenario == "s3" else dims[-1]
    try:
        expected = _expected_dims(header, n)
    except (KeyError, ValidationError) as e:
        raise DataError(f"table header lacks params: {e}", path=str(path)) from e
    if dims != expected:
        raise DataError(f"dims {dims} do not match params (expected {expected})", path=str(path))
    values = values.reshape(dims)

    p = header.params
    if header.scenario == "s1":
        costs = CostSchedule.model_validate(p["costs"])
        return PolicyTableS1(g=values, T=p["T"], N=p["N"], costs=costs, **extras)
    if header.scenario == "s2":
        costs = CostSchedule.model_validate(p["costs"])
        return PolicyTableS2(h=values, T=p["T"], lam=p["lam"], costs=costs, **extras)
    if header.scenario == "cpp":
        config = CppConfig.model_validate(p["config"])
        return PolicyTableCpp(g=values, T=p["T"], M=p["M"], config=config, **extras)
    if model is None:
        raise ValueError("a scenario-3 table needs its transition model to load")
    if model.n_states != n:
        raise DataError(f"table has {n} states, model has {model.n_states}", path=str(path))
    return ValueTensor(
        V=values,
        T=p["T"],
        Vbar=p["Vbar"],
        grid=AlphaGrid.model_validate(p["grid"]),
        costs=CostSchedule.model_validate(p["costs"]),
        model=model,
        **extras,
    )
