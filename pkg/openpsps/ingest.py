"""
Weather and demand CSV ingestion.

CSV files carry one row per day with an ISO date and unit-suffixed reading
columns, e.g. ``date,temp_c,rh_pct,wind_kmh,gust_kmh[,precip_mm][,demand_mw]``.
Loading validates the header against a FrameSchema, parses every cell with
row-numbered errors, keeps the rows of each season window (plus the two days
that follow it, which price the last decisions) and labels them by season.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from sklearn.linear_model import LinearRegression
from sklearn.metrics import mean_squared_error
from sklearn.model_selection import KFold, LeaveOneOut
from sklearn.preprocessing import KBinsDiscretizer

from shared import constants

from .errors import DataError
from .markov_model import day_type_labels, discretize_frame
from .models import DemandModel, Phenomenon, StateSpace

logger = logging.getLogger(__name__)

DEMAND_COLUMN = "demand_mw"
TRAILING_DAYS = 2

# pandas frame with a datetime "date" column, reading columns, optional
# demand_mw, and the "season" / "in_window" labels added by season_window
WeatherFrame = pd.DataFrame


class FrameSchema(BaseModel):
    """Reading columns expected in a CSV, named <phenomenon>_<unit>."""
    phenomena: List[Phenomenon] = Field(..., min_length=1)
    demand: bool = Field(default=False, description="Whether a demand_mw column is required")

    @classmethod
    def psps(cls) -> "FrameSchema":
        return cls(phenomena=[
            Phenomenon(name="temp", unit="c"),
            Phenomenon(name="rh", unit="pct"),
            Phenomenon(name="wind", unit="kmh"),
            Phenomenon(name="gust", unit="kmh"),
        ])

    @classmethod
    def cpp(cls) -> "FrameSchema":
        return cls(
            phenomena=[Phenomenon(name="temp", unit="c"), Phenomenon(name="precip", unit="mm")],
            demand=True,
        )

    @classmethod
    def from_space(cls, space: StateSpace, demand: bool = False) -> "FrameSchema":
        return cls(phenomena=space.phenomena, demand=demand)

    @property
    def columns(self) -> List[str]:
        cols = [p.column for p in self.phenomena]
        return cols + [DEMAND_COLUMN] if self.demand else cols


# =============================================================================
# Loading
# =============================================================================

def _check_header(header: Sequence[str], schema: FrameSchema, path: str) -> None:
    if "date" not in header:
        raise DataError("missing column 'date'", path=path)
    for phenomenon in schema.phenomena:
        if phenomenon.column in header:
            continue
        other = [c for c in header if c.startswith(f"{phenomenon.name}_")]
        if other:
            raise DataError(
                f"column {other[0]!r} has the wrong unit; expected {phenomenon.column!r}",
                path=path,
            )
        raise DataError(f"missing column {phenomenon.column!r}", path=path)
    if schema.demand and DEMAND_COLUMN not in header:
        raise DataError(f"missing column {DEMAND_COLUMN!r}", path=path)


def _first_bad_row(mask: pd.Series) -> int:
    # header is line 1 of the file
    return int(np.flatnonzero(mask.to_numpy())[0]) + 2


def load_csv(
    path: Union[str, Path],
    schema: FrameSchema,
    season: Optional[Tuple[str, str]] = None,
    carry_forward: bool = False,
) -> WeatherFrame:
    """
    Load and validate a daily CSV.

    Args:
        path: CSV file
        schema: Expected reading columns and units
        season: Optional ("MM-DD", "MM-DD") window; rows outside the window
            and its two following days are dropped
        carry_forward: Fill missing days inside a season with the previous day

    Returns:
        WeatherFrame

    Raises:
        FileNotFoundError: If the file does not exist
        DataError: On a missing column, wrong unit, unparsable value,
            duplicate or unordered date, or a gap inside a season
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"No such file: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    _check_header(list(raw.columns), schema, str(path))

    frame = pd.DataFrame({"date": pd.to_datetime(raw["date"], format="%Y-%m-%d", errors="coerce")})
    if frame["date"].isna().any():
        row = _first_bad_row(frame["date"].isna())
        raise DataError(f"unparsable date {raw['date'].iloc[row - 2]!r}", path=str(path), row=row)
    for col in schema.columns:
        values = pd.to_numeric(raw[col].str.strip(), errors="coerce")
        if values.isna().any():
            row = _first_bad_row(values.isna())
            cell = raw[col].iloc[row - 2]
            raise DataError(f"unparsable value {cell!r} in {col!r}", path=str(path), row=row)
        frame[col] = values.astype(float)

    if frame["date"].duplicated().any():
        row = _first_bad_row(frame["date"].duplicated())
        raise DataError(f"duplicate date {raw['date'].iloc[row - 2]}", path=str(path), row=row)
    backwards = frame["date"].diff() <= pd.Timedelta(0)
    if backwards.any():
        row = _first_bad_row(backwards)
        raise DataError("dates must be strictly increasing", path=str(path), row=row)

    logger.info(f"loaded {len(frame)} rows from {path}")
    if season is not None:
        frame = season_window(frame, season, carry_forward=carry_forward, path=str(path))
    return frame


def _bounds(year: int, season: Tuple[str, str]) -> Tuple[pd.Timestamp, pd.Timestamp]:
    start, end = season
    crosses = end < start
    return pd.Timestamp(f"{year}-{start}"), pd.Timestamp(f"{year + 1 if crosses else year}-{end}")


def season_window(
    frame: WeatherFrame,
    season: Tuple[str, str],
    carry_forward: bool = False,
    path: Optional[str] = None,
) -> WeatherFrame:
    """
    Keep the rows of each season window plus the two days that follow it.

    A window crossing New Year is labelled by the year it starts in. Every
    season that has at least one row must cover its window without gaps; a
    gap is reported at the file row (header is row 1) of the first record
    after it. A season cut short by the end of the data is kept with a
    warning.
    """
    dates = frame["date"]
    stamps = dates.to_numpy()
    last = dates.max()
    pieces = []
    for year in range(dates.dt.year.min() - 1, dates.dt.year.max() + 1):
        start, end = _bounds(year, season)
        inside = (dates >= start) & (dates <= end)
        if not inside.any():
            continue
        stop = end + pd.Timedelta(days=TRAILING_DAYS)
        if last < stop:
            logger.warning(
                f"season {year} is truncated: data ends {last.date()}, window needs {stop.date()}"
            )
        piece = frame[(dates >= start) & (dates <= stop)].set_index("date")
        expected = pd.date_range(start, min(stop, last), freq="D")
        missing = expected.difference(piece.index)
        missing = missing[missing <= end]
        if len(missing):
            if not carry_forward:
                after = int(np.searchsorted(stamps, missing[0].to_datetime64()))
                raise DataError(
                    f"season {year} is missing {len(missing)} day(s), first {missing[0].date()}",
                    path=path,
                    row=after + 2,
                )
            if missing[0] == start:
                raise DataError(f"season {year} has no first day to carry forward", path=path)
            logger.warning(f"season {year}: carrying forward {len(missing)} missing day(s)")
        piece = piece.reindex(expected)
        if carry_forward:
            piece = piece.ffill()
        piece = piece.dropna().rename_axis("date").reset_index()
        piece["season"] = year
        piece["in_window"] = piece["date"] <= end
        pieces.append(piece)
    if not pieces:
        raise DataError(f"no rows inside the season window {season[0]}..{season[1]}", path=path)
    return pd.concat(pieces, ignore_index=True)


def split_years(
    frame: WeatherFrame,
    train_years: Iterable[int],
    test_years: Iterable[int],
) -> Tuple[WeatherFrame, WeatherFrame]:
    """Split a season-labelled frame into train and test seasons."""
    train_years, test_years = set(train_years), set(test_years)
    if train_years & test_years:
        raise ValueError(f"seasons in both train and test: {sorted(train_years & test_years)}")
    available = set(frame["season"].unique())
    absent = sorted((train_years | test_years) - available)
    if absent:
        raise DataError(f"seasons not present in the data: {absent}")
    train = frame[frame["season"].isin(train_years)].reset_index(drop=True)
    test = frame[frame["season"].isin(test_years)].reset_index(drop=True)
    return train, test


# =============================================================================
# Discretization and demand fitting
# =============================================================================

def fit_bins(
    frame: WeatherFrame,
    counts: Dict[str, int],
    schema: FrameSchema,
    day_types: Sequence[str] = (),
) -> StateSpace:
    """
    Quantile bin edges per phenomenon, fitted on the given rows.

    Args:
        frame: Training rows
        counts: Number of bins per phenomenon name (at least 2)
        schema: Phenomena and units
        day_types: Optional day-type factor labels, e.g. ("weekday", "weekend")

    Raises:
        DataError: If a column has fewer distinct values than requested bins
    """
    rows = frame[frame["in_window"]] if "in_window" in frame else frame
    phenomena = []
    for phenomenon in schema.phenomena:
        n_bins = counts.get(phenomenon.name)
        if n_bins is None:
            raise ValueError(f"no bin count given for {phenomenon.name!r}")
        if n_bins < 2:
            raise ValueError(f"{phenomenon.name!r} needs at least 2 bins, got {n_bins}")
        values = rows[phenomenon.column].to_numpy(dtype=float)
        distinct = np.unique(values).size
        if distinct < n_bins:
            raise DataError(
                f"{phenomenon.column} has {distinct} distinct value(s), fewer than {n_bins} bins"
            )
        binner = KBinsDiscretizer(n_bins=n_bins, encode="ordinal", strategy="quantile")
        binner.fit(values.reshape(-1, 1))
        edges = [float(e) for e in binner.bin_edges_[0][1:-1]]
        if len(edges) != n_bins - 1:
            raise DataError(f"{phenomenon.column} has too many ties for {n_bins} quantile bins")
        phenomena.append(Phenomenon(name=phenomenon.name, unit=phenomenon.unit, edges=edges))
    space = StateSpace(phenomena=phenomena, day_types=list(day_types))
    logger.info(f"fitted {space.sizes} bins, {space.cardinality} joint states")
    return space


def state_paths(frame: WeatherFrame, space: StateSpace) -> Dict[int, np.ndarray]:
    """State sequence of each season, window plus its following days."""
    return {
        int(year): discretize_frame(space, group.reset_index(drop=True))
        for year, group in frame.groupby("season", sort=True)
    }


def demand_by_season(frame: WeatherFrame) -> Dict[int, np.ndarray]:
    return {
        int(year): group[DEMAND_COLUMN].to_numpy(dtype=float)
        for year, group in frame.groupby("season", sort=True)
    }


def _design(frame: WeatherFrame, space: StateSpace) -> Tuple[np.ndarray, List[str], bool]:
    states = discretize_frame(space, frame)
    reps = space.representative_matrix()[states]
    names = [p.name for p in space.phenomena]
    weekend = "weekend" in space.day_types
    if weekend:
        flag = (day_type_labels(frame["date"]) == "weekend").to_numpy(dtype=float)
        reps = np.column_stack([reps, flag])
    return reps, names, weekend


def fit_demand(frame: WeatherFrame, space: StateSpace) -> DemandModel:
    """
    Least-squares peak demand over bin representatives and a weekend flag.

    Raises:
        DataError: If demand is missing, there are too few rows, or the
            design is rank deficient (too many bins for the data)
    """
    if DEMAND_COLUMN not in frame:
        raise DataError(f"fit_demand needs a {DEMAND_COLUMN!r} column")
    X, names, weekend = _design(frame, space)
    y = frame[DEMAND_COLUMN].to_numpy(dtype=float)
    if len(y) <= X.shape[1]:
        raise DataError(f"{len(y)} rows cannot fit {X.shape[1]} demand features")
    augmented = np.column_stack([np.ones(len(y)), X])
    if np.linalg.matrix_rank(augmented) < augmented.shape[1]:
        raise DataError("demand design is rank deficient; use fewer bins")

    regression = LinearRegression().fit(X, y)
    rmse = float(np.sqrt(mean_squared_error(y, regression.predict(X))))
    coefficients = [float(c) for c in regression.coef_]
    logger.info(f"demand regression on {len(y)} rows, in-sample RMSE {rmse:.1f} MW")
    return DemandModel(
        feature_names=names,
        coefficients=coefficients[: len(names)],
        weekend_coefficient=coefficients[-1] if weekend else 0.0,
        intercept=float(regression.intercept_),
        rmse=rmse,
        n_rows=len(y),
    )


def predict_rows(model: DemandModel, frame: WeatherFrame, space: StateSpace) -> np.ndarray:
    """Demand estimate for each row of a frame."""
    X, names, weekend = _design(frame, space)
    predicted = model.intercept + X[:, : len(names)] @ np.asarray(model.coefficients)
    if weekend:
        predicted = predicted + model.weekend_coefficient * X[:, -1]
    return predicted


def select_bin_count(
    frame: WeatherFrame,
    schema: FrameSchema,
    candidates: Sequence[int],
    folds: int = 10,
    leave_one_out: bool = False,
    seed: int = constants.DEFAULT_SEED,
    day_types: Sequence[str] = (),
) -> Tuple[int, Dict[int, float]]:
    """
    Cross-validated bin count for the demand regression.

    Every phenomenon gets the candidate count; bins and regression are refit
    on each training fold and scored by held-out mean squared error.
    Candidates that cannot be fitted on some fold are skipped.

    Returns:
        (best count, mean held-out MSE per scored candidate)

    Raises:
        DataError: If no candidate can be scored
    """
    rows = frame[frame["in_window"]] if "in_window" in frame else frame
    rows = rows.reset_index(drop=True)
    splitter = LeaveOneOut() if leave_one_out else KFold(folds, shuffle=True, random_state=seed)
    splits = list(splitter.split(rows))
    scores: Dict[int, float] = {}
    for count in candidates:
        counts = {p.name: count for p in schema.phenomena}
        errors = []
        try:
            for train_idx, test_idx in splits:
                train, held = rows.iloc[train_idx], rows.iloc[test_idx]
                space = fit_bins(train, counts, schema, day_types)
                model = fit_demand(train, space)
                predicted = predict_rows(model, held, space)
                errors.append(mean_squared_error(held[DEMAND_COLUMN], predicted))
        except DataError as exc:
            logger.debug(f"skipping {count} bins: {exc}")
            continue
        scores[count] = float(np.mean(errors))
        logger.info(f"{count} bins: held-out MSE {scores[count]:.1f}")
    if not scores:
        raise DataError(f"no candidate bin count in {list(candidates)} could be fitted")
    best = min(scores, key=lambda c: (scores[c], c))
    return best, scores
