"""
Seeded synthetic weather (and demand) series in the ingest CSV schema.

Sacramento-like summers alternate between a normal regime and a persistent
fire-weather regime (hot, dry, windy) that covers roughly a sixth of the
June to September days. Quebec-like winters carry cold-driven peak demand
with a weekday effect. Both write a continuous daily series so every season
window and the days after it are present.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, Tuple, Union

import numpy as np
import pandas as pd

from shared import constants

logger = logging.getLogger(__name__)

# (mean, standard deviation) per reading and regime
NORMAL_SUMMER: Dict[str, Tuple[float, float]] = {
    "temp_c": (31.0, 3.0),
    "rh_pct": (30.0, 6.0),
    "wind_kmh": (14.0, 5.0),
    "gust_kmh": (25.0, 7.0),
}
FIRE_WEATHER: Dict[str, Tuple[float, float]] = {
    "temp_c": (38.0, 2.0),
    "rh_pct": (10.0, 3.0),
    "wind_kmh": (35.0, 5.0),
    "gust_kmh": (60.0, 8.0),
}
OFF_SEASON: Dict[str, Tuple[float, float]] = {
    "temp_c": (16.0, 5.0),
    "rh_pct": (55.0, 12.0),
    "wind_kmh": (12.0, 5.0),
    "gust_kmh": (22.0, 7.0),
}

# P(normal -> fire), P(fire -> fire): stationary fire share 0.06 / 0.36
FIRE_ONSET = 0.06
FIRE_PERSIST = 0.70
ANOMALY_MEMORY = 0.6

WINTER_TEMP = (-10.0, 8.0)
DEMAND_BASE_MW = 30_000.0
DEMAND_PER_DEGREE_MW = -400.0
WEEKDAY_EFFECT_MW = 1_500.0
DEMAND_NOISE_MW = 500.0


def _anomalies(rng: np.random.Generator, n: int, columns: Iterable[str]) -> Dict[str, np.ndarray]:
    """Unit-variance AR(1) noise per column."""
    out = {}
    scale = np.sqrt(1.0 - ANOMALY_MEMORY**2)
    for col in columns:
        shocks = rng.standard_normal(n)
        series = np.empty(n)
        series[0] = shocks[0]
        for i in range(1, n):
            series[i] = ANOMALY_MEMORY * series[i - 1] + scale * shocks[i]
        out[col] = series
    return out


def sacramento_like(
    years: Iterable[int] = range(2011, 2021),
    seed: int = constants.DEFAULT_SEED,
) -> pd.DataFrame:
    """Daily summer-fire weather from January 1 of the first year to December 31 of the last."""
    years = sorted(years)
    dates = pd.date_range(f"{years[0]}-01-01", f"{years[-1]}-12-31", freq="D")
    rng = np.random.default_rng(seed)
    n = len(dates)
    summer = np.isin(dates.month, [6, 7, 8, 9])

    fire = np.zeros(n, dtype=bool)
    draws = rng.random(n)
    for i in range(1, n):
        if summer[i]:
            fire[i] = draws[i] < (FIRE_PERSIST if fire[i - 1] else FIRE_ONSET)

    noise = _anomalies(rng, n, NORMAL_SUMMER)
    frame = pd.DataFrame({"date": dates.strftime("%Y-%m-%d")})
    regime = np.where(fire, 2, np.where(summer, 1, 0))
    for col in NORMAL_SUMMER:
        mean, sd = np.array([OFF_SEASON[col], NORMAL_SUMMER[col], FIRE_WEATHER[col]])[regime].T
        frame[col] = mean + sd * noise[col]
    frame["rh_pct"] = frame["rh_pct"].clip(2.0, 100.0)
    frame["wind_kmh"] = frame["wind_kmh"].clip(lower=0.0)
    frame["gust_kmh"] = np.maximum(frame["gust_kmh"], frame["wind_kmh"])
    logger.info(f"generated {n} summer-fire days, {fire[summer].mean():.1%} fire weather in season")
    return frame.round(2)


def quebec_like(
    years: Iterable[int] = range(2011, 2021),
    seed: int = constants.DEFAULT_SEED,
) -> pd.DataFrame:
    """
    Daily winter weather and peak demand covering every December-to-March
    season that starts in one of the given years.
    """
    years = sorted(years)
    dates = pd.date_range(f"{years[0]}-06-01", f"{years[-1] + 1}-05-31", freq="D")
    rng = np.random.default_rng(seed)
    n = len(dates)
    # coldest in mid-January
    phase = 2 * np.pi * (dates.dayofyear.to_numpy() - 15) / 365.25
    seasonal = WINTER_TEMP[0] + 14.0 * (1 - np.cos(phase))
    noise = _anomalies(rng, n, ["temp_c"])
    temp = seasonal + WINTER_TEMP[1] * noise["temp_c"]

    wet = rng.random(n) < 0.4
    # dry days record trace amounts
    precip = np.where(wet, rng.exponential(4.0, n), rng.uniform(0.0, 0.2, n))
    weekday = (dates.dayofweek < 5).astype(float)
    demand = (
        DEMAND_BASE_MW
        + DEMAND_PER_DEGREE_MW * temp
        + WEEKDAY_EFFECT_MW * weekday
        + DEMAND_NOISE_MW * rng.standard_normal(n)
    )
    frame = pd.DataFrame({
        "date": dates.strftime("%Y-%m-%d"),
        "temp_c": temp,
        "precip_mm": precip,
        "demand_mw": demand,
    })
    logger.info(f"generated {n} winter days, demand {demand.min():.0f}..{demand.max():.0f} MW")
    return frame.round(2)


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
