"""
Shared constants for OpenPSPS.

Every value can be overridden through the environment (or a .env file in the
working directory) using the variable named next to it.
"""

import os

from dotenv import load_dotenv

load_dotenv(override=False)


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, str(default)))


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, repr(default)))


# =============================================================================
# Runtime
# =============================================================================

DEFAULT_SEED = _env_int("OPENPSPS_SEED", 7)
DEFAULT_WORKERS = _env_int("OPENPSPS_WORKERS", 4)
LOG_LEVEL = os.getenv("OPENPSPS_LOG_LEVEL", "WARNING")
ARTIFACT_DIR = os.getenv("OPENPSPS_ARTIFACT_DIR", "artifacts")

# Exhaustive oracles refuse instances above these sizes
ORACLE_MAX_T = _env_int("OPENPSPS_ORACLE_MAX_T", 12)
ORACLE_MAX_STATES = _env_int("OPENPSPS_ORACLE_MAX_STATES", 5)
# Largest Pareto frontier the exact allocation code will carry
FRONTIER_MAX_POINTS = _env_int("OPENPSPS_FRONTIER_MAX_POINTS", 200_000)

ROW_TOL = _env_float("OPENPSPS_ROW_TOL", 1e-12)
STATIONARY_TOL = _env_float("OPENPSPS_STATIONARY_TOL", 1e-12)

# =============================================================================
# Public safety power shutoffs (summer season, June to September)
# =============================================================================

PSPS_HORIZON = 122
PSPS_BUDGET = 10
PSPS_WILDFIRE_COST = 1e9
PSPS_REVENUE_LOSS = 2e5
PSPS_DEENERGIZE_COST = 2e6
PSPS_REENERGIZE_COST = 2e6
PSPS_ADJUSTMENT = 40.5e6
PSPS_PENALTY = 1e9
PSPS_BINS = 8
PSPS_SEASON = ("06-01", "09-30")

# (threshold, direction) per phenomenon
PSPS_RISK_THRESHOLDS = {
    "temp": (30.0, "at_least"),
    "rh": (20.0, "at_most"),
    "wind": (25.0, "at_least"),
    "gust": (40.0, "at_least"),
}

# =============================================================================
# Critical peak pricing (winter season, December to March)
# =============================================================================

CPP_HORIZON = 121
CPP_BUDGET = 25
CPP_CURTAILMENT_MW = 100.0
CPP_REVENUE_LOSS = 15_000.0
CPP_QUAD_B = 0.00245
CPP_QUAD_C = 45.5
CPP_QUAD_D = 8e5
CPP_BINS = {"temp": 12, "precip": 7}
CPP_SEASON = ("12-01", "03-31")
