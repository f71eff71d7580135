"""
OpenPSPS - Day-ahead shutoff and peak-pricing scheduling

Backward-induction policies for public safety power shutoffs under a
Markov weather model, plus critical peak pricing with an event budget.
"""

__version__ = "1.0.0"

from .errors import (
    PSPSError,
    DataError,
    NotErgodicError,
    InfeasibleError,
    ScaleGuardError,
    DegenerateParameterError,
    BudgetViolationError,
    ConfigError,
)
from .models import (
    Phenomenon,
    StateSpace,
    RiskRule,
    CostSchedule,
    QuadCost,
    CppParams,
    CppConfig,
    AlphaGrid,
    DemandModel,
    RunConfig,
    ModelArtifact,
)
from .markov_model import (
    TransitionModel,
    estimate_transitions,
    stationary,
    sample_path,
)
from .risk_cost import indicator_vector, wrp_vector, stage_cost
from .scenario1 import PolicyTableS1, build_s1, decide_s1, threshold_s1
from .scenario2 import PolicyTableS2, build_s2, decide_s2, threshold_s2
from .scenario3 import ValueTensor, build_value, solve_s3, extract_policy, rollout
from .cpp_sched import PolicyTableCpp, build_cpp, decide_cpp, threshold_cpp
from .baselines_sim import EpisodeResult, ExperimentResult, run_policy, monte_carlo
from .tables import save_table, load_table

__all__ = [
    # Errors
    "PSPSError",
    "DataError",
    "NotErgodicError",
    "InfeasibleError",
    "ScaleGuardError",
    "DegenerateParameterError",
    "BudgetViolationError",
    "ConfigError",
    # Models
    "Phenomenon",
    "StateSpace",
    "RiskRule",
    "CostSchedule",
    "QuadCost",
    "CppParams",
    "CppConfig",
    "AlphaGrid",
    "DemandModel",
    "RunConfig",
    "ModelArtifact",
    "TransitionModel",
    "PolicyTableS1",
    "PolicyTableS2",
    "ValueTensor",
    "PolicyTableCpp",
    "EpisodeResult",
    "ExperimentResult",
    # Functions
    "estimate_transitions",
    "stationary",
    "sample_path",
    "indicator_vector",
    "wrp_vector",
    "stage_cost",
    "build_s1",
    "decide_s1",
    "threshold_s1",
    "build_s2",
    "decide_s2",
    "threshold_s2",
    "build_value",
    "solve_s3",
    "extract_policy",
    "rollout",
    "build_cpp",
    "decide_cpp",
    "threshold_cpp",
    "run_policy",
    "monte_carlo",
    "save_table",
    "load_table",
]
