"""Utility module containing constants and common functions for the application."""

import os
from pathlib import Path
from typing import Optional

# Base directories
BASE_DIR: Path       = Path(__file__).parent.parent
DEFAULT_CONFIG_FILE  = os.path.join(BASE_DIR, "config.json")

# Environment
ENV_THREADS = "ISOLATE_THREADS"

# Exit codes
class Codes:
    """Constants for process exit codes returned by the commands."""
    SUCCESS         = 0
    GENERAL_ERROR   = 1
    SCHEMA_ERROR    = 2
    INFEASIBLE      = 3
    BRACKET_FAILURE = 4

# Logging constants
LOG_FORMAT      = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y%m%d_%H%M%S"

# File formats
SCHEMA_VERSION   = 1
SCHEMA_HEADER    = f"#isolate-schema={SCHEMA_VERSION}"
FLOAT_FORMAT     = "%.17g"
FIXED_PREFIX     = "fixed."
TV_PREFIX        = "tv."
OUTCOME_PREFIX   = "outcome."
STRATUM_SEP      = "|"
RECORD_SUBJECT   = "subject"
RECORD_EVENT     = "event"
ARM_TREATED      = "treated"
ARM_CONTROL      = "control"
POOLED_K         = "all"

# Numerics
DISTANCE_SCALE            = 10**6
UNRESOLVABLE_PENALTY      = 1000.0
SUBSET_ENUMERATION_LIMIT  = 256
BRUTE_FORCE_LIMIT         = 10**7
EXACT_MAX_SETS            = 14
EXACT_MAX_ATOMS           = 10**6
EXACT_GRID                = 10**9

# Reasons logged for unmatched treated units
REASON_INSUFFICIENT = "insufficient controls"

# Config section keys
STR_LOGGING     = "logging"
STR_LEVEL       = "level"
STR_LOG_DIR     = "log_dir"
STR_STATES      = "states"
STR_ELIGIBILITY = "eligibility"
STR_DISTANCE    = "distance"
STR_MATCHING    = "matching"
STR_STATISTIC   = "statistic"
STR_INFERENCE   = "inference"
STR_OUTPUT      = "output"
STR_SIMULATION  = "simulation"
STR_PATHS       = "paths"

# Statistic kinds, directions, models
STAT_MEAN      = "mean"
STAT_HUBER     = "huber"
DIR_GREATER    = "greater"
DIR_LESS       = "less"
MODEL_TOBIT    = "tobit"
MODEL_RATIO    = "ratio"
SOLVER_FLOW    = "flow"
SOLVER_ASSIGN  = "assignment"

# Default settings: the case-study schema (states 1/2 single births by sex, 3 twins)
DEFAULT_CONFIG = {
    STR_LOGGING: {
        STR_LEVEL: "INFO",
        STR_LOG_DIR: None
    },
    STR_PATHS: {
        "cohort": None,
        "design": None,
        "output_prefix": None
    },
    STR_STATES: {
        "0": "interval",
        "1": "single_boy",
        "2": "single_girl",
        "3": "twins"
    },
    STR_ELIGIBILITY: {
        "treated": {"states": [3], "history_all_of": [], "history_none_of": [3]},
        "control": {"states": [1, 2], "history_all_of": [[1], [2]], "history_none_of": [3]},
        "exact_variables": [
            {"name": "age_category", "source": "event_time_2", "breaks": [20, 25, 30]},
            {"name": "race"},
            {"name": "region"}
        ],
        "set_size": 6,
        "k_range": [2, 3, 4]
    },
    STR_DISTANCE: {
        "covariates": ["event_time_{j}", "education_{j}"],
        "penalty_for_unresolvable": False
    },
    STR_MATCHING: {
        "solver": SOLVER_FLOW
    },
    STR_STATISTIC: {
        "kind": STAT_MEAN,
        "huber_cutoff": 2.0,
        "scale": None
    },
    STR_INFERENCE: {
        "model": MODEL_TOBIT,
        "outcome": "work_fraction",
        "dose": "n_children",
        "gammas": [1.0, 1.1, 1.2, 1.25],
        "alpha": 0.05,
        "direction": DIR_LESS,
        "two_sided": False,
        "null_value": 0.0,
        "bracket": [-1.0, 1.0],
        "tolerance": 1e-6,
        "max_bracket_expansions": 10
    },
    STR_OUTPUT: {
        "formats": ["csv", "json"]
    },
    STR_SIMULATION: {}
}


def resolve_threads(value: Optional[str] = None) -> int:
    """
    Number of worker threads, from ISOLATE_THREADS or the hardware.

    Args:
        value: Explicit override, otherwise the environment is read.

    Returns:
        A positive thread count.
    """
    raw = value if value is not None else os.environ.get(ENV_THREADS)
    if raw:
        try:
            threads = int(raw)
            if threads > 0:
                return threads
        except ValueError:
            pass
    return os.cpu_count() or 1
