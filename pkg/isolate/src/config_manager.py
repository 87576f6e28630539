"""Configuration management: the JSON run file and its typed form."""

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .core_model import EventState
from .distance import DistanceSpec
from .errors import ConfigError
from .inference import InferenceSettings, StatisticSpec
from .logger import setup_logger
from .riskset_matcher import EligibilitySpec, ExactVariable, StateRule
from .simulate import SimSpec
from .utils import (
    DEFAULT_CONFIG, MODEL_RATIO, MODEL_TOBIT, SOLVER_ASSIGN, SOLVER_FLOW,
    STR_DISTANCE, STR_ELIGIBILITY, STR_INFERENCE, STR_LEVEL, STR_LOG_DIR, STR_LOGGING,
    STR_MATCHING, STR_OUTPUT, STR_PATHS, STR_SIMULATION, STR_STATES, STR_STATISTIC,
)


_REPLACED_SECTIONS = {STR_STATES, "treated", "control"}


def merge_configs(default: Dict[str, Any], user: Dict[str, Any]) -> Dict[str, Any]:
    """
    Recursively merge user configuration with default configuration.

    The state table and the eligibility rules are taken whole from the user.

    Args:
        default: Default configuration dictionary
        user: User configuration dictionary

    Returns:
        Merged configuration dictionary
    """
    result = copy.deepcopy(default)

    for key, value in user.items():
        if (key not in _REPLACED_SECTIONS and key in result
                and isinstance(result[key], dict) and isinstance(value, dict)):
            result[key] = merge_configs(result[key], value)
        else:
            result[key] = copy.deepcopy(value)

    return result


@dataclass(frozen=True)
class RunConfig:
    """Typed view of every config section; from_dict(to_dict()) is the identity."""
    paths: Dict[str, Optional[str]]
    states: Dict[int, EventState]
    eligibility: EligibilitySpec
    distance: DistanceSpec
    solver: str
    statistic: StatisticSpec
    model: str
    outcome: str
    dose: Optional[str]
    gammas: tuple[float, ...]
    settings: InferenceSettings
    formats: tuple[str, ...] = ("csv", "json")
    simulation: SimSpec = field(default_factory=SimSpec)
    log_level: str = "INFO"
    log_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.solver not in (SOLVER_FLOW, SOLVER_ASSIGN):
            raise ConfigError(f"Unknown solver '{self.solver}'")
        if self.model not in (MODEL_TOBIT, MODEL_RATIO):
            raise ConfigError(f"Unknown effect model '{self.model}'")
        if self.model == MODEL_RATIO and not self.dose:
            raise ConfigError("The ratio model needs a dose")
        if not self.gammas or any(g < 1 for g in self.gammas):
            raise ConfigError(f"Gammas must be a nonempty list of values >= 1, got {self.gammas}")
        used = (self.eligibility.treated_predicate, self.eligibility.control_predicate)
        for rule in used:
            if isinstance(rule, StateRule) and not rule.states <= set(self.states) - {0}:
                raise ConfigError(f"Rule states {sorted(rule.states)} are not point states")

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "RunConfig":
        """
        Build the typed configuration from a (possibly partial) config dictionary.

        Args:
            data: Config sections; missing keys take their defaults.

        Returns:
            The validated configuration.
        """
        config = merge_configs(DEFAULT_CONFIG, data)
        try:
            elig = config[STR_ELIGIBILITY]
            inference = config[STR_INFERENCE]
            statistic = config[STR_STATISTIC]
            return RunConfig(
                paths=dict(config[STR_PATHS]),
                states=EventState.from_mapping(config[STR_STATES]),
                eligibility=EligibilitySpec(
                    treated_predicate=StateRule.from_dict(elig["treated"]),
                    control_predicate=StateRule.from_dict(elig["control"]),
                    exact_variables=tuple(
                        ExactVariable.from_config(v) for v in elig["exact_variables"]
                    ),
                    set_size=int(elig["set_size"]),
                    k_range=tuple(int(k) for k in elig["k_range"]),
                ),
                distance=DistanceSpec(
                    covariate_names=tuple(config[STR_DISTANCE]["covariates"]),
                    penalty_for_unresolvable=bool(config[STR_DISTANCE]["penalty_for_unresolvable"]),
                ),
                solver=config[STR_MATCHING]["solver"],
                statistic=StatisticSpec(
                    kind=statistic["kind"],
                    huber_cutoff=float(statistic["huber_cutoff"]),
                    scale=None if statistic["scale"] is None else float(statistic["scale"]),
                ),
                model=inference["model"],
                outcome=inference["outcome"],
                dose=inference["dose"],
                gammas=tuple(float(g) for g in inference["gammas"]),
                settings=InferenceSettings(
                    alpha=float(inference["alpha"]),
                    direction=inference["direction"],
                    two_sided=bool(inference["two_sided"]),
                    null_value=float(inference["null_value"]),
                    bracket=tuple(inference["bracket"]),
                    tolerance=float(inference["tolerance"]),
                    max_bracket_expansions=int(inference["max_bracket_expansions"]),
                ),
                formats=tuple(config[STR_OUTPUT]["formats"]),
                simulation=SimSpec.from_dict(config[STR_SIMULATION]),
                log_level=config[STR_LOGGING][STR_LEVEL],
                log_dir=config[STR_LOGGING][STR_LOG_DIR],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e!r}") from e

    def to_dict(self) -> Dict[str, Any]:
        rules = (self.eligibility.treated_predicate, self.eligibility.control_predicate)
        if not all(isinstance(rule, StateRule) for rule in rules):
            raise ConfigError("Only StateRule eligibility can be written to a config file")
        return {
            STR_LOGGING: {STR_LEVEL: self.log_level, STR_LOG_DIR: self.log_dir},
            STR_PATHS: dict(self.paths),
            STR_STATES: {str(code): state.display_name for code, state in sorted(self.states.items())},
            STR_ELIGIBILITY: {
                "treated": rules[0].to_dict(),
                "control": rules[1].to_dict(),
                "exact_variables": [v.to_dict() for v in self.eligibility.exact_variables],
                "set_size": self.eligibility.set_size,
                "k_range": list(self.eligibility.k_range),
            },
            STR_DISTANCE: {
                "covariates": list(self.distance.covariate_names),
                "penalty_for_unresolvable": self.distance.penalty_for_unresolvable,
            },
            STR_MATCHING: {"solver": self.solver},
            STR_STATISTIC: {
                "kind": self.statistic.kind,
                "huber_cutoff": self.statistic.huber_cutoff,
                "scale": self.statistic.scale,
            },
            STR_INFERENCE: {
                "model": self.model,
                "outcome": self.outcome,
                "dose": self.dose,
                "gammas": list(self.gammas),
                "alpha": self.settings.alpha,
                "direction": self.settings.direction,
                "two_sided": self.settings.two_sided,
                "null_value": self.settings.null_value,
                "bracket": list(self.settings.bracket),
                "tolerance": self.settings.tolerance,
                "max_bracket_expansions": self.settings.max_bracket_expansions,
            },
            STR_OUTPUT: {"formats": list(self.formats)},
            STR_SIMULATION: self.simulation.to_dict(),
        }


class ConfigManager:
    """Manages run configuration loading and saving."""

    def __init__(self, config_file: str = "config.json") -> None:
        """
        Initialize the configuration manager.

        Args:
            config_file: Path to the configuration file.
        """
        self.logger = setup_logger(__name__)
        self.config_file = config_file
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """
        Load configuration from JSON file.

        Returns:
            Dict containing configuration settings.
        """
        if not os.path.exists(self.config_file):
            self.logger.warning(f"Configuration file {self.config_file} not found, using default configuration")
            return copy.deepcopy(DEFAULT_CONFIG)

        self.logger.info(f"Loading configuration from {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding="utf-8") as f:
                user_config = json.load(f)
        except json.JSONDecodeError as e:
            self.logger.error(f"Error decoding {self.config_file}")
            raise ConfigError(f"{self.config_file} is not valid JSON: {e}") from e

        if not isinstance(user_config, dict):
            raise ConfigError(f"{self.config_file} must hold a JSON object")
        return merge_configs(DEFAULT_CONFIG, user_config)

    def save_config(self, config: Dict[str, Any]) -> None:
        """
        Save configuration to JSON file.

        Args:
            config: Configuration dictionary to save
        """
        with open(self.config_file, 'w', encoding="utf-8") as f:
            json.dump(config, f, indent=4)
        self.logger.info("Configuration saved successfully")

    def get_config(self) -> Dict[str, Any]:
        """
        Get the current configuration.

        Returns:
            Current configuration dictionary
        """
        return self.config

    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)
