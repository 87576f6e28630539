import json

import pytest
from unittest import mock

from src.core_model import history_view
from src.config_manager import ConfigManager, RunConfig, merge_configs
from src.errors import ConfigError, SchemaError
from src.utils import DEFAULT_CONFIG, DEFAULT_CONFIG_FILE, MODEL_TOBIT, SOLVER_FLOW
from tests.conftest import make_subject


@pytest.fixture
def config_path(tmp_path):
    return tmp_path / "config.json"


class TestMergeConfigs:
    def test_nested_merge(self) -> None:
        """Test that user values override defaults key by key."""
        merged = merge_configs({"a": {"b": 1, "c": 2}, "d": 3}, {"a": {"b": 5}})
        assert merged == {"a": {"b": 5, "c": 2}, "d": 3}

    def test_states_replaced_whole(self) -> None:
        """Test that a user state table replaces the default one."""
        states = {"0": "interval", "1": "event"}
        assert merge_configs(DEFAULT_CONFIG, {"states": states})["states"] == states

    def test_rules_replaced_whole(self) -> None:
        """Test that an eligibility rule is not merged with the default rule."""
        rule = {"states": [2]}
        merged = merge_configs(DEFAULT_CONFIG, {"eligibility": {"treated": rule}})
        assert merged["eligibility"]["treated"] == rule
        assert merged["eligibility"]["set_size"] == DEFAULT_CONFIG["eligibility"]["set_size"]

    def test_defaults_untouched(self) -> None:
        """Test that merging does not modify the defaults."""
        merge_configs(DEFAULT_CONFIG, {"inference": {"gammas": [2.0]}})
        assert DEFAULT_CONFIG["inference"]["gammas"] == [1.0, 1.1, 1.2, 1.25]


class TestRunConfig:
    def test_defaults(self) -> None:
        """Test the typed default configuration."""
        config = RunConfig.from_dict({})
        assert config.solver == SOLVER_FLOW
        assert config.model == MODEL_TOBIT
        assert config.eligibility.set_size == 6
        assert config.eligibility.treated_predicate.states == {3}
        assert config.distance.names_for(2) == [
            "event_time_1", "event_time_2", "education_1", "education_2"
        ]

    def test_default_age_category_at_second_event(self) -> None:
        """Test that the default age category bins the age at the second event, whatever k is."""
        age = RunConfig.from_dict({}).eligibility.exact_variables[0]
        assert age.name == "age_category"
        subject = make_subject("S", [(19.0, 1), (23.0, 2), (31.0, 3)])
        assert age.value(history_view(subject, 2)) == "[20,25)"
        assert age.value(history_view(subject, 3)) == "[20,25)"

    def test_round_trip(self) -> None:
        """Test from_dict(to_dict()) on the shipped configuration."""
        with open(DEFAULT_CONFIG_FILE, encoding="utf-8") as f:
            config = RunConfig.from_dict(json.load(f))
        assert RunConfig.from_dict(config.to_dict()) == config
        assert config.simulation.tau == 0.08

    @pytest.mark.parametrize("changes", [
        {"inference": {"gammas": [0.5]}},
        {"inference": {"gammas": []}},
        {"matching": {"solver": "greedy"}},
        {"inference": {"model": "ratio", "dose": None}},
        {"inference": {"model": "probit"}},
        {"eligibility": {"treated": {"states": [5]}}},
        {"eligibility": {"set_size": "six"}},
        {"simulation": {"n_subject": 10}},
        {"statistic": {"kind": "median"}},
    ])
    def test_invalid(self, changes: dict) -> None:
        """Test that every invalid section surfaces as a ConfigError."""
        with pytest.raises(ConfigError):
            RunConfig.from_dict(changes)

    def test_state_codes_with_gap(self) -> None:
        """Test a state table whose codes are not dense."""
        with pytest.raises(SchemaError):
            RunConfig.from_dict({"states": {"0": "interval", "2": "b"}})


class TestConfigManager:
    def test_missing_file_uses_defaults(self, config_path, mock_logger) -> None:
        """Test loading when the file does not exist."""
        with mock.patch("src.config_manager.setup_logger", return_value=mock_logger):
            manager = ConfigManager(str(config_path))
        assert manager.get_config() == DEFAULT_CONFIG
        assert manager.get_config() is not DEFAULT_CONFIG
        mock_logger.warning.assert_called_once()

    def test_partial_file_merged(self, config_path, mock_logger) -> None:
        """Test that a partial user file is merged over the defaults."""
        config_path.write_text(json.dumps({"inference": {"gammas": [1.0, 2.0]}}), encoding="utf-8")
        with mock.patch("src.config_manager.setup_logger", return_value=mock_logger):
            config = ConfigManager(str(config_path)).run_config()
        assert config.gammas == (1.0, 2.0)
        assert config.outcome == "work_fraction"

    @pytest.mark.parametrize("text", ["{", "[1, 2]"])
    def test_invalid_file(self, config_path, mock_logger, text: str) -> None:
        """Test malformed JSON and a non-object document."""
        config_path.write_text(text, encoding="utf-8")
        with mock.patch("src.config_manager.setup_logger", return_value=mock_logger):
            with pytest.raises(ConfigError):
                ConfigManager(str(config_path))

    def test_save_and_reload(self, config_path, mock_logger) -> None:
        """Test that a saved configuration loads back."""
        with mock.patch("src.config_manager.setup_logger", return_value=mock_logger):
            manager = ConfigManager(str(config_path))
            config = manager.get_config()
            config["inference"]["alpha"] = 0.01
            manager.save_config(config)
            assert ConfigManager(str(config_path)).run_config().settings.alpha == 0.01
