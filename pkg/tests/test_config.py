"""
Unit tests for the configuration management system.
"""

import json
from argparse import Namespace
from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

import vpo_cli.config as config_module
from vpo_cli.config import (
    FIXTURE_DIR,
    ConfigManager,
    RunConfig,
    SolverDefaults,
    VpoConfig,
    get_config_manager,
    reload_config,
)


@pytest.fixture
def no_config(tmp_path, monkeypatch):
    """Run from an empty directory with no VPO_CONFIG_PATH."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("VPO_CONFIG_PATH", raising=False)
    return tmp_path


def args_for(command="solve", feeder="three_node", **extra):
    values = {
        "command": command,
        "feeder": feeder,
        "profile": None,
        "out": "results",
    }
    values.update(extra)
    return Namespace(**values)


class TestConfigManager:
    """Test suite for ConfigManager."""

    def test_init_without_config_file(self, no_config):
        """Test initialization without a configuration file."""
        manager = ConfigManager()
        assert manager.config_path is None
        assert isinstance(manager.config, VpoConfig)
        assert manager.config.feeders == {}
        assert manager.solver == SolverDefaults()

    def test_builtin_aliases(self, no_config):
        """Test that the bundled feeders resolve without configuration."""
        manager = ConfigManager()
        assert manager.resolve_feeder("IEEE13") == FIXTURE_DIR / "ieee13.json"
        assert manager.default_profile("ieee13") == FIXTURE_DIR / "ieee13_peak.csv"
        assert manager.default_profile("three_node") is None
        aliases = [f["alias"] for f in manager.list_feeders()]
        assert aliases == sorted(aliases)
        assert {"ieee13", "ieee37", "single_branch", "three_node"} <= set(aliases)

    def test_unknown_alias_is_a_path(self, no_config):
        """Test that unknown aliases are returned as paths."""
        manager = ConfigManager()
        assert manager.resolve_feeder("my/feeder.json") == Path("my/feeder.json")
        assert manager.default_profile("my/feeder.json") is None

    def test_load_yaml_config(self, no_config):
        """Test loading configuration from YAML file."""
        config_data = {
            "feeders": {
                "Lab": {
                    "path": "lab.json",
                    "profile": "lab.csv",
                    "description": "Lab feeder",
                }
            },
            "solver": {"gap": 0.001, "quad_mode": "pwl"},
            "experiments": {"alphas": [0.01, 0.1], "scale_caps": [1, 2]},
        }
        path = no_config / "custom.yaml"
        path.write_text(yaml.dump(config_data))

        manager = ConfigManager(config_path=str(path))

        assert manager.resolve_feeder("lab") == Path("lab.json")
        assert manager.default_profile("LAB") == Path("lab.csv")
        assert manager.solver.gap == 0.001
        assert manager.solver.quad_mode == "pwl"
        assert manager.solver.segments == 16
        assert manager.experiments.alphas == [0.01, 0.1]
        assert manager.experiments.scale_caps == [1, 2]

    def test_load_json_config(self, no_config):
        """Test loading configuration from JSON file."""
        path = no_config / "custom.json"
        path.write_text(json.dumps({"solver": {"max_iters": 5}}))
        manager = ConfigManager(config_path=str(path))
        assert manager.solver.max_iters == 5

    def test_config_overrides_builtin_alias(self, no_config):
        """Test that a configured alias replaces a bundled one."""
        path = no_config / "custom.yaml"
        path.write_text(yaml.dump({"feeders": {"ieee13": {"path": "mine.json"}}}))
        manager = ConfigManager(config_path=str(path))
        assert manager.resolve_feeder("ieee13") == Path("mine.json")

    def test_default_file_in_working_directory(self, no_config):
        """Test that ./vpo_config.yaml is picked up."""
        (no_config / "vpo_config.yaml").write_text(yaml.dump({"solver": {"gap": 0.0}}))
        manager = ConfigManager()
        assert manager.config_path == Path("vpo_config.yaml")
        assert manager.solver.gap == 0.0

    def test_environment_variable_config_path(self, no_config, monkeypatch):
        """Test that VPO_CONFIG_PATH wins over the working directory."""
        (no_config / "vpo_config.yaml").write_text(yaml.dump({"solver": {"gap": 0.0}}))
        env_file = no_config / "env.json"
        env_file.write_text(json.dumps({"solver": {"gap": 0.5}}))
        monkeypatch.setenv("VPO_CONFIG_PATH", str(env_file))
        manager = ConfigManager()
        assert manager.config_path == env_file
        assert manager.solver.gap == 0.5

    def test_dotenv_config_path(self, no_config):
        """Test that VPO_CONFIG_PATH is also read from a .env file."""
        (no_config / "from_env.json").write_text(json.dumps({"solver": {"gap": 0.25}}))
        (no_config / ".env").write_text("VPO_CONFIG_PATH=from_env.json\n")
        manager = ConfigManager()
        assert manager.config_path == Path("from_env.json")
        assert manager.solver.gap == 0.25

    def test_config_with_invalid_file(self, no_config):
        """Test that an invalid file falls back to defaults."""
        path = no_config / "broken.yaml"
        path.write_text("solver:\n  gap: -1\n")
        manager = ConfigManager(config_path=str(path))
        assert manager.solver == SolverDefaults()
        assert manager.resolve_feeder("ieee13") == FIXTURE_DIR / "ieee13.json"

    def test_unsupported_format(self, no_config):
        """Test that unknown file suffixes fall back to defaults."""
        path = no_config / "config.toml"
        path.write_text("[solver]\n")
        manager = ConfigManager(config_path=str(path))
        assert manager.config == VpoConfig()


class TestRunConfig:
    """Test suite for RunConfig."""

    def test_defaults_from_manager(self, no_config):
        """Test that solver defaults fill flags that were not given."""
        path = no_config / "custom.yaml"
        path.write_text(yaml.dump({"solver": {"gap": 0.01, "segments": 8}}))
        manager = ConfigManager(config_path=str(path))
        config = RunConfig.from_args(args_for(gap=None, segments=4), manager)
        assert config.gap == 0.01
        assert config.segments == 4
        assert config.feeder == FIXTURE_DIR / "three_node.json"
        assert config.profile is None
        assert config.out == Path("results")

    def test_default_profile_for_solve(self, no_config):
        """Test that commands needing a profile get the alias default."""
        config = RunConfig.from_args(
            args_for(feeder="ieee13", needs_profile=True), ConfigManager()
        )
        assert config.profile == FIXTURE_DIR / "ieee13_peak.csv"

    def test_missing_feeder_file(self, no_config):
        """Test that a missing feeder document is rejected."""
        with pytest.raises(ValidationError, match="Feeder file not found"):
            RunConfig.from_args(args_for(feeder="nowhere.json"), ConfigManager())

    def test_missing_profile_file(self, no_config):
        """Test that a missing profile is rejected."""
        with pytest.raises(ValidationError, match="Profile file not found"):
            RunConfig.from_args(args_for(profile="nowhere.csv"), ConfigManager())

    def test_dump_lp_only_for_solve(self, no_config):
        """Test that --dump-lp is refused outside solve."""
        with pytest.raises(ValidationError, match="dump-lp"):
            RunConfig.from_args(
                args_for(command="schedule", dump_lp=True), ConfigManager()
            )
        config = RunConfig.from_args(args_for(dump_lp=True), ConfigManager())
        assert config.dump_lp

    @pytest.mark.parametrize(
        "flag, value",
        [("epsilon", 0.0), ("gap", -0.1), ("segments", 1), ("period", -1)],
    )
    def test_range_checks(self, no_config, flag, value):
        """Test that out-of-range flags are rejected."""
        with pytest.raises(ValidationError):
            RunConfig.from_args(args_for(**{flag: value}), ConfigManager())


class TestGlobalManager:
    """Test suite for the module-level configuration manager."""

    @pytest.fixture(autouse=True)
    def reset_manager(self, monkeypatch):
        monkeypatch.setattr(config_module, "_config_manager", None)

    def test_manager_is_cached(self, no_config):
        """Test that repeated calls return the same manager."""
        path = no_config / "vpo.yaml"
        path.write_text(yaml.dump({"solver": {"gap": 0.01}}))
        manager = get_config_manager(str(path))
        assert get_config_manager() is manager
        assert manager.solver.gap == 0.01

    def test_reload_config(self, no_config):
        """Test that reload_config picks up a rewritten file."""
        path = no_config / "vpo.yaml"
        path.write_text(yaml.dump({"solver": {"gap": 0.01}}))
        manager = get_config_manager(str(path))
        path.write_text(yaml.dump({"solver": {"gap": 0.05}}))
        reload_config()
        assert manager.solver.gap == 0.05
