"""
Configuration management for the vpo command.
Handles feeder aliases, solver defaults and experiment grids.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from vpo_cli.settings import VpoSettings

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


class FeederAlias(BaseModel):
    """A named feeder document with its default profile."""

    path: str
    profile: Optional[str] = None
    description: Optional[str] = None


class SolverDefaults(BaseModel):
    """Default options of a single run."""

    epsilon: float = Field(1e-6, gt=0.0)
    gap: float = Field(1e-4, ge=0.0)
    node_limit: int = Field(10_000, ge=1)
    segments: int = Field(16, ge=2)
    quad_mode: Literal["const", "pwl"] = "const"
    envelope_segments: int = Field(8, ge=1)
    max_iters: int = Field(20, ge=1)
    loss_allowance: bool = True


class ExperimentDefaults(BaseModel):
    """Parameter grids of the sweeps, the scaling study and verification."""

    alphas: List[float] = Field(
        default_factory=lambda: [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2]
    )
    nominal_alpha: float = Field(1e-3, gt=0.0)
    v_lows: List[float] = Field(default_factory=lambda: [0.96, 0.97, 0.98, 0.99, 1.0])
    scale_caps: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    samples: int = Field(1000, ge=1)
    tracking_node: Optional[int] = None


def _builtin_feeders() -> Dict[str, FeederAlias]:
    return {
        "ieee13": FeederAlias(
            path=str(FIXTURE_DIR / "ieee13.json"),
            profile=str(FIXTURE_DIR / "ieee13_peak.csv"),
            description="IEEE 13-node single-phase equivalent",
        ),
        "ieee37": FeederAlias(
            path=str(FIXTURE_DIR / "ieee37.json"),
            profile=str(FIXTURE_DIR / "ieee37_peak.csv"),
            description="IEEE 37-node single-phase equivalent",
        ),
        "single_branch": FeederAlias(
            path=str(FIXTURE_DIR / "single_branch.json"),
            description="One line, one load",
        ),
        "three_node": FeederAlias(
            path=str(FIXTURE_DIR / "three_node.json"),
            description="Two lines in series",
        ),
    }


class VpoConfig(BaseModel):
    """Root configuration model."""

    feeders: Dict[str, FeederAlias] = Field(default_factory=dict)
    solver: SolverDefaults = Field(default_factory=SolverDefaults)
    experiments: ExperimentDefaults = Field(default_factory=ExperimentDefaults)


class ConfigManager:
    """Manages feeder aliases and default options."""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the configuration manager.

        Args:
            config_path: Path to configuration file. If None, looks for:
                        1. VPO_CONFIG_PATH from the environment or .env
                        2. ./vpo_config.yaml
                        3. ./vpo_config.json
        """
        self.config_path = self._find_config_path(config_path)
        self.config: VpoConfig = VpoConfig()
        # alias (lower case) -> feeder
        self._feeder_map: Dict[str, FeederAlias] = {}

        if self.config_path and self.config_path.exists():
            self.load_config()
        else:
            logger.info("No configuration file found. Using defaults.")
            self._build_feeder_map()

    def _find_config_path(self, config_path: Optional[str]) -> Optional[Path]:
        """Find the configuration file path."""
        if config_path:
            return Path(config_path)

        env_path = VpoSettings().config_path
        if env_path:
            return Path(env_path)

        for filename in ["vpo_config.yaml", "vpo_config.yml", "vpo_config.json"]:
            path = Path(filename)
            if path.exists():
                return path

        return None

    def load_config(self) -> None:
        """Load configuration from file."""
        if not self.config_path or not self.config_path.exists():
            logger.warning(f"Configuration file not found: {self.config_path}")
            self.config = VpoConfig()
            self._build_feeder_map()
            return

        try:
            with open(self.config_path, "r") as f:
                if self.config_path.suffix in [".yaml", ".yml"]:
                    data = yaml.safe_load(f)
                elif self.config_path.suffix == ".json":
                    data = json.load(f)
                else:
                    raise ValueError(
                        f"Unsupported config format: {self.config_path.suffix}"
                    )

            self.config = VpoConfig(**data) if data else VpoConfig()
            logger.info(f"Loaded configuration from {self.config_path}")
            logger.info(f"Configured feeders: {list(self.config.feeders.keys())}")

        except Exception as e:
            logger.error(f"Failed to load configuration: {e}")
            self.config = VpoConfig()

        self._build_feeder_map()

    def _build_feeder_map(self) -> None:
        """Built-in aliases first, configured ones override them."""
        self._feeder_map = {k: v for k, v in _builtin_feeders().items()}
        for alias, feeder in self.config.feeders.items():
            self._feeder_map[alias.lower()] = feeder

    def get_feeder_alias(self, alias: str) -> Optional[FeederAlias]:
        return self._feeder_map.get(alias.lower())

    def resolve_feeder(self, alias_or_path: str) -> Path:
        """
        Resolve a feeder alias to its document path.

        Args:
            alias_or_path: Feeder alias (case-insensitive) or a path

        Returns:
            Path of the feeder document; unknown aliases are taken as paths
        """
        feeder = self.get_feeder_alias(alias_or_path)
        if feeder:
            return Path(feeder.path)
        return Path(alias_or_path)

    def default_profile(self, alias_or_path: str) -> Optional[Path]:
        feeder = self.get_feeder_alias(alias_or_path)
        if feeder and feeder.profile:
            return Path(feeder.profile)
        return None

    @property
    def solver(self) -> SolverDefaults:
        return self.config.solver

    @property
    def experiments(self) -> ExperimentDefaults:
        return self.config.experiments

    def list_feeders(self) -> List[Dict[str, Any]]:
        """
        List every known feeder alias.

        Returns:
            List of dicts with alias, path, profile and description
        """
        return [
            {
                "alias": alias,
                "path": feeder.path,
                "profile": feeder.profile or "",
                "description": feeder.description or "",
            }
            for alias, feeder in sorted(self._feeder_map.items())
        ]


class RunConfig(BaseModel):
    """Options of one command invocation, CLI flags merged over defaults."""

    subcommand: str
    feeder: Path
    profile: Optional[Path] = None
    period: int = Field(0, ge=0)
    epsilon: float = Field(1e-6, gt=0.0)
    gap: float = Field(1e-4, ge=0.0)
    node_limit: int = Field(10_000, ge=1)
    segments: int = Field(16, ge=2)
    quad_mode: Literal["const", "pwl"] = "const"
    envelope_segments: int = Field(8, ge=1)
    max_iters: int = Field(20, ge=1)
    loss_allowance: bool = True
    out: Path = Path("results")
    seed: int = 0
    samples: int = Field(1000, ge=1)
    dump_lp: bool = False
    no_caps: bool = False

    @field_validator("feeder")
    @classmethod
    def _feeder_exists(cls, value: Path) -> Path:
        if not value.exists():
            raise ValueError(f"Feeder file not found: {value}")
        return value

    @field_validator("profile")
    @classmethod
    def _profile_exists(cls, value: Optional[Path]) -> Optional[Path]:
        if value is not None and not value.exists():
            raise ValueError(f"Profile file not found: {value}")
        return value

    @model_validator(mode="after")
    def _dump_needs_output(self) -> "RunConfig":
        if self.dump_lp and self.subcommand != "solve":
            raise ValueError("--dump-lp only applies to solve")
        return self

    @classmethod
    def from_args(cls, args: Any, manager: "ConfigManager") -> "RunConfig":
        """Merge parsed CLI flags over the configured solver defaults."""
        solver = manager.solver
        values: Dict[str, Any] = {
            "subcommand": args.command,
            "feeder": manager.resolve_feeder(args.feeder),
            "epsilon": solver.epsilon,
            "gap": solver.gap,
            "node_limit": solver.node_limit,
            "segments": solver.segments,
            "quad_mode": solver.quad_mode,
            "envelope_segments": solver.envelope_segments,
            "max_iters": solver.max_iters,
            "loss_allowance": solver.loss_allowance,
            "samples": manager.experiments.samples,
        }
        profile = getattr(args, "profile", None)
        if profile:
            values["profile"] = Path(profile)
        elif getattr(args, "needs_profile", False):
            values["profile"] = manager.default_profile(args.feeder)
        for name in (
            "period",
            "epsilon",
            "gap",
            "segments",
            "quad_mode",
            "envelope_segments",
            "max_iters",
            "seed",
            "samples",
        ):
            value = getattr(args, name, None)
            if value is not None:
                values[name] = value
        values["out"] = Path(args.out)
        values["dump_lp"] = bool(getattr(args, "dump_lp", False))
        values["no_caps"] = bool(getattr(args, "no_caps", False))
        return cls(**values)


# Global config manager instance
_config_manager: Optional[ConfigManager] = None


def get_config_manager(config_path: Optional[str] = None) -> ConfigManager:
    """Get or create the global configuration manager."""
    global _config_manager
    if _config_manager is None or config_path is not None:
        _config_manager = ConfigManager(config_path)
    return _config_manager


def reload_config() -> None:
    """Reload the configuration from file."""
    manager = get_config_manager()
    manager.load_config()
