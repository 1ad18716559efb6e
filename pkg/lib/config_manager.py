"""
Configuration manager for loading and validating run settings.
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from lib.errors import ConfigError

logger = logging.getLogger(__name__)

REPORT_FORMATS = ('json', 'csv')
DESIGN_SCHEMES = ('ex_ante', 'interim')
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
MAX_SEED = 2 ** 64 - 1

# field -> (config file key, environment variable)
SOURCES = {
    'seed': ('run.seed', 'DIMG_SEED'),
    'samples': ('run.samples', 'DIMG_SAMPLES'),
    'grid': ('run.grid', 'DIMG_GRID'),
    'cap': ('run.cap', 'DIMG_CAP'),
    'workers': ('run.workers', None),
    'out_dir': ('output.directory', 'DIMG_OUT'),
    'format': ('output.format', 'DIMG_FORMAT'),
    'trajectories': ('output.trajectories', None),
    'scheme': ('design.scheme', None),
    'log_level': ('logging.level', 'DIMG_LOG_LEVEL'),
    'eps_bar': ('persistency.eps_bar', None),
    'goal': ('persistency.goal', None),
    'eps_total': ('allocation.eps_total', None),
    'cost_weight': ('allocation.cost_weight', None),
    'resolution': ('allocation.resolution', None),
}

INTEGER_FIELDS = ('seed', 'samples', 'grid', 'cap', 'workers', 'trajectories', 'resolution')
FLOAT_FIELDS = ('eps_bar', 'goal', 'eps_total', 'cost_weight')


@dataclass(frozen=True)
class RunConfig:
    """Immutable settings of one CLI run."""

    command: str
    scenario: str = 'discrete-example'
    out_dir: str = 'out'
    seed: int = 0
    samples: int = 10000
    grid: int = 19
    cap: int = 200000
    scheme: str = 'ex_ante'
    verify: bool = False
    format: str = 'json'
    workers: int = 1
    log_level: str = 'WARNING'
    plan: Optional[str] = None
    trajectories: int = 0
    eps_bar: float = 0.1
    goal: float = 1.0
    eps_total: float = 0.5
    cost_weight: float = 0.0
    resolution: int = 20

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every setting except the output directory."""
        settings = asdict(self)
        settings.pop('out_dir')
        canonical = json.dumps(settings, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


class ConfigManager:
    """Manages run configuration loading and validation."""

    DEFAULT_CONFIG_PATH = "config.json"

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the configuration manager.

        Args:
            config_path: Path to configuration file (default: config.json,
                which may be absent)
        """
        self.explicit = config_path is not None
        self.config_path = config_path or self.DEFAULT_CONFIG_PATH
        self.config: Dict[str, Any] = {}

    def load(self) -> Dict[str, Any]:
        """
        Load configuration from file and the environment.

        Returns:
            Dictionary containing configuration

        Raises:
            FileNotFoundError: If an explicitly named config file doesn't exist
            ConfigError: If the config file is invalid
        """
        load_dotenv()
        config_file = Path(self.config_path)

        if not config_file.exists():
            if self.explicit:
                raise FileNotFoundError(f"Configuration file not found: {self.config_path}")
            logger.debug(f"No {self.config_path}; using defaults")
            self.config = {}
            return self.config

        logger.info(f"Loading configuration from {self.config_path}")
        try:
            with open(config_file, 'r') as f:
                self.config = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration file {self.config_path} is not valid JSON: {e}")

        if not isinstance(self.config, dict):
            raise ConfigError(f"Configuration file {self.config_path} must hold a JSON object")
        logger.info("Configuration loaded successfully")
        return self.config

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value.

        Args:
            key: Configuration key (supports dot notation, e.g., 'run.seed')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        keys = key.split('.')
        value = self.config

        for k in keys:
            if isinstance(value, dict):
                value = value.get(k)
                if value is None:
                    return default
            else:
                return default

        return value

    def get_seed(self) -> int:
        return self._resolve('seed', RunConfig.seed)

    def get_samples(self) -> int:
        return self._resolve('samples', RunConfig.samples)

    def get_history_cap(self) -> int:
        return self._resolve('cap', RunConfig.cap)

    def get_action_grid(self) -> int:
        return self._resolve('grid', RunConfig.grid)

    def get_report_format(self) -> str:
        return self._resolve('format', RunConfig.format)

    def get_log_level(self) -> str:
        return str(self._resolve('log_level', RunConfig.log_level)).upper()

    def _resolve(self, name: str, default: Any) -> Any:
        """Environment over config file over default."""
        key, env_var = SOURCES[name]
        if env_var and os.environ.get(env_var):
            return self._coerce(name, os.environ[env_var])
        value = self.get(key)
        if value is None:
            return default
        return self._coerce(name, value)

    @staticmethod
    def _coerce(name: str, value: Any) -> Any:
        try:
            if name in INTEGER_FIELDS:
                return int(value)
            if name in FLOAT_FIELDS:
                return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"Invalid value for {name}: {value!r}")
        return value

    def build_run_config(self, overrides: Dict[str, Any]) -> RunConfig:
        """
        Merge command-line overrides (None means unset) over the environment,
        the config file and the defaults.

        Raises:
            ConfigError: If any resulting setting is invalid
        """
        typed = {
            'seed': self.get_seed,
            'samples': self.get_samples,
            'cap': self.get_history_cap,
            'grid': self.get_action_grid,
            'format': self.get_report_format,
            'log_level': self.get_log_level,
        }
        values: Dict[str, Any] = {}
        for name in SOURCES:
            values[name] = typed[name]() if name in typed else self._resolve(name, getattr(RunConfig, name))
        for name, value in overrides.items():
            if value is not None:
                values[name] = self._coerce(name, value) if name in SOURCES else value
        values['log_level'] = str(values['log_level']).upper()
        if 'command' not in values:
            raise ConfigError("No command given")
        config = RunConfig(**values)
        self._validate(config)
        return config

    @staticmethod
    def _validate(config: RunConfig) -> None:
        """
        Validate the run configuration.

        Raises:
            ConfigError: If configuration is invalid
        """
        if not 0 <= config.seed <= MAX_SEED:
            raise ConfigError(f"Seed must be an unsigned 64-bit integer, got {config.seed}")
        for name in ('samples', 'grid', 'cap', 'workers', 'resolution'):
            if getattr(config, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(config, name)}")
        if config.trajectories < 0:
            raise ConfigError(f"trajectories must be nonnegative, got {config.trajectories}")
        if config.format not in REPORT_FORMATS:
            raise ConfigError(f"Unknown report format: {config.format}")
        if config.scheme not in DESIGN_SCHEMES:
            raise ConfigError(f"Unknown design scheme: {config.scheme}")
        if config.log_level not in LOG_LEVELS:
            raise ConfigError(f"Unknown log level: {config.log_level}")
        logger.debug("Configuration validation passed")

    def __repr__(self) -> str:
        return f"ConfigManager(config_path='{self.config_path}')"
