"""
Base command class for all CLI subcommands.
Mirrors the module pattern: each command owns one piece of the pipeline and
reports through the shared writer.
"""
import logging
from abc import ABC, abstractmethod

from lib.config_manager import RunConfig
from lib.errors import ConfigError
from lib.model.pomdp import PomdpModel
from lib.model.scenario_loader import Scenario
from lib.model.scenarios import resolve_scenario
from lib.reporting.writer import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3


class BaseCommand(ABC):
    """
    Abstract base class for all subcommands.
    A command reads its settings from the RunConfig, does its work and
    returns the process exit status.
    """

    name = "command"

    def __init__(self, config: RunConfig):
        """
        Initialize the command with the run configuration.

        Args:
            config: Immutable run settings
        """
        self.config = config

    @abstractmethod
    def run(self, writer: ReportWriter) -> int:
        """
        Execute the command.

        Args:
            writer: Report writer bound to the output directory

        Returns:
            int: Exit status (EXIT_OK on success)
        """
        pass

    def load_scenario(self) -> Scenario:
        """Resolve --scenario to a bundled or file-backed scenario."""
        return resolve_scenario(self.config.scenario, grid=self.config.grid)

    def require_pomdp(self) -> PomdpModel:
        """
        Load the scenario and insist it is a finite model.

        Raises:
            ConfigError: If the scenario is a Gaussian one
        """
        scenario = self.load_scenario()
        if not isinstance(scenario, PomdpModel):
            raise ConfigError(f"Command '{self.name}' needs a finite scenario, got {self.config.scenario}")
        return scenario

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(scenario='{self.config.scenario}')"
