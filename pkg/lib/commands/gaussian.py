"""
Gaussian command - closed forms of the two-stage linear-Gaussian example.
"""
import logging

import numpy as np

from lib.analysis.gaussian import GaussianScenario, cv_monotonicity_experiment, gaussian_record
from lib.commands.base_command import EXIT_OK, BaseCommand
from lib.errors import ConfigError
from lib.reporting.writer import ReportWriter

logger = logging.getLogger(__name__)

CV_GRID_POINTS = 41


class GaussianCommand(BaseCommand):
    """Writes gaussian.json; oracle gaps are included with --verify."""

    name = "gaussian"

    def run(self, writer: ReportWriter) -> int:
        scenario = self.load_scenario()
        if not isinstance(scenario, GaussianScenario):
            raise ConfigError(f"Command 'gaussian' needs a Gaussian scenario, got {self.config.scenario}")

        record = gaussian_record(scenario, verify=self.config.verify)
        grid = np.linspace(0.0, 2.0 * scenario.c_hat, CV_GRID_POINTS)[1:]
        record['cv_experiment'] = cv_monotonicity_experiment(scenario, grid).to_dict()
        writer.write_json("gaussian", record)
        return EXIT_OK
