"""
Validate command - checks a scenario file and lists every violation.
"""
import logging

from lib.commands.base_command import EXIT_FAILURE, EXIT_OK, BaseCommand
from lib.errors import ScenarioError
from lib.model.pomdp import PomdpModel, validate_model
from lib.reporting.writer import ReportWriter

logger = logging.getLogger(__name__)


class ValidateCommand(BaseCommand):
    """Writes validation.json; exits 1 when the scenario has violations."""

    name = "validate"

    def run(self, writer: ReportWriter) -> int:
        try:
            scenario = self.load_scenario()
        except ScenarioError as e:
            if e.report is None:
                raise
            logger.error(f"Scenario {self.config.scenario} is invalid: {e.report}")
            writer.write_json("validation", {'scenario': self.config.scenario, **e.report.to_dict()})
            return EXIT_FAILURE

        if isinstance(scenario, PomdpModel):
            report = validate_model(scenario)
            payload = {'scenario': self.config.scenario, **report.to_dict()}
            ok = report.ok
        else:
            payload = {'scenario': self.config.scenario, 'ok': True, 'violations': []}
            ok = True

        writer.write_json("validation", payload)
        return EXIT_OK if ok else EXIT_FAILURE
