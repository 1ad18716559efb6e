"""
Deviation command - how far a plan moves the decision-maker's objective,
against the bound implied by the per-stage distortions.
"""
import logging

from lib.analysis.deviation import CSV_FIELDS, check_bound
from lib.analysis.simulation import TRAJECTORY_FIELDS, simulate_trajectories
from lib.commands.base_command import EXIT_FAILURE, EXIT_OK, BaseCommand
from lib.errors import ConfigError
from lib.model.pomdp import PomdpModel
from lib.reporting.writer import ReportWriter, read_payload
from lib.solvers.dm_solver import Policy, solve
from lib.solvers.im_designer import ManipulationPlan, solve_ex_ante, solve_interim

logger = logging.getLogger(__name__)


class DeviationCommand(BaseCommand):
    """Writes deviation.json (or .csv) and, on request, trajectories.csv."""

    name = "deviation"

    def _plan(self, model: PomdpModel, policy: Policy) -> ManipulationPlan:
        if self.config.plan:
            logger.info(f"Reading plan from {self.config.plan}")
            return ManipulationPlan.from_dict(read_payload(self.config.plan))
        if self.config.scheme == "ex_ante":
            plan, _, _ = solve_ex_ante(model, policy, cap=self.config.cap)
        else:
            plan, _ = solve_interim(model, policy, cap=self.config.cap)
        return plan

    def run(self, writer: ReportWriter) -> int:
        model = self.require_pomdp()
        if model.initial_observable_law is None:
            raise ConfigError(f"Scenario {model.name} has no initial observable law; deviation needs one")

        policy, _, _ = solve(model, cap=self.config.cap)
        plan = self._plan(model, policy)
        report = check_bound(model, policy, plan, samples=self.config.samples,
                             seed=self.config.seed, workers=self.config.workers)

        writer.emit("deviation", report.to_dict(), CSV_FIELDS, [report.to_csv_row()])
        if self.config.trajectories > 0:
            sample = simulate_trajectories(model, policy, plan, self.config.trajectories,
                                           self.config.seed, self.config.workers,
                                           keep=self.config.trajectories)
            writer.write_csv("trajectories", TRAJECTORY_FIELDS, sample.trajectories)

        if not report.holds:
            logger.error(f"Deviation bound violated by {-report.slack:.3g}")
            return EXIT_FAILURE
        return EXIT_OK
