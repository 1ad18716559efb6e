"""
Persistency and allocation commands - what the deviation bound implies for a
manipulator's horizon and for spreading a distortion budget over stages.
"""
import logging

from lib.analysis.deviation import allocate_distortion, minimal_persistency
from lib.commands.base_command import EXIT_OK, BaseCommand
from lib.reporting.writer import ReportWriter

logger = logging.getLogger(__name__)


class PersistencyCommand(BaseCommand):
    """Least horizon at which a per-stage distortion eps_bar can reach the goal."""

    name = "persistency"

    def run(self, writer: ReportWriter) -> int:
        model = self.require_pomdp()
        result = minimal_persistency(model.utility, model.c_bar, model.dm_discount,
                                     self.config.eps_bar, self.config.goal)
        writer.write_json("persistency", {
            'scenario': model.name,
            'eps_bar': self.config.eps_bar,
            'goal': self.config.goal,
            **result.to_dict(),
        })
        return EXIT_OK


class AllocationCommand(BaseCommand):
    """Best split of eps_total over stages 1..N-1."""

    name = "allocation"

    def run(self, writer: ReportWriter) -> int:
        model = self.require_pomdp()
        result = allocate_distortion(model.utility, model.c_bar, model.dm_discount, model.horizon,
                                     self.config.eps_total, cost_weight=self.config.cost_weight,
                                     resolution=self.config.resolution)
        payload = {
            'scenario': model.name,
            'eps_total': self.config.eps_total,
            'cost_weight': self.config.cost_weight,
            **result.to_dict(),
        }
        rows = [(k, e) for k, e in enumerate(result.epsilons)]
        writer.emit("allocation", payload, ('stage', 'epsilon'), rows)
        return EXIT_OK
