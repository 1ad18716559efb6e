"""
Solve command - optimal decision-maker policy by backward induction.
"""
import logging
from typing import Any, Dict, Optional

from lib.commands.base_command import EXIT_OK, BaseCommand
from lib.errors import DomainError
from lib.model.pomdp import PomdpModel, certainty_equivalent
from lib.reporting.writer import ReportWriter
from lib.solvers.dm_solver import solve

logger = logging.getLogger(__name__)


def _certainty_equivalent(model: PomdpModel, value: float) -> Optional[float]:
    try:
        return certainty_equivalent(model.utility, value)
    except DomainError:
        return None


class SolveDmCommand(BaseCommand):
    """Writes policy.json, values.json and summary.json."""

    name = "solve-dm"

    def run(self, writer: ReportWriter) -> int:
        model = self.require_pomdp()
        policy, table, values = solve(model, cap=self.config.cap)

        per_state = {
            model.x_label(x0): {'value': j, 'certainty_equivalent': _certainty_equivalent(model, j)}
            for x0, j in values.items()
        }
        summary: Dict[str, Any] = {
            'scenario': model.name,
            'horizon': model.horizon,
            'histories': len(table),
            'j_per_initial_state': per_state,
        }
        if model.initial_observable_law is not None:
            overall = float(sum(model.initial_observable_law[x0] * j for x0, j in values.items()))
            summary['j'] = overall
            summary['certainty_equivalent'] = _certainty_equivalent(model, overall)

        writer.write_json("policy", policy.to_dict(model))
        writer.write_json("values", table.to_dict())
        writer.write_json("summary", summary)
        logger.info(f"Solved {model.name}: {len(policy)} decision histories")
        return EXIT_OK
