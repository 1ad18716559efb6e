"""
Design command - the manipulator's stagewise plan against the optimal policy.

Both recursions always run so the ex ante / interim value relation and the
disintegration gap can be reported next to the requested plan.
"""
import logging

from lib.commands.base_command import EXIT_OK, BaseCommand
from lib.reporting.writer import ReportWriter
from lib.solvers.dm_solver import solve
from lib.solvers.im_designer import (check_consistency, disintegrate, evaluate_im_objective,
                                     relation_residual, solve_ex_ante, solve_interim)

logger = logging.getLogger(__name__)


class DesignCommand(BaseCommand):
    """Writes plan.json, design_values.json and summary.json."""

    name = "design"

    def run(self, writer: ReportWriter) -> int:
        model = self.require_pomdp()
        policy, _, _ = solve(model, cap=self.config.cap)

        ex_ante_plan, ex_ante_values, w_total = solve_ex_ante(model, policy, cap=self.config.cap)
        interim_plan, interim_values = solve_interim(model, policy, cap=self.config.cap)

        ex_ante_objective = evaluate_im_objective(model, policy, ex_ante_plan)
        interim_objective = evaluate_im_objective(model, policy, interim_plan)
        disintegrated_objective = evaluate_im_objective(model, policy, disintegrate(ex_ante_plan, model))

        plan = ex_ante_plan if self.config.scheme == "ex_ante" else interim_plan
        values = ex_ante_values if self.config.scheme == "ex_ante" else interim_values
        consistency = check_consistency(plan, model)
        residual = relation_residual(ex_ante_values, interim_values, model)
        if not consistency.ok:
            logger.warning(f"Plan for {model.name} is not stagewise consistent: {consistency}")

        summary = {
            'scenario': model.name,
            'scheme': self.config.scheme,
            'w_total': w_total,
            'im_objective': ex_ante_objective if plan is ex_ante_plan else interim_objective,
            'interim_aggregate': interim_values.aggregate(model, ()),
            'relation_residual': residual,
            'disintegration_gap': abs(disintegrated_objective - ex_ante_objective),
            'consistency': consistency.to_dict(),
            'histories': len(plan),
        }
        logger.info(f"W_N = {w_total:.12g}, relation residual = {residual:.3e}")

        writer.write_json("plan", plan.to_dict(model))
        writer.write_json("design_values", values.to_dict())
        writer.write_json("summary", summary)
        return EXIT_OK
