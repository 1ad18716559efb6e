"""
Seeded Monte-Carlo companion to the exact evaluations.

Every run derives one Philox stream per worker from the root seed through
SeedSequence.spawn, so results depend only on (seed, workers, count).
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from lib.errors import DomainError
from lib.model.paths import ActionRule, JointHistory, StageLaw, observable_history, true_stage_law
from lib.model.pomdp import PomdpModel
from lib.solvers.im_designer import ManipulationPlan, reference_hidden

logger = logging.getLogger(__name__)

TRAJECTORY_FIELDS = ('trajectory', 'stage', 'x', 'y', 'a', 'c', 's')


@dataclass
class SimulationResult:
    mean: float
    std_error: float
    count: int
    seed: int
    workers: int = 1
    trajectories: List[Tuple[Any, ...]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mean': self.mean,
            'std_error': self.std_error,
            'count': self.count,
            'seed': self.seed,
            'workers': self.workers,
        }


def _sample(rng: np.random.Generator, weights: np.ndarray) -> int:
    cumulative = np.cumsum(weights)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side='right'))
    return min(index, weights.size - 1)


def _draw_stage(rng: np.random.Generator, model: PomdpModel, n: int, history: JointHistory,
                stage_law: StageLaw, plan: Optional[ManipulationPlan]) -> Tuple[int, int]:
    if plan is not None and plan.scheme == "interim" and n < plan.horizon:
        y = _sample(rng, reference_hidden(model, history))
        x = _sample(rng, plan.table(history)[y])
        return x, y
    table = stage_law(n, history)
    cell = _sample(rng, table.ravel())
    return divmod(cell, model.ny)


def _run_stream(model: PomdpModel, policy: ActionRule, plan: Optional[ManipulationPlan],
                stage_law: StageLaw, rng: np.random.Generator, count: int,
                keep: int, first_id: int, rows: List[Tuple[Any, ...]]) -> np.ndarray:
    utilities = np.empty(count)
    for i in range(count):
        history: JointHistory = ()
        accumulated = 0.0
        weight = 1.0
        for n in range(model.horizon):
            x, y = _draw_stage(rng, model, n, history, stage_law, plan)
            a = policy.action(observable_history(history, x))
            cost = float(model.dm_cost[x, y, a])
            accumulated += weight * cost
            weight *= model.dm_discount
            history = history + ((x, y, a),)
            if first_id + i < keep:
                rows.append((first_id + i, n, x, y, a, cost, accumulated))
        utilities[i] = model.utility(accumulated)
    return utilities


def simulate_trajectories(model: PomdpModel, policy: ActionRule, plan: Optional[ManipulationPlan],
                          count: int, seed: int, workers: int = 1, keep: int = 0) -> SimulationResult:
    """
    Sample `count` trajectories of N stages and average U(sum beta^k c).

    Ex ante plans draw (x_n, y_n) from the design at the realized history;
    interim plans draw y_n from q^Y and then x_n from phi_n(. | y_n). The
    first `keep` trajectories are returned as rows (trajectory, stage, x, y, a, c, s).

    Raises:
        DomainError: If count or workers is below one, or the model has no Q0X
    """
    if count < 1:
        raise DomainError(f"Sample count must be at least 1, got {count}")
    if workers < 1:
        raise DomainError(f"Worker count must be at least 1, got {workers}")

    stage_law = true_stage_law(model) if plan is None else plan.stage_law(model)
    streams = np.random.SeedSequence(seed).spawn(workers)
    shares = [count // workers + (1 if i < count % workers else 0) for i in range(workers)]

    rows: List[Tuple[Any, ...]] = []
    chunks = []
    first_id = 0
    for stream, share in zip(streams, shares):
        if share == 0:
            continue
        rng = np.random.Generator(np.random.Philox(stream))
        chunks.append(_run_stream(model, policy, plan, stage_law, rng, share, keep, first_id, rows))
        first_id += share

    utilities = np.concatenate(chunks)
    std_error = float(utilities.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    logger.debug(f"Simulated {count} trajectories with seed {seed}: mean {utilities.mean():.6g}")
    return SimulationResult(float(utilities.mean()), std_error, count, seed, workers, rows)
