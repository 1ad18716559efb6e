"""
Joint path enumeration over (x, y, a) trajectories.

Observable histories are flat tuples (x0, a0, x1, ..., a_{n-1}, x_n); joint
histories are tuples of realized (x_k, y_k, a_k) triples for k < n. A stage
law maps (n, joint history) to the (nx, ny) table (X_n, Y_n) is drawn from,
which lets the same walker serve the true kernel and manipulation plans.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Protocol, Tuple

import numpy as np

from lib.errors import DomainError, ResourceCapError
from lib.model.pomdp import PomdpModel

logger = logging.getLogger(__name__)

DEFAULT_PATH_CAP = 200_000
# stage-law cells at or below this mass are treated as empty
NEGLIGIBLE_MASS = 1e-12

ObservableHistory = Tuple[int, ...]
JointHistory = Tuple[Tuple[int, int, int], ...]
StageLaw = Callable[[int, JointHistory], np.ndarray]


class ActionRule(Protocol):
    def action(self, history: ObservableHistory) -> int:
        ...


def observable_history(joint: JointHistory, x_next: int) -> ObservableHistory:
    """Observable part of a joint history extended by the next observation."""
    flat: List[int] = []
    for x, _, a in joint:
        flat.extend((x, a))
    flat.append(x_next)
    return tuple(flat)


@dataclass(frozen=True)
class JointPath:
    """One realized trajectory of the first N stages with its probability."""

    observations: Tuple[int, ...]
    hidden: Tuple[int, ...]
    actions: Tuple[int, ...]
    probability: float

    @property
    def length(self) -> int:
        return len(self.actions)

    def accumulated_cost(self, model: PomdpModel) -> float:
        """S_N = sum_k beta^k c(x_k, y_k, a_k)."""
        total = 0.0
        weight = 1.0
        for x, y, a in zip(self.observations, self.hidden, self.actions):
            total += weight * float(model.dm_cost[x, y, a])
            weight *= model.dm_discount
        return total

    def observable_history(self, k: int) -> ObservableHistory:
        return observable_history(self.joint_history(k), self.observations[k])

    def joint_history(self, k: int) -> JointHistory:
        return tuple(zip(self.observations[:k], self.hidden[:k], self.actions[:k]))


def true_stage_law(model: PomdpModel, initial_x: Optional[int] = None) -> StageLaw:
    """
    Stage law of the unmanipulated system.

    Stage 0 draws from Q0X x Q0Y, or from a point mass on initial_x times Q0Y;
    later stages follow the kernel row of the last realized triple.
    """
    if initial_x is None:
        start = model.initial_joint_law()
    else:
        if not 0 <= initial_x < model.nx:
            raise DomainError(f"Unknown initial observable state {initial_x}")
        start = np.zeros((model.nx, model.ny))
        start[initial_x] = model.initial_hidden_law

    def law(n: int, joint: JointHistory) -> np.ndarray:
        if n == 0:
            return start
        x, y, a = joint[-1]
        return model.transition(x, y, a)

    return law


def iter_joint_paths(model: PomdpModel, policy: ActionRule, stage_law: StageLaw,
                     horizon: Optional[int] = None, cap: int = DEFAULT_PATH_CAP) -> Iterator[JointPath]:
    """
    Depth-first enumeration of every positive-probability trajectory.

    Args:
        model: Problem instance
        policy: Anything with action(observable_history) -> action index
        stage_law: Law of (X_n, Y_n) given the joint history
        horizon: Number of stages to enumerate (default: model.horizon)
        cap: Maximum number of paths before giving up

    Raises:
        ResourceCapError: If more than cap paths have positive probability
        DomainError: If the policy prescribes an infeasible action
    """
    steps = model.horizon if horizon is None else horizon
    emitted = 0

    def walk(n: int, joint: JointHistory, probability: float) -> Iterator[JointPath]:
        nonlocal emitted
        if n == steps:
            emitted += 1
            if emitted > cap:
                raise ResourceCapError(f"Path enumeration exceeded cap of {cap} paths", cap)
            xs, ys, acts = zip(*joint) if joint else ((), (), ())
            yield JointPath(tuple(xs), tuple(ys), tuple(acts), probability)
            return
        table = stage_law(n, joint)
        for x, y in zip(*np.nonzero(table > NEGLIGIBLE_MASS)):
            x, y = int(x), int(y)
            a = policy.action(observable_history(joint, x))
            model.require_feasible(x, a)
            yield from walk(n + 1, joint + ((x, y, a),), probability * float(table[x, y]))

    yield from walk(0, (), 1.0)
    logger.debug(f"Enumerated {emitted} joint paths over {steps} stages")


def expected_utility(model: PomdpModel, policy: ActionRule, stage_law: StageLaw,
                     cap: int = DEFAULT_PATH_CAP) -> float:
    """E[U(S_N)] under the path law generated by stage_law and policy."""
    return sum(
        path.probability * model.utility(path.accumulated_cost(model))
        for path in iter_joint_paths(model, policy, stage_law, cap=cap)
    )
