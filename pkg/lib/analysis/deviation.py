"""
Impact of manipulation on the decision-maker: exact J and J-tilde, per-stage
distortions, the performance deviation bound and what it implies for how
long a manipulator must persist.
"""
import itertools
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lib.errors import BoundViolationError, DomainError
from lib.filtering.info_state import HistoryRecord, initial_path_state, manipulated_update
from lib.model.paths import (DEFAULT_PATH_CAP, NEGLIGIBLE_MASS, ActionRule, JointHistory, expected_utility,
                             true_stage_law)
from lib.model.pomdp import PomdpModel, UtilitySpec, utility_eval
from lib.analysis.simulation import simulate_trajectories
from lib.solvers.dm_solver import terminal_value
from lib.solvers.im_designer import ManipulationPlan, reference_joint
from lib.solvers.lp import tv_l1_distance

logger = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-7
DEFAULT_PERSISTENCY_CAP = 10_000
ROUTES = ("paths", "information_state")

CSV_FIELDS = (
    'scenario', 'seed', 'samples', 'j_true', 'j_manipulated', 'deviation',
    'bound_rhs', 'slack', 'epsilons', 'j_true_mc', 'j_true_se',
    'j_manipulated_mc', 'j_manipulated_se',
)


def _require_initial_law(model: PomdpModel) -> None:
    if model.initial_observable_law is None:
        raise DomainError("Deviation analysis needs an initial observable law Q0X")


def evaluate_dm_objective(model: PomdpModel, policy: ActionRule, plan: Optional[ManipulationPlan] = None,
                          route: str = "paths", cap: int = DEFAULT_PATH_CAP) -> float:
    """
    Exact E[U(S_N)] with x0 drawn at random; with a plan the path law follows
    the designs while the policy stays fixed.

    route "paths" sums over joint trajectories; route "information_state"
    chains path-tagged information states along every observable history.

    Raises:
        DomainError: If the model has no Q0X or the route is unknown
    """
    _require_initial_law(model)
    stage_law = true_stage_law(model) if plan is None else plan.stage_law(model)
    if route == "paths":
        return expected_utility(model, policy, stage_law, cap=cap)
    if route != "information_state":
        raise DomainError(f"Unknown evaluation route: {route}")

    def value(history: HistoryRecord, mu, z: float) -> float:
        if mu.is_empty():
            return 0.0
        if history.stage == model.horizon:
            return terminal_value(model.utility, mu.collapse())
        a = policy.action(history.key())
        return sum(
            value(history.extend(a, x_next),
                  manipulated_update(model, history, a, x_next, mu, z, stage_law),
                  model.dm_discount * z)
            for x_next in range(model.nx)
        )

    return sum(
        value(HistoryRecord((x0,)), initial_path_state(model, x0, stage_law), 1.0)
        for x0 in range(model.nx)
    )


def epsilon_profile(model: PomdpModel, plan: ManipulationPlan) -> np.ndarray:
    """
    eps_n = largest L1 distance between the design and the reference law over
    stage-n histories of positive probability under the manipulated law.

    Raises:
        DomainError: If the model has no Q0X
    """
    _require_initial_law(model)
    epsilons = np.zeros(plan.horizon)
    children: Dict[JointHistory, List[JointHistory]] = {}
    for history in plan.histories():
        if history:
            children.setdefault(history[:-1], []).append(history)

    def visit(history: JointHistory) -> None:
        n = len(history)
        joint = plan.joint(model, history)
        epsilons[n] = max(epsilons[n], tv_l1_distance(joint, reference_joint(model, history)))
        for child in children.get(history, []):
            x, y, _ = child[-1]
            if joint[x, y] > NEGLIGIBLE_MASS:
                visit(child)

    visit(())
    return epsilons


def bound_rhs(u: UtilitySpec, c_bar: float, beta: float, horizon: int, epsilons: Sequence[float]) -> float:
    """
    eps_0 U(c_bar (1 - beta^N) / (1 - beta)) + sum_{k>=1} eps_k U(c_bar (1 - beta^k) / (1 - beta)).

    Raises:
        DomainError: If there is not exactly one epsilon per stage
    """
    if len(epsilons) != horizon:
        raise DomainError(f"Expected {horizon} distortions, got {len(epsilons)}")
    total = epsilons[0] * utility_eval(u, c_bar * (1.0 - beta ** horizon) / (1.0 - beta))
    for k in range(1, horizon):
        total += epsilons[k] * utility_eval(u, c_bar * (1.0 - beta ** k) / (1.0 - beta))
    return float(total)


@dataclass(frozen=True)
class DeviationReport:
    j_true: float
    j_manipulated: float
    epsilons: Tuple[float, ...]
    bound_rhs: float
    samples: int = 0
    seed: int = 0
    j_true_mc: Optional[float] = None
    j_true_se: Optional[float] = None
    j_manipulated_mc: Optional[float] = None
    j_manipulated_se: Optional[float] = None
    scenario: str = ""

    @property
    def deviation(self) -> float:
        return abs(self.j_manipulated - self.j_true)

    @property
    def slack(self) -> float:
        return self.bound_rhs - self.deviation

    @property
    def holds(self) -> bool:
        return self.slack >= -BOUND_TOLERANCE

    def assert_holds(self) -> None:
        if not self.holds:
            raise BoundViolationError(self)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['epsilons'] = list(self.epsilons)
        data.update({'deviation': self.deviation, 'slack': self.slack, 'holds': self.holds})
        return data

    def to_csv_row(self) -> List[Any]:
        data = self.to_dict()
        data['epsilons'] = " ".join(f"{e:.12g}" for e in self.epsilons)
        return [data[name] for name in CSV_FIELDS]


def check_bound(model: PomdpModel, policy: ActionRule, plan: ManipulationPlan,
                samples: int = 0, seed: int = 0, workers: int = 1) -> DeviationReport:
    """
    Evaluate both sides of the deviation bound; with samples > 0 the
    Monte-Carlo estimates of J and J-tilde are attached.
    """
    j_true = evaluate_dm_objective(model, policy)
    j_manipulated = evaluate_dm_objective(model, policy, plan)
    epsilons = epsilon_profile(model, plan)
    rhs = bound_rhs(model.utility, model.c_bar, model.dm_discount, model.horizon, epsilons)

    extras: Dict[str, Any] = {}
    if samples > 0:
        truthful = simulate_trajectories(model, policy, None, samples, seed, workers)
        manipulated = simulate_trajectories(model, policy, plan, samples, seed, workers)
        extras = {
            'j_true_mc': truthful.mean, 'j_true_se': truthful.std_error,
            'j_manipulated_mc': manipulated.mean, 'j_manipulated_se': manipulated.std_error,
        }

    report = DeviationReport(
        j_true=j_true, j_manipulated=j_manipulated,
        epsilons=tuple(float(e) for e in epsilons), bound_rhs=rhs,
        samples=samples, seed=seed, scenario=model.name, **extras,
    )
    if not report.holds:
        logger.warning(f"Deviation bound violated on {model.name}: slack {report.slack:.3g}")
    return report


@dataclass(frozen=True)
class PersistencyResult:
    horizon: Optional[int]
    partial_sums: Tuple[float, ...]
    cap: int

    @property
    def achievable(self) -> bool:
        return self.horizon is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'horizon': self.horizon,
            'achievable': self.achievable,
            'cap': self.cap,
            'final_partial_sum': self.partial_sums[-1] if self.partial_sums else 0.0,
        }


def minimal_persistency(u: UtilitySpec, c_bar: float, beta: float, eps_bar: float, goal: float,
                        cap: int = DEFAULT_PERSISTENCY_CAP) -> PersistencyResult:
    """
    Least N with eps_bar sum_{j=1..N} U(c_bar (1 - beta^j) / (1 - beta)) >= goal.

    Raises:
        DomainError: If eps_bar or goal is not positive
    """
    if not eps_bar > 0.0:
        raise DomainError(f"Distortion budget must be positive, got {eps_bar}")
    if not goal > 0.0:
        raise DomainError(f"Deviation goal must be positive, got {goal}")
    partial: List[float] = []
    total = 0.0
    for n in range(1, cap + 1):
        total += eps_bar * utility_eval(u, c_bar * (1.0 - beta ** n) / (1.0 - beta))
        partial.append(total)
        if total >= goal:
            return PersistencyResult(n, tuple(partial), cap)
    logger.warning(f"Deviation goal {goal} not achievable within {cap} stages")
    return PersistencyResult(None, tuple(partial), cap)


@dataclass(frozen=True)
class AllocationResult:
    epsilons: Tuple[float, ...]
    objective: float

    def to_dict(self) -> Dict[str, Any]:
        return {'epsilons': list(self.epsilons), 'objective': self.objective}


def allocate_distortion(u: UtilitySpec, c_bar: float, beta: float, horizon: int, eps_total: float,
                        cost_weight: float = 0.0, resolution: int = 20) -> AllocationResult:
    """
    Spread a distortion budget over stages 1..N-1 to maximize the bound minus
    cost_weight * sum eps_k^2, searching allocations in steps of
    eps_total / resolution. Each eps_k stays within [0, 2].

    Raises:
        DomainError: If the horizon is below 2 or the budget is negative
    """
    if horizon < 2:
        raise DomainError("Allocation needs at least two stages")
    if eps_total < 0.0:
        raise DomainError(f"Distortion budget must be nonnegative, got {eps_total}")
    stages = horizon - 1
    step = eps_total / resolution
    best: Optional[AllocationResult] = None
    # stars and bars over `resolution` units and `stages` bins
    for bars in itertools.combinations(range(resolution + stages - 1), stages - 1):
        edges = (-1,) + bars + (resolution + stages - 1,)
        units = [edges[i + 1] - edges[i] - 1 for i in range(stages)]
        allocation = (0.0,) + tuple(k * step for k in units)
        if max(allocation) > 2.0:
            continue
        value = bound_rhs(u, c_bar, beta, horizon, allocation) - cost_weight * sum(e * e for e in allocation)
        if best is None or value > best.objective + 1e-15:
            best = AllocationResult(allocation, value)
    if best is None:
        raise DomainError(f"No allocation of {eps_total} keeps every stage within [0, 2]")
    return best
