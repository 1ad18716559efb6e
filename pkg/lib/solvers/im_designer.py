"""
The manipulator's design problem.

Plans are indexed by the conditioning joint history ((x_0, y_0, a_0), ...,
(x_{n-1}, y_{n-1}, a_{n-1})); the empty history is stage 0. The DM policy is
history dependent, so the stage objective needs the observable prefix and a
last-triple index would not be enough.

Ex ante: one LP per history over the joint table p[x, y] with the Y-marginal
pinned to the true kernel. Interim: one LP per (history, y) over the
conditional law of X given y. Manipulation cost is the L1 distance to the
reference law, linearized with one auxiliary per cell of positive reference
mass; cells with zero reference mass add their weight to the objective
coefficient directly.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from lib.errors import DesignError, DomainError, ResourceCapError
from lib.model.paths import NEGLIGIBLE_MASS, ActionRule, JointHistory, StageLaw, observable_history
from lib.model.pomdp import PomdpModel
from lib.solvers.lp import StageLinearProgram, lp_solve, tv_l1_distance

logger = logging.getLogger(__name__)

SCHEMES = ("ex_ante", "interim")
CONSISTENCY_TOLERANCE = 1e-8
DISINTEGRATION_THRESHOLD = 1e-12
DEFAULT_DESIGN_CAP = 200_000

InterimKey = Tuple[JointHistory, int]


def reference_joint(model: PomdpModel, history: JointHistory) -> Optional[np.ndarray]:
    """
    Law the design is compared against: the kernel row of the last triple,
    or Q0X x Q0Y at stage 0 (None when the model has no Q0X).
    """
    if history:
        return model.transition(*history[-1])
    if model.initial_observable_law is None:
        return None
    return model.initial_joint_law()


def reference_hidden(model: PomdpModel, history: JointHistory) -> np.ndarray:
    """Y-marginal every design at this history must reproduce."""
    if history:
        return model.transition(*history[-1]).sum(axis=0)
    return np.asarray(model.initial_hidden_law)


def reference_observable(model: PomdpModel, history: JointHistory) -> np.ndarray:
    """q^X(. | history), or Q0X (uniform without one) at stage 0."""
    if history:
        return model.transition(*history[-1]).sum(axis=1)
    if model.initial_observable_law is None:
        return np.full(model.nx, 1.0 / model.nx)
    return np.asarray(model.initial_observable_law)


def conditional_reference(model: PomdpModel, history: JointHistory, y: int) -> Optional[np.ndarray]:
    """psi(x | y) = q(x, y | history) / q^Y(y | history); Q0X at stage 0."""
    if not history:
        if model.initial_observable_law is None:
            return None
        return np.asarray(model.initial_observable_law)
    joint = model.transition(*history[-1])
    mass = joint[:, y].sum()
    if mass <= DISINTEGRATION_THRESHOLD:
        return reference_observable(model, history)
    return joint[:, y] / mass


@dataclass(frozen=True)
class ManipulationPlan:
    """
    Per-history designs.

    ex_ante tables are joint laws p[x, y]; interim tables hold one
    conditional law of X per hidden state, phi[y, x].
    """

    scheme: str
    horizon: int
    tables: Dict[JointHistory, np.ndarray]
    lp_values: Dict[Any, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"Unknown manipulation scheme: {self.scheme}")
        for table in self.tables.values():
            table.setflags(write=False)

    def __contains__(self, history: JointHistory) -> bool:
        return history in self.tables

    def __len__(self) -> int:
        return len(self.tables)

    def histories(self, stage: Optional[int] = None) -> List[JointHistory]:
        keys = sorted(self.tables)
        if stage is None:
            return keys
        return [h for h in keys if len(h) == stage]

    def table(self, history: JointHistory) -> np.ndarray:
        try:
            return self.tables[history]
        except KeyError:
            raise DomainError(f"Plan is undefined at history {history}")

    def joint(self, model: PomdpModel, history: JointHistory) -> np.ndarray:
        """Joint law of (X_n, Y_n) at the history; interim rows are recombined with q^Y."""
        table = self.table(history)
        if self.scheme == "ex_ante":
            return table
        return (table * reference_hidden(model, history)[:, None]).T

    def stage_law(self, model: PomdpModel) -> StageLaw:
        """Stage law for path walkers: the plan before the horizon, the kernel after it."""

        def law(n: int, history: JointHistory) -> np.ndarray:
            if n >= self.horizon:
                return model.transition(*history[-1])
            return self.joint(model, history)

        return law

    @classmethod
    def truthful(cls, model: PomdpModel, policy: ActionRule, scheme: str = "ex_ante",
                 cap: int = DEFAULT_DESIGN_CAP) -> "ManipulationPlan":
        """
        The plan that reproduces the true kernel on every history whose
        hidden path is reachable.

        Raises:
            DomainError: If the model has no Q0X
        """
        if model.initial_observable_law is None:
            raise DomainError("The truthful plan needs an initial observable law Q0X")
        tables: Dict[JointHistory, np.ndarray] = {}
        for history in design_histories(model, policy, cap):
            if scheme == "ex_ante":
                tables[history] = np.array(reference_joint(model, history))
            else:
                tables[history] = np.array([
                    conditional_reference(model, history, y) for y in range(model.ny)
                ])
        return cls(scheme, model.horizon, tables)

    def to_dict(self, model: PomdpModel) -> Dict[str, Any]:
        consistency = check_consistency(self, model)
        entries = []
        for history in self.histories():
            entry: Dict[str, Any] = {
                'stage': len(history),
                'history': [list(triple) for triple in history],
                'table': self.tables[history].tolist(),
                'residual': consistency.residuals.get(history, 0.0),
            }
            if self.scheme == "ex_ante":
                entry['lp_value'] = self.lp_values.get(history)
            else:
                entry['lp_values'] = {
                    model.y_label(y): self.lp_values[(history, y)]
                    for y in range(model.ny) if (history, y) in self.lp_values
                }
            entries.append(entry)
        return {'scheme': self.scheme, 'horizon': self.horizon, 'entries': entries}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ManipulationPlan":
        """
        Rebuild a plan exported by to_dict (LP values are not restored).

        Raises:
            DomainError: If the document is not a plan export
        """
        try:
            tables = {
                tuple(tuple(int(v) for v in triple) for triple in entry['history']):
                    np.array(entry['table'], dtype=float)
                for entry in data['entries']
            }
            return cls(str(data['scheme']), int(data['horizon']), tables)
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"Not a manipulation plan document: {e}")


@dataclass
class DesignValueTable:
    """W per conditioning history (ex ante) and W^Y per (history, y) (interim)."""

    ex_ante: Dict[JointHistory, float] = field(default_factory=dict)
    interim: Dict[InterimKey, float] = field(default_factory=dict)

    def aggregate(self, model: PomdpModel, history: JointHistory) -> float:
        """sum_y W^Y(history, y) q^Y(y | history); 0 past the horizon."""
        if len(history) >= model.horizon:
            return 0.0
        weights = reference_hidden(model, history)
        return float(sum(
            self.interim[(history, y)] * weights[y] for y in range(model.ny) if weights[y] > 0.0
        ))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ex_ante': [{'history': [list(t) for t in h], 'value': v} for h, v in sorted(self.ex_ante.items())],
            'interim': [
                {'history': [list(t) for t in h], 'y': y, 'value': v}
                for (h, y), v in sorted(self.interim.items())
            ],
        }


def design_histories(model: PomdpModel, policy: ActionRule, cap: int = DEFAULT_DESIGN_CAP) -> List[JointHistory]:
    """
    Every conditioning history of stage < N whose hidden path is reachable,
    in depth-first order. Observations are not pruned: a design may move
    mass onto observations the true kernel never produces.

    Raises:
        ResourceCapError: If more than cap histories are found
    """
    found: List[JointHistory] = []

    def visit(history: JointHistory) -> None:
        if len(found) >= cap:
            raise ResourceCapError(f"Design history count exceeded cap of {cap}", cap)
        found.append(history)
        if len(history) + 1 >= model.horizon:
            return
        for child in _children(model, policy, history):
            visit(child)

    visit(())
    return found


def snap_joint(table: np.ndarray, hidden: np.ndarray) -> np.ndarray:
    """
    Clear simplex round-off from a joint design: cells at or below
    NEGLIGIBLE_MASS and columns of hidden states without reference mass are
    zeroed, then every column is rescaled to its Y-marginal.
    """
    table = np.where(table > NEGLIGIBLE_MASS, table, 0.0)
    table[:, hidden <= 0.0] = 0.0
    sums = table.sum(axis=0)
    scale = np.divide(hidden, sums, out=np.zeros_like(sums), where=sums > 0.0)
    return table * scale


def snap_conditional(row: np.ndarray) -> np.ndarray:
    """Same for one conditional law of X: tiny entries dropped, row back on the simplex."""
    row = np.where(row > NEGLIGIBLE_MASS, row, 0.0)
    return row / row.sum()


def _children(model: PomdpModel, policy: ActionRule, history: JointHistory) -> List[JointHistory]:
    weights = reference_hidden(model, history)
    children = []
    for x in range(model.nx):
        a = policy.action(observable_history(history, x))
        for y in range(model.ny):
            if weights[y] > 0.0:
                children.append(history + ((x, y, a),))
    return children


def _design_lp(coefficients: np.ndarray, reference: Optional[np.ndarray], weight: float,
               A_eq: np.ndarray, b_eq: np.ndarray, names: List[str]) -> StageLinearProgram:
    """
    minimize coefficients @ p + weight * sum |p - reference| under A_eq p = b_eq, p >= 0.
    """
    size = coefficients.size
    costs = coefficients.astype(float).copy()
    tracked: List[int] = []
    if reference is not None:
        for j in range(size):
            if reference[j] > 0.0:
                tracked.append(j)
            else:
                costs[j] += weight

    extra = len(tracked)
    a_ub = np.zeros((2 * extra, size + extra))
    b_ub = np.zeros(2 * extra)
    for k, j in enumerate(tracked):
        # p_j - t_k <= ref_j and -p_j - t_k <= -ref_j
        a_ub[2 * k, j], a_ub[2 * k, size + k], b_ub[2 * k] = 1.0, -1.0, reference[j]
        a_ub[2 * k + 1, j], a_ub[2 * k + 1, size + k], b_ub[2 * k + 1] = -1.0, -1.0, -reference[j]

    return StageLinearProgram(
        c=np.concatenate([costs, np.full(extra, weight)]),
        A_eq=np.hstack([A_eq, np.zeros((A_eq.shape[0], extra))]),
        b_eq=b_eq,
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=tuple((0.0, None) for _ in range(size + extra)),
        names=tuple(names + [f"t[{names[j]}]" for j in tracked]),
    )


def _as_continuation(model: PomdpModel, continuation: Any) -> Callable[[int, int], float]:
    if continuation is None:
        return lambda x, y: 0.0
    if isinstance(continuation, np.ndarray):
        return lambda x, y: float(continuation[x, y])

    def lookup(x: int, y: int) -> float:
        try:
            return float(continuation[(x, y)])
        except KeyError:
            raise DomainError(f"Continuation value missing at (x={model.x_label(x)}, y={model.y_label(y)})")

    return lookup


def build_stage_lp_ex_ante(model: PomdpModel, policy: ActionRule, history: JointHistory,
                           continuation: Optional[Mapping[Tuple[int, int], float]] = None) -> StageLinearProgram:
    """
    Stage LP of the ex ante scheme at a conditioning history.

    Variables p[x, y] (index x * |Y| + y) followed by one auxiliary per cell
    of positive reference mass. The objective coefficient of p[x, y] is
    alpha^n r(x, y, g(h, x)) + W(x, y); auxiliaries carry alpha^n. Rows: total
    mass one, then one Y-marginal row per hidden state.

    Args:
        continuation: W_{N-n-1} per (x, y) for every y of positive reference
            mass; None at the last stage

    Raises:
        DomainError: If a needed continuation entry is missing
    """
    n = len(history)
    nx, ny = model.nx, model.ny
    weight = model.im_discount ** n
    reference = reference_joint(model, history)
    hidden = reference_hidden(model, history)
    value_of = _as_continuation(model, continuation)

    coefficients = np.zeros((nx, ny))
    for x in range(nx):
        a = policy.action(observable_history(history, x))
        for y in range(ny):
            coefficients[x, y] = weight * float(model.im_cost[x, y, a])
            if hidden[y] > 0.0:
                coefficients[x, y] += value_of(x, y)

    a_eq = np.zeros((1 + ny, nx * ny))
    a_eq[0] = 1.0
    for y in range(ny):
        a_eq[1 + y, y::ny] = 1.0
    b_eq = np.concatenate([[1.0], hidden])
    names = [f"p[{model.x_label(x)},{model.y_label(y)}]" for x in range(nx) for y in range(ny)]
    return _design_lp(
        coefficients.ravel(), None if reference is None else reference.ravel(), weight, a_eq, b_eq, names
    )


def build_stage_lp_interim(model: PomdpModel, policy: ActionRule, history: JointHistory, y: int,
                           continuation: Optional[Mapping[int, float]] = None) -> StageLinearProgram:
    """
    Interim stage LP at (history, y): variables eta[x] on the simplex, cost
    alpha^n r(x, y, g(h, x)) + W_agg(x) plus alpha^n sum_x |eta[x] - psi(x | y)|.
    """
    n = len(history)
    weight = model.im_discount ** n
    coefficients = np.zeros(model.nx)
    for x in range(model.nx):
        a = policy.action(observable_history(history, x))
        coefficients[x] = weight * float(model.im_cost[x, y, a])
        if continuation is not None:
            try:
                coefficients[x] += float(continuation[x])
            except KeyError:
                raise DomainError(f"Continuation value missing at x={model.x_label(x)}")
    names = [f"eta[{model.x_label(x)}|{model.y_label(y)}]" for x in range(model.nx)]
    return _design_lp(
        coefficients, conditional_reference(model, history, y), weight,
        np.ones((1, model.nx)), np.ones(1), names,
    )


def _solve_design_lp(lp: StageLinearProgram, where: str) -> Tuple[float, np.ndarray]:
    result = lp_solve(lp)
    if not result.is_optimal:
        logger.error(f"Design LP at {where} is {result.status}:\n{lp.to_text()}")
        raise DesignError(f"Design LP at {where} is {result.status}")
    return result.value, result.x


def solve_ex_ante(model: PomdpModel, policy: ActionRule,
                  cap: int = DEFAULT_DESIGN_CAP) -> Tuple[ManipulationPlan, DesignValueTable, float]:
    """
    Backward recursion of the ex ante design.

    Returns:
        The plan, W per conditioning history, and W_N (the stage-0 LP value)

    Raises:
        DesignError: If a stage LP is infeasible or unbounded
        ResourceCapError: If more than cap LPs would be solved
    """
    tables: Dict[JointHistory, np.ndarray] = {}
    values = DesignValueTable()
    size = model.nx * model.ny
    solved = 0

    def design(history: JointHistory) -> float:
        nonlocal solved
        solved += 1
        if solved > cap:
            raise ResourceCapError(f"Ex ante design exceeded cap of {cap} stage problems", cap)
        continuation = None
        if len(history) + 1 < model.horizon:
            continuation = {}
            for child in _children(model, policy, history):
                x, y, _ = child[-1]
                continuation[(x, y)] = design(child)
        value, point = _solve_design_lp(build_stage_lp_ex_ante(model, policy, history, continuation), str(history))
        tables[history] = snap_joint(point[:size].reshape(model.nx, model.ny), reference_hidden(model, history))
        values.ex_ante[history] = value
        logger.debug(f"W at {history} = {value:.12g}")
        return value

    w_total = design(())
    plan = ManipulationPlan("ex_ante", model.horizon, tables, dict(values.ex_ante))
    logger.info(f"Ex ante design solved {solved} stage problems, W_N = {w_total:.12g}")
    return plan, values, w_total


def solve_interim(model: PomdpModel, policy: ActionRule,
                  cap: int = DEFAULT_DESIGN_CAP) -> Tuple[ManipulationPlan, DesignValueTable]:
    """
    Backward recursion over (history, y). Rows of hidden states with zero
    reference mass take the observation law q^X(. | history) and get no value.
    """
    tables: Dict[JointHistory, np.ndarray] = {}
    values = DesignValueTable()
    solved = 0

    def design(history: JointHistory) -> float:
        nonlocal solved
        hidden = reference_hidden(model, history)
        last_stage = len(history) + 1 >= model.horizon
        rows = np.zeros((model.ny, model.nx))
        for y in range(model.ny):
            if hidden[y] <= 0.0:
                rows[y] = reference_observable(model, history)
                continue
            solved += 1
            if solved > cap:
                raise ResourceCapError(f"Interim design exceeded cap of {cap} stage problems", cap)
            continuation = None
            if not last_stage:
                continuation = {}
                for x in range(model.nx):
                    a = policy.action(observable_history(history, x))
                    continuation[x] = design(history + ((x, y, a),))
            lp = build_stage_lp_interim(model, policy, history, y, continuation)
            value, point = _solve_design_lp(lp, f"{history}, y={y}")
            rows[y] = snap_conditional(point[:model.nx])
            values.interim[(history, y)] = value
        tables[history] = rows
        return values.aggregate(model, history)

    design(())
    plan = ManipulationPlan("interim", model.horizon, tables, dict(values.interim))
    logger.info(f"Interim design solved {solved} stage problems")
    return plan, values


def disintegrate(plan: ManipulationPlan, model: PomdpModel) -> ManipulationPlan:
    """
    Factor every joint design into phi(x | y) = p(x, y) / p^Y(y). Rows with
    p^Y(y) <= 1e-12 take the reference slice psi(. | y).

    Raises:
        DomainError: If the plan is not ex ante or not stagewise consistent
    """
    if plan.scheme != "ex_ante":
        raise DomainError("Only ex ante plans can be disintegrated")
    report = check_consistency(plan, model)
    if not report.ok:
        raise DomainError(f"Cannot disintegrate an inconsistent plan: {report}")

    tables: Dict[JointHistory, np.ndarray] = {}
    for history, joint in plan.tables.items():
        marginal = joint.sum(axis=0)
        rows = np.zeros((model.ny, model.nx))
        for y in range(model.ny):
            if marginal[y] > DISINTEGRATION_THRESHOLD:
                rows[y] = joint[:, y] / marginal[y]
            else:
                fallback = conditional_reference(model, history, y)
                rows[y] = reference_observable(model, history) if fallback is None else fallback
        tables[history] = rows
    return ManipulationPlan("interim", plan.horizon, tables)


def stage_manipulation_cost(model: PomdpModel, plan: ManipulationPlan, history: JointHistory) -> float:
    """rho_n at a history: L1 distance to the reference law (0 at stage 0 without Q0X)."""
    reference = reference_joint(model, history)
    if reference is None:
        return 0.0
    return tv_l1_distance(plan.joint(model, history), reference)


def evaluate_im_objective(model: PomdpModel, policy: ActionRule, plan: ManipulationPlan) -> float:
    """
    Forward expectation of sum_k alpha^k (r + rho_k) under the path law the
    plan generates, in nested form.

    Raises:
        DomainError: If the plan is undefined at a reachable history
    """

    def nested(history: JointHistory) -> float:
        n = len(history)
        if n >= model.horizon:
            return 0.0
        weight = model.im_discount ** n
        joint = plan.joint(model, history)
        total = weight * stage_manipulation_cost(model, plan, history)
        for x, y in zip(*np.nonzero(joint > NEGLIGIBLE_MASS)):
            x, y = int(x), int(y)
            a = policy.action(observable_history(history, x))
            total += float(joint[x, y]) * (
                weight * float(model.im_cost[x, y, a]) + nested(history + ((x, y, a),))
            )
        return total

    return nested(())


@dataclass(frozen=True)
class ConsistencyReport:
    residuals: Dict[JointHistory, float]
    tolerance: float = CONSISTENCY_TOLERANCE

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def worst_history(self) -> Optional[JointHistory]:
        if not self.residuals:
            return None
        return max(self.residuals, key=lambda h: (self.residuals[h], h))

    @property
    def ok(self) -> bool:
        return self.max_residual <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        worst = self.worst_history
        return {
            'ok': self.ok,
            'max_residual': self.max_residual,
            'worst_history': None if worst is None else [list(t) for t in worst],
        }

    def __str__(self) -> str:
        return f"max residual {self.max_residual:.3g} at {self.worst_history}"


def check_consistency(plan: ManipulationPlan, model: PomdpModel) -> ConsistencyReport:
    """
    Max-norm violation per history: of the Y-marginal and total mass
    equalities (ex ante) or of the row sums (interim).
    """
    residuals: Dict[JointHistory, float] = {}
    for history, table in plan.tables.items():
        if plan.scheme == "ex_ante":
            marginal_gap = np.abs(table.sum(axis=0) - reference_hidden(model, history))
            residuals[history] = float(max(marginal_gap.max(), abs(table.sum() - 1.0)))
        else:
            residuals[history] = float(np.abs(table.sum(axis=1) - 1.0).max())
    return ConsistencyReport(residuals)


def perturb_plan(plan: ManipulationPlan, model: PomdpModel, rng: np.random.Generator,
                 strength: float = 0.5) -> ManipulationPlan:
    """
    Random stagewise-consistent neighbour: every X-given-Y slice is mixed
    with a Dirichlet draw, so every Y-marginal stays where it was.
    """
    if not 0.0 <= strength <= 1.0:
        raise DomainError(f"Perturbation strength must lie in [0, 1], got {strength}")
    tables: Dict[JointHistory, np.ndarray] = {}
    for history in plan.histories():
        table = np.array(plan.tables[history])
        if plan.scheme == "ex_ante":
            hidden = reference_hidden(model, history)
            table = snap_joint(table, hidden)
            marginal = table.sum(axis=0)
            for y in range(model.ny):
                if marginal[y] > 0.0:
                    noise = rng.dirichlet(np.ones(model.nx))
                    table[:, y] = marginal[y] * ((1.0 - strength) * table[:, y] / marginal[y] + strength * noise)
            table = snap_joint(table, hidden)
        else:
            for y in range(model.ny):
                noise = rng.dirichlet(np.ones(model.nx))
                table[y] = snap_conditional((1.0 - strength) * table[y] + strength * noise)
        tables[history] = table
    return ManipulationPlan(plan.scheme, plan.horizon, tables)


def relation_residual(ex_ante_values: DesignValueTable, interim_values: DesignValueTable,
                      model: PomdpModel) -> float:
    """
    max over histories of |W(h) - sum_y W^Y(h, y) q^Y(y | h)|.

    Raises:
        DomainError: If the interim table misses a history the ex ante table has
    """
    gaps = []
    for history, w in ex_ante_values.ex_ante.items():
        try:
            gaps.append(abs(w - interim_values.aggregate(model, history)))
        except KeyError:
            raise DomainError(f"Interim values missing at history {history}")
    return max(gaps, default=0.0)
