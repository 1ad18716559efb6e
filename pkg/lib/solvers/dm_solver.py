"""
Exact backward induction for the decision-maker's risk-sensitive POMDP.

The MDP state (x, mu, z) is reached through finitely many observable
histories, so values and actions are tabulated per history key
(x0, a0, x1, ..., x_n). Empty information states belong to unreachable
branches: they are valued 0 and take the lowest feasible action, and their
subtrees are still filled in so the policy is total.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple

from lib.errors import DomainError, ResourceCapError
from lib.filtering.info_state import InformationState, initial_state, update
from lib.model.paths import ObservableHistory, expected_utility, true_stage_law
from lib.model.pomdp import PomdpModel, UtilitySpec, utility_eval

logger = logging.getLogger(__name__)

DEFAULT_HISTORY_CAP = 200_000
TIE_TOLERANCE = 1e-12

ContinuationValue = Callable[[ObservableHistory, InformationState, float], float]


@dataclass(frozen=True)
class Policy:
    """Deterministic history-dependent policy: history key -> action index."""

    actions: Dict[ObservableHistory, int]
    horizon: int

    def action(self, history: ObservableHistory) -> int:
        try:
            return self.actions[tuple(history)]
        except KeyError:
            raise DomainError(f"Policy is undefined at history {tuple(history)}")

    def __contains__(self, history: ObservableHistory) -> bool:
        return tuple(history) in self.actions

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_rule(cls, model: PomdpModel, rule: Callable[[ObservableHistory], int],
                  cap: int = DEFAULT_HISTORY_CAP) -> "Policy":
        """
        Tabulate a rule on every history its own actions can generate.

        Raises:
            DomainError: If the rule picks an infeasible action
            ResourceCapError: If more than cap histories are generated
        """
        actions: Dict[ObservableHistory, int] = {}

        def visit(history: ObservableHistory) -> None:
            if len(history) // 2 == model.horizon:
                return
            if len(actions) >= cap:
                raise ResourceCapError(f"Policy tabulation exceeded cap of {cap} histories", cap)
            a = int(rule(history))
            model.require_feasible(history[-1], a)
            actions[history] = a
            for x_next in range(model.nx):
                visit(history + (a, x_next))

        for x0 in range(model.nx):
            visit((x0,))
        return cls(actions, model.horizon)

    def items(self) -> Iterator[Tuple[ObservableHistory, int]]:
        return iter(sorted(self.actions.items()))

    def to_dict(self, model: Optional[PomdpModel] = None) -> Dict[str, object]:
        entries = []
        for history, a in self.items():
            entry = {'history': list(history), 'action': a}
            if model is not None:
                entry['action_label'] = model.a_label(a)
            entries.append(entry)
        return {'horizon': self.horizon, 'policy': entries}


@dataclass
class ValueTable:
    """V per observable history; the stage of a key counts the actions taken."""

    values: Dict[ObservableHistory, float] = field(default_factory=dict)

    def __getitem__(self, history: ObservableHistory) -> float:
        return self.values[tuple(history)]

    def __len__(self) -> int:
        return len(self.values)

    def stage(self, n: int) -> Dict[ObservableHistory, float]:
        return {h: v for h, v in self.values.items() if len(h) // 2 == n}

    def to_dict(self) -> Dict[str, object]:
        return {'values': [{'history': list(h), 'value': v} for h, v in sorted(self.values.items())]}


def terminal_value(u: UtilitySpec, mu: InformationState) -> float:
    """V_0(x, mu, z) = sum over atoms of U(s) w."""
    return float(sum(utility_eval(u, s) * w for _, s, w in mu.atoms))


def bellman_backup(model: PomdpModel, history: ObservableHistory, mu: InformationState, z: float,
                   value_next: ContinuationValue) -> Tuple[float, int]:
    """
    min over a in D(x_n) of sum_{x'} value_next(h + (a, x'), update(...), beta z).

    Ties go to the lowest action index. An empty mu is worth 0 and takes the
    lowest feasible action.

    Raises:
        DomainError: If D(x_n) is empty
    """
    x = history[-1]
    feasible = model.feasible_actions[x]
    if not feasible:
        raise DomainError(f"No feasible action at observable state {model.x_label(x)}")
    if mu.is_empty():
        return 0.0, feasible[0]

    best_value, best_action = None, feasible[0]
    for a in feasible:
        total = 0.0
        for x_next in range(model.nx):
            mu_next = update(model, x, a, x_next, mu, z)
            total += value_next(history + (a, x_next), mu_next, model.dm_discount * z)
        if best_value is None or total < best_value - TIE_TOLERANCE * abs(best_value):
            best_value, best_action = total, a
    return float(best_value), best_action


def solve(model: PomdpModel, cap: int = DEFAULT_HISTORY_CAP) -> Tuple[Policy, ValueTable, Dict[int, float]]:
    """
    Backward induction over all observable histories.

    Returns:
        The optimal policy, the value table and J_N(x0) for every x0

    Raises:
        ResourceCapError: If more than cap histories are visited
    """
    actions: Dict[ObservableHistory, int] = {}
    table = ValueTable()
    visited = 0

    def value(history: ObservableHistory, mu: InformationState, z: float) -> float:
        nonlocal visited
        visited += 1
        if visited > cap:
            raise ResourceCapError(f"Backward induction exceeded cap of {cap} histories", cap)
        if len(history) // 2 == model.horizon:
            v = terminal_value(model.utility, mu)
        elif mu.is_empty():
            v, a = 0.0, model.feasible_actions[history[-1]][0]
            actions[history] = a
            for x_next in range(model.nx):
                value(history + (a, x_next), mu, model.dm_discount * z)
        else:
            v, a = bellman_backup(model, history, mu, z, value)
            actions[history] = a
        table.values[history] = v
        return v

    start = initial_state(model)
    values = {x0: value((x0,), start, 1.0) for x0 in range(model.nx)}
    logger.info(f"Solved {model!r} over {visited} histories")
    return Policy(actions, model.horizon), table, values


def policy_value(model: PomdpModel, policy: Policy, x0: int) -> float:
    """V_{N,pi}(x0, Q0Y x delta_0, 1) by chaining the fixed-policy operators."""

    def value(history: ObservableHistory, mu: InformationState, z: float) -> float:
        if len(history) // 2 == model.horizon:
            return terminal_value(model.utility, mu)
        if mu.is_empty():
            return 0.0
        a = policy.action(history)
        return sum(
            value(history + (a, x_next), update(model, history[-1], a, x_next, mu, z), model.dm_discount * z)
            for x_next in range(model.nx)
        )

    return value((x0,), initial_state(model), 1.0)


def cost_iteration_check(model: PomdpModel, policy: Policy) -> Dict[int, Tuple[float, float]]:
    """
    (lhs, rhs) per initial observation: the chained operator value and the
    direct path expectation of U(sum beta^k c).
    """
    return {
        x0: (policy_value(model, policy, x0),
             expected_utility(model, policy, true_stage_law(model, initial_x=x0)))
        for x0 in range(model.nx)
    }


def discrete_example_policy(c_hat: float, tau: float, initial_hidden_law: Sequence[float],
                            y_values: Sequence[float], a0: float, x1: int) -> float:
    """
    Closed-form stage-1 action of the two-state switching example.

    x1 indexes the observable state x^{i,j} as 2*i + j (0-based), the
    layout of build_discrete_example.

    Raises:
        DomainError: If x1 has zero probability under a0
    """
    if not 0 <= x1 < 4:
        raise DomainError(f"Observable index must lie in 0..3, got {x1}")
    i, j = divmod(x1, 2)
    omega = tau if j == 0 else 1.0 - tau
    phi = [omega if k == i else 0.0 for k in range(2)]
    q1, q2 = initial_hidden_law
    m1 = phi[0] * (1.0 - a0) * q1 + phi[1] * a0 * q2
    m2 = phi[0] * a0 * q1 + phi[1] * (1.0 - a0) * q2
    if m1 + m2 <= 0.0:
        raise DomainError("Observation has zero probability: the stage-1 action is undefined")
    return -c_hat * (y_values[0] * m1 + y_values[1] * m2) / (2.0 * (m1 + m2))
