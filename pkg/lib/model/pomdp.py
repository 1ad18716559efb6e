"""
Finite POMDP problem instance shared by the decision-maker and the
information manipulator, together with its validation and the scalar
machinery (utility, kernel marginals) every other module builds on.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lib.errors import DomainError

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-9

UTILITY_FAMILIES = ("identity", "exponential", "power")


def _frozen_array(values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LabeledPoint:
    """A point of a finite space with an optional real embedding."""

    label: str
    value: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'label': self.label, 'value': self.value}


@dataclass(frozen=True)
class UtilitySpec:
    """
    Utility U applied to the accumulated discounted cost.

    Families:
        identity:     U(s) = s
        exponential:  U(s) = (exp(curvature * s) - 1) / curvature, curvature != 0
        power:        U(s) = s ** exponent, exponent > 0
    """

    family: str = "identity"
    curvature: float = 0.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.family not in UTILITY_FAMILIES:
            raise DomainError(f"Unknown utility family: {self.family}")
        if self.family == "exponential" and self.curvature == 0.0:
            raise DomainError("Exponential utility needs a nonzero curvature")
        if self.family == "power" and not self.exponent > 0.0:
            raise DomainError(f"Power utility needs a positive exponent, got {self.exponent}")

    def __call__(self, s: float) -> float:
        return utility_eval(self, s)

    def to_dict(self) -> Dict[str, Any]:
        params: Dict[str, float] = {}
        if self.family == "exponential":
            params['curvature'] = self.curvature
        elif self.family == "power":
            params['exponent'] = self.exponent
        return {'family': self.family, 'params': params}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UtilitySpec":
        family = data.get('family', 'identity')
        params = data.get('params', {})
        return cls(
            family=family,
            curvature=float(params.get('curvature', 0.0)),
            exponent=float(params.get('exponent', 1.0)),
        )


def utility_eval(u: UtilitySpec, s: float) -> float:
    """
    Evaluate U(s).

    Raises:
        DomainError: If s is negative
    """
    if s < 0.0:
        raise DomainError(f"Utility argument must be nonnegative, got {s}")
    if u.family == "identity":
        return float(s)
    if u.family == "exponential":
        return math.expm1(u.curvature * s) / u.curvature
    return float(s) ** u.exponent


def certainty_equivalent(u: UtilitySpec, value: float) -> float:
    """
    Invert the utility: the accumulated cost whose utility equals `value`.

    Raises:
        DomainError: If value lies outside the range of U on [0, inf)
    """
    if u.family == "identity":
        if value < 0.0:
            raise DomainError(f"No certainty equivalent for {value}")
        return float(value)
    if u.family == "exponential":
        argument = u.curvature * value
        if argument <= -1.0 or value < 0.0:
            raise DomainError(f"No certainty equivalent for {value}")
        return math.log1p(argument) / u.curvature
    if value < 0.0:
        raise DomainError(f"No certainty equivalent for {value}")
    return float(value) ** (1.0 / u.exponent)


@dataclass(frozen=True)
class DistributionXY:
    """Probability table p[x, y] over the product of observable and hidden states."""

    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 2:
            raise DomainError(f"Joint distribution must be a 2-d table, got shape {table.shape}")
        if np.any(table < -MASS_TOLERANCE):
            raise DomainError("Joint distribution has negative entries")
        if abs(table.sum() - 1.0) > MASS_TOLERANCE:
            raise DomainError(f"Joint distribution mass is {table.sum():.12g}, expected 1")
        table = np.clip(table, 0.0, None)
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.table.shape

    def marginal_x(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.table.sum(axis=0)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_model; violations are data, never exceptions."""

    violations: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {'ok': self.ok, 'violations': list(self.violations)}

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(self.violations)


@dataclass(frozen=True)
class PomdpModel:
    """
    Finite DIMG instance.

    The kernel table is indexed q[x, y, a, x', y']; cost tables are indexed
    [x, y, a]. Feasible actions are stored per observable state as sorted
    action indices.
    """

    observable_states: Tuple[LabeledPoint, ...]
    hidden_states: Tuple[LabeledPoint, ...]
    actions: Tuple[LabeledPoint, ...]
    feasible_actions: Tuple[Tuple[int, ...], ...]
    kernel: np.ndarray
    initial_hidden_law: np.ndarray
    dm_cost: np.ndarray
    im_cost: np.ndarray
    dm_discount: float
    im_discount: float
    horizon: int
    utility: UtilitySpec = field(default_factory=UtilitySpec)
    initial_observable_law: Optional[np.ndarray] = None
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, 'observable_states', tuple(self.observable_states))
        object.__setattr__(self, 'hidden_states', tuple(self.hidden_states))
        object.__setattr__(self, 'actions', tuple(self.actions))
        object.__setattr__(
            self, 'feasible_actions',
            tuple(tuple(sorted(int(a) for a in row)) for row in self.feasible_actions)
        )
        for name in ('kernel', 'initial_hidden_law', 'dm_cost', 'im_cost'):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        if self.initial_observable_law is not None:
            object.__setattr__(
                self, 'initial_observable_law', _frozen_array(self.initial_observable_law)
            )

    @property
    def nx(self) -> int:
        return len(self.observable_states)

    @property
    def ny(self) -> int:
        return len(self.hidden_states)

    @property
    def na(self) -> int:
        return len(self.actions)

    @property
    def c_bar(self) -> float:
        """Sup norm of the decision-maker's stage cost."""
        return float(np.max(self.dm_cost)) if self.dm_cost.size else 0.0

    def is_feasible(self, x: int, a: int) -> bool:
        return 0 <= x < self.nx and a in self.feasible_actions[x]

    def require_feasible(self, x: int, a: int) -> None:
        if not self.is_feasible(x, a):
            raise DomainError(f"Action {a} is not feasible at observable state {x}")

    def transition(self, x: int, y: int, a: int) -> np.ndarray:
        """Joint law of the next (x', y') as an (nx, ny) table."""
        self.require_feasible(x, a)
        return self.kernel[x, y, a]

    def initial_joint_law(self) -> np.ndarray:
        """Q0 = Q0X x Q0Y as an (nx, ny) table."""
        if self.initial_observable_law is None:
            raise DomainError("Model has no initial observable law Q0X")
        return np.outer(self.initial_observable_law, self.initial_hidden_law)

    def x_label(self, x: int) -> str:
        return self.observable_states[x].label

    def y_label(self, y: int) -> str:
        return self.hidden_states[y].label

    def a_label(self, a: int) -> str:
        return self.actions[a].label

    def __repr__(self) -> str:
        return (
            f"PomdpModel(name='{self.name}', |X|={self.nx}, |Y|={self.ny}, "
            f"|A|={self.na}, N={self.horizon})"
        )


def kernel_x_marginal(model: PomdpModel, x: int, y: int, a: int) -> np.ndarray:
    """q^X(. | x, y, a): the law of the next observable state."""
    return model.transition(x, y, a).sum(axis=1)


def kernel_y_marginal(model: PomdpModel, x: int, y: int, a: int) -> np.ndarray:
    """q^Y(. | x, y, a): the law of the next hidden state."""
    return model.transition(x, y, a).sum(axis=0)


def _check_law(name: str, law: np.ndarray, size: int, violations: List[str]) -> None:
    if law.shape != (size,):
        violations.append(f"{name} has shape {law.shape}, expected ({size},)")
        return
    if np.any(law < -MASS_TOLERANCE) or np.any(law > 1.0 + MASS_TOLERANCE):
        violations.append(f"{name} has entries outside [0, 1]")
    if abs(law.sum() - 1.0) > MASS_TOLERANCE:
        violations.append(f"{name} sums to {law.sum():.12g}")


def validate_model(model: PomdpModel) -> ValidationReport:
    """
    Check every PomdpModel invariant.

    Returns:
        ValidationReport listing each violation with the offending row or field
    """
    violations: List[str] = []
    nx, ny, na = model.nx, model.ny, model.na

    if min(nx, ny, na) == 0:
        violations.append("state and action spaces must be nonempty")
        return ValidationReport(tuple(violations))

    if len(model.feasible_actions) != nx:
        violations.append(
            f"feasible_actions has {len(model.feasible_actions)} rows, expected {nx}"
        )
    else:
        for x, row in enumerate(model.feasible_actions):
            if not row:
                violations.append(f"feasible_actions({model.x_label(x)}) is empty")
            elif row[0] < 0 or row[-1] >= na:
                violations.append(f"feasible_actions({model.x_label(x)}) has unknown action indices")

    if model.kernel.shape != (nx, ny, na, nx, ny):
        violations.append(f"kernel has shape {model.kernel.shape}, expected {(nx, ny, na, nx, ny)}")
    else:
        for x in range(nx):
            for y in range(ny):
                for a in range(na):
                    row = model.kernel[x, y, a]
                    where = (
                        f"kernel row (x={model.x_label(x)}, y={model.y_label(y)}, "
                        f"a={model.a_label(a)})"
                    )
                    if np.any(row < -MASS_TOLERANCE) or np.any(row > 1.0 + MASS_TOLERANCE):
                        violations.append(f"{where} has entries outside [0, 1]")
                    if abs(row.sum() - 1.0) > MASS_TOLERANCE:
                        violations.append(f"{where} sums to {row.sum():.12g}")

    _check_law("initial_hidden_law", model.initial_hidden_law, ny, violations)
    if model.initial_observable_law is not None:
        _check_law("initial_observable_law", model.initial_observable_law, nx, violations)

    for name in ('dm_cost', 'im_cost'):
        table = getattr(model, name)
        if table.shape != (nx, ny, na):
            violations.append(f"{name} has shape {table.shape}, expected {(nx, ny, na)}")
        elif not np.all(np.isfinite(table)):
            violations.append(f"{name} has non-finite entries")
        elif np.any(table < 0.0):
            x, y, a = (int(i) for i in np.argwhere(table < 0.0)[0])
            violations.append(
                f"{name}(x={model.x_label(x)}, y={model.y_label(y)}, a={model.a_label(a)}) is negative"
            )

    if not 0.0 < model.dm_discount < 1.0:
        violations.append(f"dm_discount must lie in (0, 1), got {model.dm_discount}")
    if not 0.0 < model.im_discount <= 1.0:
        violations.append(f"im_discount must lie in (0, 1], got {model.im_discount}")
    if int(model.horizon) != model.horizon or model.horizon < 1:
        violations.append(f"horizon must be a positive integer, got {model.horizon}")

    report = ValidationReport(tuple(violations))
    if report.ok:
        logger.debug(f"Model {model.name} passed validation")
    else:
        logger.debug(f"Model {model.name} has {len(violations)} violations")
    return report


def full_action_sets(nx: int, na: int) -> Tuple[Tuple[int, ...], ...]:
    """Every action feasible in every observable state."""
    return tuple(tuple(range(na)) for _ in range(nx))


def uniform_action_grid(low: float, high: float, points: int, open_interval: bool = True,
                        prefix: str = "a") -> Tuple[LabeledPoint, ...]:
    """
    Uniform grid over an action interval.

    With open_interval the endpoints are excluded: points k/(points+1) scaled to
    [low, high] for k = 1..points.
    """
    if points < 1:
        raise DomainError(f"Action grid needs at least one point, got {points}")
    if open_interval:
        values = [low + (high - low) * k / (points + 1) for k in range(1, points + 1)]
    elif points == 1:
        values = [low]
    else:
        values = [low + (high - low) * k / (points - 1) for k in range(points)]
    return tuple(LabeledPoint(f"{prefix}={v:.6g}", float(v)) for v in values)


def labeled_space(labels: Sequence[str], values: Optional[Sequence[float]] = None) -> Tuple[LabeledPoint, ...]:
    if values is None:
        return tuple(LabeledPoint(label) for label in labels)
    return tuple(LabeledPoint(label, float(v)) for label, v in zip(labels, values))
