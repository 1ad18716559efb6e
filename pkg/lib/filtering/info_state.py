"""
Unnormalized information states over (hidden state, accumulated cost).

A state is a finite measure stored as atoms (y, s, w). The update operator
moves every atom through the kernel row of the realized observation and
shifts its cost coordinate by the discounted stage cost; nothing is ever
normalized, so the mass of mu_n is the product of the normalization
constants D_1..D_n.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from lib.errors import DomainError, ResourceCapError
from lib.model.paths import NEGLIGIBLE_MASS, ActionRule, JointHistory, StageLaw
from lib.model.pomdp import PomdpModel

logger = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-12
DEFAULT_ORACLE_CAP = 1_000_000

Atom = Tuple[int, float, float]


def _merge_atoms(atoms: Iterable[Atom]) -> Tuple[Atom, ...]:
    """Sort by (y, s), merge keys within MERGE_TOLERANCE and drop zero weights."""
    merged: List[List[float]] = []
    for y, s, w in sorted((int(y), float(s), float(w)) for y, s, w in atoms if w > 0.0):
        if merged and merged[-1][0] == y and abs(s - merged[-1][1]) <= MERGE_TOLERANCE:
            last = merged[-1]
            total = last[2] + w
            last[1] = (last[1] * last[2] + s * w) / total
            last[2] = total
        else:
            merged.append([y, s, w])
    return tuple((int(y), s, w) for y, s, w in merged)


@dataclass(frozen=True)
class InformationState:
    """Finite measure on Y x [0, inf) kept as sorted, merged atoms."""

    atoms: Tuple[Atom, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'atoms', _merge_atoms(self.atoms))

    @property
    def mass(self) -> float:
        return float(sum(w for _, _, w in self.atoms))

    def is_empty(self) -> bool:
        return not self.atoms

    def marginal_y(self, ny: int) -> np.ndarray:
        marginal = np.zeros(ny)
        for y, _, w in self.atoms:
            marginal[y] += w
        return marginal

    def scale(self, factor: float) -> "InformationState":
        if factor < 0.0:
            raise DomainError(f"Cannot scale a measure by {factor}")
        return InformationState(tuple((y, s, w * factor) for y, s, w in self.atoms))

    def normalized(self) -> "InformationState":
        mass = self.mass
        if mass <= 0.0:
            raise DomainError("Cannot normalize an empty information state")
        return self.scale(1.0 / mass)

    def __add__(self, other: "InformationState") -> "InformationState":
        return InformationState(self.atoms + other.atoms)

    def max_difference(self, other: "InformationState") -> float:
        """Largest atomwise weight gap, matching atoms by (y, s) within tolerance."""
        signed = [(y, s, w) for y, s, w in self.atoms] + [(y, s, -w) for y, s, w in other.atoms]
        if not signed:
            return 0.0
        table = np.array(signed)
        y, s, w = table[np.lexsort((table[:, 1], table[:, 0]))].T
        starts = np.flatnonzero(np.concatenate([[True], (np.diff(y) != 0) | (np.diff(s) > MERGE_TOLERANCE)]))
        return float(np.abs(np.add.reduceat(w, starts)).max())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'atoms': [{'y': y, 's': s, 'w': w} for y, s, w in self.atoms],
            'mass': self.mass,
        }

    def __repr__(self) -> str:
        return f"InformationState(atoms={len(self.atoms)}, mass={self.mass:.6g})"


@dataclass(frozen=True)
class HistoryRecord:
    """
    Observable history (x0, a0, x1, ..., a_{n-1}, x_n), optionally with the
    hidden states (y0, ..., y_{n-1}) of a joint history.
    """

    observations: Tuple[int, ...]
    actions: Tuple[int, ...] = ()
    hidden: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'observations', tuple(int(x) for x in self.observations))
        object.__setattr__(self, 'actions', tuple(int(a) for a in self.actions))
        if len(self.observations) != len(self.actions) + 1:
            raise DomainError(
                f"History needs one more observation than actions, got "
                f"{len(self.observations)} and {len(self.actions)}"
            )
        if self.hidden is not None:
            object.__setattr__(self, 'hidden', tuple(int(y) for y in self.hidden))
            if len(self.hidden) != len(self.actions):
                raise DomainError("Joint history needs one hidden state per action")

    @property
    def stage(self) -> int:
        return len(self.actions)

    @property
    def last_observation(self) -> int:
        return self.observations[-1]

    def key(self) -> Tuple[int, ...]:
        flat: List[int] = []
        for x, a in zip(self.observations, self.actions):
            flat.extend((x, a))
        flat.append(self.observations[-1])
        return tuple(flat)

    @classmethod
    def from_key(cls, key: Sequence[int]) -> "HistoryRecord":
        return cls(tuple(key[0::2]), tuple(key[1::2]))

    def prefix(self, n: int) -> "HistoryRecord":
        hidden = None if self.hidden is None else self.hidden[:n]
        return HistoryRecord(self.observations[:n + 1], self.actions[:n], hidden)

    def extend(self, a: int, x_next: int, y: Optional[int] = None) -> "HistoryRecord":
        hidden = None
        if self.hidden is not None:
            if y is None:
                raise DomainError("Extending a joint history needs the hidden state")
            hidden = self.hidden + (y,)
        return HistoryRecord(self.observations + (x_next,), self.actions + (a,), hidden)

    def validate(self, model: PomdpModel) -> None:
        """Raise DomainError unless each a_k is feasible at x_k."""
        for x, a in zip(self.observations, self.actions):
            model.require_feasible(x, a)


def initial_state(model: PomdpModel) -> InformationState:
    """mu_0 = Q0Y x delta_0."""
    return InformationState(tuple(
        (y, 0.0, float(w)) for y, w in enumerate(model.initial_hidden_law) if w > 0.0
    ))


def update(model: PomdpModel, x: int, a: int, x_next: int, mu: InformationState, z: float) -> InformationState:
    """
    One application of the update operator: each atom (y, s, w) spreads to
    (y', s + z c(x, y, a)) with weight q[x_next, y' | x, y, a] w.

    Raises:
        DomainError: If a is not feasible at x
    """
    model.require_feasible(x, a)
    atoms: List[Atom] = []
    for y, s, w in mu.atoms:
        row = model.kernel[x, y, a, x_next]
        shifted = s + z * float(model.dm_cost[x, y, a])
        for y_next in np.nonzero(row)[0]:
            atoms.append((int(y_next), shifted, float(row[y_next]) * w))
    return InformationState(tuple(atoms))


def normalization_constant(model: PomdpModel, mu_prev: InformationState, x_prev: int, a: int, x_next: int) -> float:
    """
    D_n = sum_y q^X(x_next | x_prev, y, a) mu_prev^Y(y) / mass(mu_prev).

    Raises:
        DomainError: If mu_prev is empty or a is infeasible at x_prev
    """
    model.require_feasible(x_prev, a)
    mass = mu_prev.mass
    if mass <= 0.0:
        raise DomainError("Normalization constant undefined for a zero-mass information state")
    observation_law = model.kernel[x_prev, :, a, x_next].sum(axis=1)
    return float(observation_law @ mu_prev.marginal_y(model.ny)) / mass


@dataclass(frozen=True)
class RecursionTrace:
    """mu_0..mu_n with D_0..D_n (D_0 = 1)."""

    states: Tuple[InformationState, ...]
    normalizers: Tuple[float, ...]

    @property
    def final(self) -> InformationState:
        return self.states[-1]

    def normalization_product(self) -> float:
        return float(np.prod(self.normalizers))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'states': [mu.to_dict() for mu in self.states],
            'masses': [mu.mass for mu in self.states],
            'normalizers': list(self.normalizers),
        }


def _check_policy(policy: Optional[ActionRule], history: HistoryRecord) -> None:
    if policy is None:
        return
    for n in range(history.stage):
        prescribed = policy.action(history.prefix(n).key())
        if prescribed != history.actions[n]:
            raise DomainError(
                f"History takes action {history.actions[n]} at stage {n} but the policy prescribes {prescribed}"
            )


def run_recursion(model: PomdpModel, policy: Optional[ActionRule], history: HistoryRecord) -> RecursionTrace:
    """
    Chain the update along a history, using z = beta^(k-1) at step k.

    Raises:
        DomainError: If the history disagrees with the policy or takes an infeasible action
    """
    history.validate(model)
    _check_policy(policy, history)

    states = [initial_state(model)]
    normalizers = [1.0]
    z = 1.0
    for k in range(history.stage):
        x, a, x_next = history.observations[k], history.actions[k], history.observations[k + 1]
        previous = states[-1]
        if previous.is_empty():
            normalizers.append(0.0)
        else:
            normalizers.append(normalization_constant(model, previous, x, a, x_next))
        states.append(update(model, x, a, x_next, previous, z))
        z *= model.dm_discount
    if states[-1].is_empty():
        logger.debug(f"History {history.key()} is unreachable")
    return RecursionTrace(tuple(states), tuple(normalizers))


@dataclass(frozen=True)
class OracleResult:
    """Conditional law of (Y_n, S_n) given h_n and the probability of x_1..x_n given x_0."""

    probability: float
    conditional: InformationState


def joint_enumeration_oracle(model: PomdpModel, policy: Optional[ActionRule], history: HistoryRecord,
                             cap: int = DEFAULT_ORACLE_CAP) -> OracleResult:
    """
    Sum over every hidden path y_0..y_n consistent with the history.

    Raises:
        ResourceCapError: If |Y|^(n+1) exceeds cap
    """
    history.validate(model)
    _check_policy(policy, history)
    n = history.stage
    count = model.ny ** (n + 1)
    if count > cap:
        raise ResourceCapError(f"Hidden path count {count} exceeds cap of {cap}", cap)

    atoms: List[Atom] = []
    total = 0.0
    for path in itertools.product(range(model.ny), repeat=n + 1):
        probability = float(model.initial_hidden_law[path[0]])
        cost = 0.0
        discount = 1.0
        for k in range(n):
            x, a = history.observations[k], history.actions[k]
            y, y_next = path[k], path[k + 1]
            probability *= float(model.kernel[x, y, a, history.observations[k + 1], y_next])
            cost += discount * float(model.dm_cost[x, y, a])
            discount *= model.dm_discount
            if probability == 0.0:
                break
        if probability > 0.0:
            total += probability
            atoms.append((path[-1], cost, probability))

    if total <= 0.0:
        return OracleResult(0.0, InformationState())
    return OracleResult(total, InformationState(tuple(atoms)).scale(1.0 / total))


@dataclass(frozen=True)
class PathInformationState:
    """
    Information state whose atoms also carry the hidden path (y_0..y_n).

    Designs conditioned on the full joint history need the hidden path to
    look up the law driving the next update; collapse() forgets it.
    """

    atoms: Tuple[Tuple[Tuple[int, ...], float, float], ...] = field(default_factory=tuple)

    @property
    def mass(self) -> float:
        return float(sum(w for _, _, w in self.atoms))

    def is_empty(self) -> bool:
        return not self.atoms

    def collapse(self) -> InformationState:
        return InformationState(tuple((path[-1], s, w) for path, s, w in self.atoms))


def initial_path_state(model: PomdpModel, x0: int, stage_law: StageLaw) -> PathInformationState:
    """Atoms ((y0,), 0) weighted by the stage-0 law at (x0, y0)."""
    table = stage_law(0, ())
    return PathInformationState(tuple(
        ((y,), 0.0, float(table[x0, y])) for y in range(model.ny) if table[x0, y] > NEGLIGIBLE_MASS
    ))


def manipulated_update(model: PomdpModel, history: HistoryRecord, a: int, x_next: int,
                       mu: PathInformationState, z: float, stage_law: StageLaw) -> PathInformationState:
    """
    Update driven by a stage law instead of the kernel: the atom with hidden
    path (y_0..y_n) moves to (y_0..y_n, y') with weight p_{n+1}(x_next, y' | joint history) w.

    Raises:
        DomainError: If a is not feasible at the last observation
    """
    x = history.last_observation
    model.require_feasible(x, a)
    n = history.stage
    actions = history.actions + (a,)
    atoms = []
    for path, s, w in mu.atoms:
        joint: JointHistory = tuple(zip(history.observations, path, actions))
        table = stage_law(n + 1, joint)
        shifted = s + z * float(model.dm_cost[x, path[-1], a])
        for y_next in range(model.ny):
            if table[x_next, y_next] > NEGLIGIBLE_MASS:
                atoms.append((path + (y_next,), shifted, float(table[x_next, y_next]) * w))
    return PathInformationState(tuple(atoms))
