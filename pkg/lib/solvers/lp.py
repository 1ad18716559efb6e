"""
Dense linear programs for the manipulator's stage problems.

lp_solve runs a two-phase tableau simplex with Bland's rule. Variable bounds
are handled by shifting finite lower bounds to zero, mirroring upper-only
bounds, splitting free variables and turning finite ranges into rows.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from lib.errors import DomainError, ResourceCapError
from lib.model.pomdp import DistributionXY

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-8
OPTIMALITY_TOLERANCE = 1e-8
PIVOT_TOLERANCE = 1e-9
MAX_PIVOTS = 100_000

Bound = Tuple[Optional[float], Optional[float]]


def _as_matrix(values, columns: int) -> np.ndarray:
    if values is None:
        return np.zeros((0, columns))
    matrix = np.array(values, dtype=float)
    if matrix.ndim == 1 and matrix.size == 0:
        return np.zeros((0, columns))
    return np.atleast_2d(matrix)


@dataclass(frozen=True)
class StageLinearProgram:
    """
    minimize c @ x  subject to  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi.

    None bounds mean unbounded on that side.
    """

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    bounds: Tuple[Bound, ...] = ()
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        n = c.size
        a_eq = _as_matrix(self.A_eq, n)
        b_eq = np.array(self.b_eq if self.b_eq is not None else [], dtype=float).ravel()
        a_ub = _as_matrix(self.A_ub, n)
        b_ub = np.array(self.b_ub if self.b_ub is not None else [], dtype=float).ravel()
        bounds = tuple(self.bounds) if self.bounds else tuple((0.0, None) for _ in range(n))
        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(n))

        if a_eq.shape != (b_eq.size, n):
            raise DomainError(f"A_eq has shape {a_eq.shape}, expected ({b_eq.size}, {n})")
        if a_ub.shape != (b_ub.size, n):
            raise DomainError(f"A_ub has shape {a_ub.shape}, expected ({b_ub.size}, {n})")
        if len(bounds) != n or len(names) != n:
            raise DomainError("bounds and names need one entry per variable")
        for name, (lo, hi) in zip(names, bounds):
            if lo is not None and hi is not None and lo > hi:
                raise DomainError(f"Variable {name} has lower bound {lo} above upper bound {hi}")
        data = [c, a_eq, b_eq, a_ub, b_ub]
        if not all(np.all(np.isfinite(part)) for part in data):
            raise DomainError("Linear program data must be finite")

        for name, value in zip(('c', 'A_eq', 'b_eq', 'A_ub', 'b_ub'), data):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, 'bounds', bounds)
        object.__setattr__(self, 'names', names)

    @property
    def num_variables(self) -> int:
        return self.c.size

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation at x."""
        worst = 0.0
        if self.b_eq.size:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.b_ub.size:
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub)))
        for value, (lo, hi) in zip(x, self.bounds):
            if lo is not None:
                worst = max(worst, lo - value)
            if hi is not None:
                worst = max(worst, value - hi)
        return worst

    def to_text(self) -> str:
        """Plain-text dump of the program for failure triage."""
        width = max((len(name) for name in self.names), default=1)

        def row(coefficients: np.ndarray) -> str:
            return " ".join(f"{v:+.6g}*{name}" for v, name in zip(coefficients, self.names) if v != 0.0)

        lines = [f"minimize  {row(self.c)}", "subject to"]
        for coefficients, rhs in zip(self.A_eq, self.b_eq):
            lines.append(f"  {row(coefficients)} = {rhs:.12g}")
        for coefficients, rhs in zip(self.A_ub, self.b_ub):
            lines.append(f"  {row(coefficients)} <= {rhs:.12g}")
        lines.append("bounds")
        for name, (lo, hi) in zip(self.names, self.bounds):
            low = "-inf" if lo is None else f"{lo:.12g}"
            high = "+inf" if hi is None else f"{hi:.12g}"
            lines.append(f"  {low} <= {name:<{width}} <= {high}")
        return "\n".join(lines)


@dataclass(frozen=True)
class LPResult:
    status: str
    value: Optional[float] = None
    x: Optional[np.ndarray] = None
    pivots: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class _StandardForm:
    """x = offset + transform @ z with z >= 0 and A z = b, b >= 0."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    offset: np.ndarray
    transform: np.ndarray
    constant: float = 0.0
    slack_columns: List[int] = field(default_factory=list)


def _to_standard_form(lp: StageLinearProgram) -> _StandardForm:
    n = lp.num_variables
    offset = np.zeros(n)
    columns: List[np.ndarray] = []
    range_rows: List[Tuple[int, float]] = []

    for j, (lo, hi) in enumerate(lp.bounds):
        unit = np.zeros(n)
        unit[j] = 1.0
        if lo is not None:
            offset[j] = lo
            columns.append(unit)
            if hi is not None:
                range_rows.append((len(columns) - 1, hi - lo))
        elif hi is not None:
            offset[j] = hi
            columns.append(-unit)
        else:
            columns.append(unit)
            columns.append(-unit)

    transform = np.array(columns).T if columns else np.zeros((n, 0))
    width = transform.shape[1]

    ub_rows = [lp.A_ub @ transform] if lp.b_ub.size else []
    ub_rhs = [lp.b_ub - lp.A_ub @ offset] if lp.b_ub.size else []
    if range_rows:
        bound_block = np.zeros((len(range_rows), width))
        for i, (column, _) in enumerate(range_rows):
            bound_block[i, column] = 1.0
        ub_rows.append(bound_block)
        ub_rhs.append(np.array([span for _, span in range_rows]))

    a_ub = np.vstack(ub_rows) if ub_rows else np.zeros((0, width))
    b_ub = np.concatenate(ub_rhs) if ub_rhs else np.zeros(0)
    slacks = a_ub.shape[0]

    a_eq = lp.A_eq @ transform
    b_eq = lp.b_eq - lp.A_eq @ offset

    A = np.vstack([
        np.hstack([a_eq, np.zeros((a_eq.shape[0], slacks))]),
        np.hstack([a_ub, np.eye(slacks)]),
    ])
    b = np.concatenate([b_eq, b_ub])
    negative = b < 0.0
    A[negative] *= -1.0
    b[negative] *= -1.0

    c = np.concatenate([transform.T @ lp.c, np.zeros(slacks)])
    transform = np.hstack([transform, np.zeros((n, slacks))])
    return _StandardForm(A, b, c, offset, transform, float(lp.c @ offset),
                         list(range(width, width + slacks)))


class _Tableau:
    """Dense simplex tableau; the last row holds reduced costs and -objective."""

    def __init__(self, table: np.ndarray, basis: List[int]):
        self.table = table
        self.basis = basis
        self.pivots = 0

    def pivot(self, row: int, column: int) -> None:
        self.table[row] /= self.table[row, column]
        for i in range(self.table.shape[0]):
            if i != row and self.table[i, column] != 0.0:
                self.table[i] -= self.table[i, column] * self.table[row]
        self.basis[row] = column
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise ResourceCapError(f"Simplex exceeded {MAX_PIVOTS} pivots", MAX_PIVOTS)

    def run(self, allowed: int) -> str:
        """Bland's rule over the first `allowed` columns; returns optimal or unbounded."""
        rows = self.table.shape[0] - 1
        while True:
            reduced = self.table[-1, :allowed]
            candidates = np.nonzero(reduced < -OPTIMALITY_TOLERANCE)[0]
            if candidates.size == 0:
                return "optimal"
            column = int(candidates[0])

            best_row, best_ratio = -1, np.inf
            for i in range(rows):
                entry = self.table[i, column]
                if entry > PIVOT_TOLERANCE:
                    ratio = self.table[i, -1] / entry
                    if ratio < best_ratio - 1e-12 or (
                        abs(ratio - best_ratio) <= 1e-12 and self.basis[i] < self.basis[best_row]
                    ):
                        best_row, best_ratio = i, ratio
            if best_row < 0:
                return "unbounded"
            self.pivot(best_row, column)


def lp_solve(lp: StageLinearProgram) -> LPResult:
    """
    Solve the program; infeasible and unbounded programs are outcomes, not errors.
    """
    form = _to_standard_form(lp)
    m, width = form.A.shape

    # phase 1: one artificial per row
    table = np.zeros((m + 1, width + m + 1))
    table[:m, :width] = form.A
    table[:m, width:width + m] = np.eye(m)
    table[:m, -1] = form.b
    table[-1, :width] = -form.A.sum(axis=0)
    table[-1, -1] = -form.b.sum()
    tableau = _Tableau(table, list(range(width, width + m)))
    tableau.run(width)

    if -tableau.table[-1, -1] > FEASIBILITY_TOLERANCE:
        logger.debug(f"Phase 1 ended with infeasibility {-tableau.table[-1, -1]:.3g}")
        return LPResult("infeasible", pivots=tableau.pivots)

    # drive artificials out of the basis, dropping redundant rows
    keep: List[int] = []
    for i in range(m):
        if tableau.basis[i] >= width:
            candidates = np.nonzero(np.abs(tableau.table[i, :width]) > PIVOT_TOLERANCE)[0]
            if candidates.size == 0:
                continue
            tableau.pivot(i, int(candidates[0]))
        keep.append(i)

    rows = tableau.table[keep][:, list(range(width)) + [-1]]
    basis = [tableau.basis[i] for i in keep]
    phase2 = np.zeros((len(keep) + 1, width + 1))
    phase2[:-1] = rows
    phase2[-1, :width] = form.c
    for i, column in enumerate(basis):
        phase2[-1] -= form.c[column] * phase2[i]
    final = _Tableau(phase2, basis)
    final.pivots = tableau.pivots
    status = final.run(width)
    if status == "unbounded":
        return LPResult("unbounded", pivots=final.pivots)

    z = np.zeros(width)
    for i, column in enumerate(final.basis):
        z[column] = final.table[i, -1]
    x = form.offset + form.transform @ z
    # snap round-off against the bounds
    for j, (lo, hi) in enumerate(lp.bounds):
        if lo is not None and x[j] < lo:
            x[j] = lo
        if hi is not None and x[j] > hi:
            x[j] = hi
    return LPResult("optimal", lp.objective(x), x, final.pivots)


def tv_l1_distance(p: Union[DistributionXY, np.ndarray, Sequence[float]],
                   q: Union[DistributionXY, np.ndarray, Sequence[float]]) -> float:
    """
    sum |p - q| over cells; the total variation distance is half of this.

    Raises:
        DomainError: If the tables differ in shape
    """
    left = p.table if isinstance(p, DistributionXY) else np.asarray(p, dtype=float)
    right = q.table if isinstance(q, DistributionXY) else np.asarray(q, dtype=float)
    if left.shape != right.shape:
        raise DomainError(f"Cannot compare distributions of shapes {left.shape} and {right.shape}")
    return float(np.abs(left - right).sum())
