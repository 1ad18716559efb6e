"""
Closed forms of the two-stage linear-Gaussian manipulation example.

System: x_{n+1} = h y_n + w_{n+1}, y_{n+1} = b_tilde y_n + b_hat a_n + e_{n+1}
with standard normal noises and a standard normal initial hidden state.
Costs: c(y, a) = y^2 + a^2 + c_hat a y, r(y, a) = y^2 + a^2 + r_hat a y.
The manipulator restricts itself to Gaussian designs of X_1 with mean m,
standard deviation v and correlation sign r at stage 1.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import minimize_scalar

from lib.errors import DomainError

logger = logging.getLogger(__name__)

QUADRATURE_NODES = 64
CV_DENOMINATOR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class GaussianScenario:
    h: float
    b_tilde: float
    b_hat: float
    c_hat: float
    r_hat: float
    a0: float = 0.0
    y0: float = 0.0
    x1: float = 0.0
    dm_discount: float = 1.0
    im_discount: float = 1.0

    def __post_init__(self):
        if not self.c_hat > 0.0:
            raise DomainError(f"c_hat must be positive, got {self.c_hat}")
        if not self.r_hat > 0.0:
            raise DomainError(f"r_hat must be positive, got {self.r_hat}")

    def with_values(self, **changes: float) -> "GaussianScenario":
        values = asdict(self)
        values.update(changes)
        return GaussianScenario(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'gaussian', **asdict(self)}


@dataclass(frozen=True)
class GaussianDesign:
    """
    Optimal stage-1 design, or the no-leverage outcome when iota vanishes.

    With status "no_leverage" the numeric fields are None: the stage
    objective no longer depends on the design.
    """

    status: str
    mean: Optional[float] = None
    std_dev: Optional[float] = None
    correlation_sign: Optional[float] = None
    objective: Optional[float] = None

    @property
    def has_leverage(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def iota(c_hat: float, b_tilde: float, h: float) -> float:
    """Sensitivity of the stage-1 action to the observation x1."""
    return c_hat * b_tilde * h / (2.0 * (h * h + 1.0))


def scenario_iota(scenario: GaussianScenario) -> float:
    return iota(scenario.c_hat, scenario.b_tilde, scenario.h)


def dm_stage1_policy(scenario: GaussianScenario) -> float:
    """a1* = -(c_hat b_hat / 2) a0 - iota x1."""
    return -0.5 * scenario.c_hat * scenario.b_hat * scenario.a0 - scenario_iota(scenario) * scenario.x1


def mean_coupling(scenario: GaussianScenario) -> float:
    """Coefficient K of iota * m in the stage objective."""
    s = scenario
    return s.c_hat * s.b_hat * s.a0 - s.r_hat * (s.b_tilde * s.y0 + s.b_hat * s.a0)


def design_objective(scenario: GaussianScenario, mean: float, std_dev: float, correlation: float) -> float:
    """iota^2 (m^2 + v^2) + K iota m + r_hat iota r v."""
    k = scenario_iota(scenario)
    return (k * k * (mean * mean + std_dev * std_dev)
            + mean_coupling(scenario) * k * mean
            + scenario.r_hat * k * correlation * std_dev)


def im_stage1_design(scenario: GaussianScenario) -> GaussianDesign:
    """
    Minimize the stage-1 design objective in closed form.

    The correlation sign is -sign(r_hat * iota) so the r-term is negative;
    the analysed branch iota > 0 gives r* = -1 and its mirror gives r* = +1.
    """
    k = scenario_iota(scenario)
    if k == 0.0:
        logger.warning("iota vanishes: any design is optimal on the mean term")
        return GaussianDesign(status="no_leverage")
    coupling = mean_coupling(scenario)
    correlation = -math.copysign(1.0, scenario.r_hat * k)
    std_dev = scenario.r_hat / (2.0 * abs(k))
    mean = coupling / (-2.0 * k)
    value = -(coupling * coupling + scenario.r_hat * scenario.r_hat) / 4.0
    return GaussianDesign(
        status="optimal", mean=mean, std_dev=std_dev,
        correlation_sign=correlation, objective=value,
    )


def coefficient_of_variation(scenario: GaussianScenario) -> float:
    """
    CV = r_hat / |r_hat (b_tilde y0 + b_hat a0) - c_hat b_hat a0|.

    Raises:
        DomainError: If the denominator vanishes (infinite CV)
    """
    denominator = abs(mean_coupling(scenario))
    if denominator <= CV_DENOMINATOR_TOLERANCE:
        raise DomainError("Coefficient of variation is infinite: mean coupling vanishes")
    return scenario.r_hat / denominator


@dataclass
class CvExperiment:
    rows: List[Tuple[float, float, float]] = field(default_factory=list)
    monotone: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rows': [{'r_hat': r, 'misalignment': d, 'cv': cv} for r, d, cv in self.rows],
            'monotone': self.monotone,
        }


def cv_monotonicity_experiment(scenario: GaussianScenario, r_hat_grid: Sequence[float]) -> CvExperiment:
    """
    Evaluate CV along a grid of r_hat and check it is nonincreasing in
    |r_hat - c_hat| on each side of c_hat. Grid points with an infinite CV
    are skipped.
    """
    experiment = CvExperiment()
    below: List[Tuple[float, float]] = []
    above: List[Tuple[float, float]] = []
    for r_hat in r_hat_grid:
        try:
            cv = coefficient_of_variation(scenario.with_values(r_hat=float(r_hat)))
        except DomainError:
            continue
        distance = abs(r_hat - scenario.c_hat)
        experiment.rows.append((float(r_hat), distance, cv))
        (below if r_hat < scenario.c_hat else above).append((distance, cv))

    for side in (below, above):
        side.sort()
        for (_, first), (_, second) in zip(side, side[1:]):
            if second > first + 1e-12:
                experiment.monotone = False
    return experiment


def _expected_stage_cost(scenario: GaussianScenario, a1: float, nodes: np.ndarray, weights: np.ndarray) -> float:
    """
    Unnormalized E[c(y0, a0) + beta c(y1, a1); x1] by tensor Gauss-Hermite
    quadrature over (y0, e1), weighting y0 by the observation likelihood.
    """
    s = scenario
    y0 = nodes[:, None]
    eps = nodes[None, :]
    y1 = s.b_tilde * y0 + s.b_hat * s.a0 + eps
    likelihood = np.exp(-0.5 * (s.x1 - s.h * y0) ** 2)
    cost = (y0 ** 2 + s.a0 ** 2 + s.c_hat * s.a0 * y0
            + s.dm_discount * (y1 ** 2 + a1 ** 2 + s.c_hat * a1 * y1))
    grid_weights = np.outer(weights, weights) * likelihood
    return float(np.sum(grid_weights * cost) / np.sum(grid_weights))


def policy_oracle(scenario: GaussianScenario, nodes: int = QUADRATURE_NODES) -> float:
    """Numeric a1*: golden-section search over the quadrature-evaluated cost."""
    points, weights = hermegauss(nodes)
    result = minimize_scalar(
        lambda a1: _expected_stage_cost(scenario, a1, points, weights),
        bracket=(-1.0, 1.0), method='golden', tol=1e-10,
    )
    return float(result.x)


def design_oracle(scenario: GaussianScenario, points: int = 41,
                  tolerance: float = 1e-7, max_rounds: int = 400) -> Tuple[float, float, float]:
    """
    Numeric (m, v, objective) with the correlation at its sign-optimal value:
    a (m, v) grid that widens while the best point sits on its boundary and
    shrinks around it otherwise.

    Raises:
        DomainError: If iota vanishes
    """
    k = scenario_iota(scenario)
    if k == 0.0:
        raise DomainError("No leverage: the design objective is constant")
    correlation = -math.copysign(1.0, scenario.r_hat * k)
    center_m, center_v, span = 0.0, 1.0, 1.0
    offsets = np.linspace(-1.0, 1.0, points)
    for _ in range(max_rounds):
        ms = center_m + span * offsets
        vs = np.clip(center_v + span * offsets, 1e-12, None)
        grid_m, grid_v = np.meshgrid(ms, vs, indexing='ij')
        values = design_objective(scenario, grid_m, grid_v, correlation)
        i, j = np.unravel_index(int(np.argmin(values)), values.shape)
        center_m, center_v = float(ms[i]), float(vs[j])
        on_edge = i in (0, points - 1) or j == points - 1 or (j == 0 and vs[0] > 1e-12)
        if on_edge:
            span *= 2.0
        elif span < tolerance:
            break
        else:
            span /= 4.0
    return center_m, center_v, design_objective(scenario, center_m, center_v, correlation)


def gaussian_record(scenario: GaussianScenario, verify: bool = False) -> Dict[str, Any]:
    """Closed-form summary, plus oracle gaps when verify is set."""
    design = im_stage1_design(scenario)
    a1 = dm_stage1_policy(scenario)
    try:
        cv: Optional[float] = coefficient_of_variation(scenario)
    except DomainError:
        cv = None
    record: Dict[str, Any] = {
        'scenario': scenario.to_dict(),
        'iota': scenario_iota(scenario),
        'a1_star': a1,
        'design': design.to_dict(),
        'cv': cv,
    }
    if verify:
        gaps: Dict[str, Any] = {'a1_star': abs(policy_oracle(scenario) - a1)}
        if design.has_leverage:
            mean, std_dev, value = design_oracle(scenario)
            gaps.update({
                'mean': abs(mean - design.mean),
                'std_dev': abs(std_dev - design.std_dev),
                'objective': abs(value - design.objective),
            })
        record['oracle_gaps'] = gaps
    return record
