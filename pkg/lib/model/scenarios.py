"""
Bundled scenarios used as regression anchors and CLI defaults.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, Sequence, Union

import numpy as np

from lib.analysis.gaussian import GaussianScenario
from lib.model.pomdp import (
    LabeledPoint,
    PomdpModel,
    UtilitySpec,
    full_action_sets,
    labeled_space,
    uniform_action_grid,
)
from lib.model.scenario_loader import Scenario, ScenarioLoader

logger = logging.getLogger(__name__)

DEFAULT_GRID = 19


def build_discrete_example(grid: int = DEFAULT_GRID, c_hat: float = 1.0, r_hat: float = 2.0,
                         gamma: float = 1.0, tau: float = 0.5,
                         y_values: Sequence[float] = (-1.0, 1.0),
                         omega_values: Sequence[float] = (0.25, -0.25),
                         initial_hidden_law: Sequence[float] = (0.5, 0.5),
                         dm_discount: float = 0.9, im_discount: float = 1.0,
                         horizon: int = 2) -> PomdpModel:
    """
    Two hidden states switching with probability a, observed through
    x^{i,j} = y^i + omega^j where omega^1 has probability tau.

    Observable state x^{i,j} sits at index 2*i + j. Actions form the open
    grid k/(grid+1) of (0, 1). Costs are c = y^2 + a^2 + c_hat a y and
    r = gamma (y^2 + a^2 + r_hat a y).
    """
    y_values = [float(v) for v in y_values]
    omega_law = (tau, 1.0 - tau)
    x_values = [y + w for y in y_values for w in omega_values]
    if len(set(x_values)) != len(x_values):
        raise ValueError(f"Observable values must be distinct, got {x_values}")

    observable = labeled_space([f"x{i + 1}{j + 1}" for i in range(2) for j in range(2)], x_values)
    hidden = labeled_space(["y1", "y2"], y_values)
    actions = uniform_action_grid(0.0, 1.0, grid)
    a_values = np.array([p.value for p in actions])

    # phi_x(x' | y): x^{i,j} only reachable from y^i
    phi_x = np.zeros((2, 4))
    for i in range(2):
        for j in range(2):
            phi_x[i, 2 * i + j] = omega_law[j]

    nx, ny, na = 4, 2, len(actions)
    kernel = np.zeros((nx, ny, na, nx, ny))
    for y in range(ny):
        for a, value in enumerate(a_values):
            phi_y = np.where(np.arange(ny) == y, 1.0 - value, value)
            kernel[:, y, a] = np.outer(phi_x[y], phi_y)

    y_grid = np.array(y_values)[:, None]
    dm_stage = y_grid ** 2 + a_values ** 2 + c_hat * a_values * y_grid
    im_stage = gamma * (y_grid ** 2 + a_values ** 2 + r_hat * a_values * y_grid)

    q0y = np.array(initial_hidden_law, dtype=float)
    return PomdpModel(
        observable_states=observable,
        hidden_states=hidden,
        actions=actions,
        feasible_actions=full_action_sets(nx, na),
        kernel=kernel,
        initial_hidden_law=q0y,
        dm_cost=np.broadcast_to(dm_stage, (nx, ny, na)),
        im_cost=np.broadcast_to(im_stage, (nx, ny, na)),
        dm_discount=dm_discount,
        im_discount=im_discount,
        horizon=horizon,
        initial_observable_law=q0y @ phi_x,
        name="discrete-example",
    )


def build_gaslight(horizon: int = 3, dm_discount: float = 0.9, im_discount: float = 0.95,
                   curvature: float = 0.5) -> PomdpModel:
    """
    Network defense under forged alerts.

    The hidden state is whether a host is compromised (C) or not (U); the
    defender sees a weak or strong alert pointing either way and picks
    wait, probe or attack (isolate). A manipulator who compromised the host
    pays whenever the defender isolates it and shapes the alert stream.
    """
    observable = labeled_space(["WC", "SC", "WU", "SU"])
    hidden = labeled_space(["C", "U"])
    actions = (LabeledPoint("wait", 0.0), LabeledPoint("probe", 0.5), LabeledPoint("attack", 1.0))

    alerts = np.array([
        [0.4, 0.4, 0.1, 0.1],
        [0.1, 0.1, 0.4, 0.4],
    ])
    nx, ny, na = 4, 2, 3
    kernel = np.zeros((nx, ny, na, nx, ny))
    for a, point in enumerate(actions):
        stay_compromised = 0.9 - 0.3 * point.value
        get_compromised = 0.1 + 0.2 * point.value
        hidden_rows = np.array([
            [stay_compromised, 1.0 - stay_compromised],
            [get_compromised, 1.0 - get_compromised],
        ])
        for y in range(ny):
            kernel[:, y, a] = np.outer(alerts[y], hidden_rows[y])

    dm_stage = np.array([
        [1.5, 1.0, 0.0],
        [1.5, 1.0, 3.0],
    ])
    im_stage = np.array([
        [0.0, 0.0, 4.0],
        [0.0, 0.0, 0.0],
    ])
    q0y = np.array([0.5, 0.5])
    return PomdpModel(
        observable_states=observable,
        hidden_states=hidden,
        actions=actions,
        feasible_actions=full_action_sets(nx, na),
        kernel=kernel,
        initial_hidden_law=q0y,
        dm_cost=np.broadcast_to(dm_stage, (nx, ny, na)),
        im_cost=np.broadcast_to(im_stage, (nx, ny, na)),
        dm_discount=dm_discount,
        im_discount=im_discount,
        horizon=horizon,
        utility=UtilitySpec("exponential", curvature=curvature),
        initial_observable_law=q0y @ alerts,
        name="gaslight",
    )


def build_gaussian_example() -> GaussianScenario:
    """Unit coefficients: iota = 0.25 and the optimal design spread is 2."""
    return GaussianScenario(h=1.0, b_tilde=1.0, b_hat=1.0, c_hat=1.0, r_hat=1.0,
                            a0=0.5, y0=1.0, x1=1.0)


BUNDLED: Dict[str, Callable[..., Scenario]] = {
    'discrete-example': build_discrete_example,
    'gaslight': build_gaslight,
    'gaussian-example': build_gaussian_example,
}


def resolve_scenario(reference: Union[str, Path], grid: int = DEFAULT_GRID) -> Scenario:
    """
    Resolve a bundled scenario name or a scenario file path.

    Raises:
        FileNotFoundError: If the reference is neither a bundled name nor a file
        ScenarioError: If the file fails to parse or validate
    """
    name = str(reference)
    if name == 'discrete-example':
        return build_discrete_example(grid=grid)
    if name in BUNDLED:
        return BUNDLED[name]()
    return ScenarioLoader(reference).load()
