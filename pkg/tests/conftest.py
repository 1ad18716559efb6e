"""
Seeded random-instance builders shared by the test suite.
"""
import numpy as np
import pytest

from lib.model.pomdp import LabeledPoint, PomdpModel, UtilitySpec, labeled_space
from lib.solvers.dm_solver import Policy


def random_distribution(rng, size, sparse=False):
    weights = rng.random(size) + 0.05
    if sparse:
        weights *= rng.random(size) > 0.4
        if not weights.any():
            weights[rng.integers(size)] = 1.0
    return weights / weights.sum()


def random_model(rng, nx=None, ny=None, na=None, horizon=None, sparse=True,
                 utility=None, with_initial_x=True, dm_discount=None):
    """A valid model with |X|, |Y| <= 3, |A| <= 2 and N <= 3 unless given."""
    nx = nx or int(rng.integers(1, 4))
    ny = ny or int(rng.integers(1, 4))
    na = na or int(rng.integers(1, 3))
    horizon = horizon or int(rng.integers(1, 4))

    kernel = np.zeros((nx, ny, na, nx, ny))
    for x in range(nx):
        for y in range(ny):
            for a in range(na):
                kernel[x, y, a] = random_distribution(rng, nx * ny, sparse).reshape(nx, ny)

    feasible = []
    for _ in range(nx):
        row = [a for a in range(na) if rng.random() < 0.7]
        feasible.append(tuple(row) if row else (int(rng.integers(na)),))

    return PomdpModel(
        observable_states=labeled_space([f"x{i}" for i in range(nx)]),
        hidden_states=labeled_space([f"y{i}" for i in range(ny)]),
        actions=tuple(LabeledPoint(f"a{i}", float(i)) for i in range(na)),
        feasible_actions=tuple(feasible),
        kernel=kernel,
        initial_hidden_law=random_distribution(rng, ny, sparse),
        dm_cost=rng.uniform(0.0, 2.0, (nx, ny, na)),
        im_cost=rng.uniform(0.0, 2.0, (nx, ny, na)),
        dm_discount=float(rng.uniform(0.2, 0.6)) if dm_discount is None else dm_discount,
        im_discount=float(rng.uniform(0.5, 1.0)),
        horizon=horizon,
        utility=utility or UtilitySpec(),
        initial_observable_law=random_distribution(rng, nx, sparse) if with_initial_x else None,
        name="random",
    )


def random_policy(model, rng):
    """Deterministic policy drawing one feasible action per history."""
    return Policy.from_rule(model, lambda h: rng.choice(model.feasible_actions[h[-1]]))


def random_history(model, policy, rng, stage):
    """Observable history key of the given stage following the policy."""
    key = (int(rng.integers(model.nx)),)
    for _ in range(stage):
        key = key + (policy.action(key), int(rng.integers(model.nx)))
    return key


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
