"""
Tests for the decision-maker's backward induction.
"""
import itertools
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_model, random_policy
from lib.errors import DomainError, ResourceCapError
from lib.filtering.info_state import HistoryRecord, InformationState, run_recursion
from lib.model.paths import expected_utility, true_stage_law
from lib.model.pomdp import UtilitySpec
from lib.model.scenario_loader import ScenarioLoader
from lib.model.scenarios import build_discrete_example
from lib.solvers.dm_solver import (Policy, bellman_backup, cost_iteration_check, discrete_example_policy,
                                   policy_value, solve, terminal_value)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

UTILITIES = (UtilitySpec(), UtilitySpec("exponential", curvature=0.5), UtilitySpec("power", exponent=0.5))


def subtree_policies(model, history):
    """Every deterministic policy on the histories reachable from `history`."""
    if len(history) // 2 == model.horizon:
        yield {}
        return
    for a in model.feasible_actions[history[-1]]:
        branches = [list(subtree_policies(model, history + (a, x))) for x in range(model.nx)]
        for combination in itertools.product(*branches):
            actions = {history: a}
            for part in combination:
                actions.update(part)
            yield actions


def test_solve_matches_policy_enumeration(rng):
    for i in range(50):
        model = random_model(rng, nx=int(rng.integers(1, 4)), na=2, horizon=2, utility=UTILITIES[i % 3])
        policy, _, values = solve(model)
        for x0 in range(model.nx):
            candidates = list(subtree_policies(model, (x0,)))
            assert len(candidates) <= 200
            brute = min(
                expected_utility(model, Policy(actions, model.horizon), true_stage_law(model, initial_x=x0))
                for actions in candidates
            )
            assert_allclose(values[x0], brute, atol=1e-9)
            achieved = expected_utility(model, policy, true_stage_law(model, initial_x=x0))
            assert_allclose(achieved, values[x0], atol=1e-9)


def test_cost_iteration(rng):
    for i in range(100):
        model = random_model(rng, utility=UTILITIES[i % 3])
        policy = random_policy(model, rng)
        for lhs, rhs in cost_iteration_check(model, policy).values():
            assert_allclose(lhs, rhs, atol=1e-9)


def test_optimal_policy_value_table(rng):
    model = random_model(rng, nx=2, ny=2, na=2, horizon=3)
    policy, table, values = solve(model)
    for x0 in range(model.nx):
        assert_allclose(table[(x0,)], values[x0])
        assert_allclose(policy_value(model, policy, x0), values[x0], atol=1e-12)
    assert len(table.stage(0)) == model.nx


def test_constant_cost_closed_form():
    model = ScenarioLoader(SCENARIO_DIR / "constant_cost.json").load()
    policy, _, values = solve(model)
    for x0 in range(model.nx):
        assert_allclose(values[x0], (1.0 - 0.5 ** 3) / (1.0 - 0.5))
    # every action ties, so the lowest index wins everywhere
    assert all(a == 0 for _, a in policy.items())


def test_empty_branches_take_first_feasible_action():
    model = build_discrete_example(grid=3, initial_hidden_law=(1.0, 0.0))
    policy, table, _ = solve(model)
    a0 = policy.action((0,))
    unreachable = (0, a0, 2)
    assert unreachable in policy
    assert policy.action(unreachable) == model.feasible_actions[2][0]
    assert table[unreachable] == 0.0


def test_history_cap():
    model = build_discrete_example(grid=5)
    with pytest.raises(ResourceCapError) as excinfo:
        solve(model, cap=10)
    assert excinfo.value.cap == 10


def test_undefined_history_raises():
    policy = Policy({(0,): 1}, horizon=1)
    with pytest.raises(DomainError):
        policy.action((1,))


def test_discrete_example_closed_form():
    assert_allclose(discrete_example_policy(1.0, 0.5, (0.5, 0.5), (-1.0, 1.0), 0.3, 0), 0.2)


def test_discrete_grid_policy_tracks_closed_form():
    grid = 19
    spacing = 1.0 / (grid + 1)
    model = build_discrete_example(grid=grid)
    policy, _, _ = solve(model)
    values = np.array([p.value for p in model.actions])

    # stage-1 backup after a0 = 0.3 and x1 = x11, whatever the solver picked at stage 0
    history = (0, int(np.argmin(np.abs(values - 0.3))), 0)
    mu = run_recursion(model, None, HistoryRecord.from_key(history)).final
    _, a1 = bellman_backup(model, history, mu, model.dm_discount,
                           lambda h, m, z: terminal_value(model.utility, m))
    assert values[a1] == pytest.approx(0.2)

    for x0 in range(model.nx):
        a0 = policy.action((x0,))
        for x1 in range(model.nx):
            closed = discrete_example_policy(1.0, 0.5, (0.5, 0.5), (-1.0, 1.0), values[a0], x1)
            target = min(max(closed, values[0]), values[-1])
            chosen = values[policy.action((x0, a0, x1))]
            assert abs(chosen - target) <= spacing / 2 + 1e-9


def test_policy_export_is_sorted():
    model = build_discrete_example(grid=2)
    policy, table, _ = solve(model)
    exported = policy.to_dict(model)
    histories = [tuple(entry['history']) for entry in exported['policy']]
    assert histories == sorted(histories)
    assert exported['policy'][0]['action_label'].startswith("a=")
    assert len(table.to_dict()['values']) == len(table)


def random_state(model, rng):
    atoms = [(int(rng.integers(model.ny)), float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.1, 1.0)))
             for _ in range(int(rng.integers(1, 5)))]
    return InformationState(tuple(atoms))


def optimal_value(model, history, mu, z):
    if len(history) // 2 == model.horizon:
        return terminal_value(model.utility, mu), None
    return bellman_backup(model, history, mu, z, lambda h, m, w: optimal_value(model, h, m, w)[0])


def test_backup_is_monotone(rng):
    for i in range(60):
        model = random_model(rng, horizon=2, utility=UTILITIES[i % len(UTILITIES)])
        mu = random_state(model, rng)
        x0 = int(rng.integers(model.nx))
        raised = {}

        def lower(history, state, z):
            return terminal_value(model.utility, state)

        def upper(history, state, z):
            if history not in raised:
                raised[history] = float(rng.uniform(0.0, 1.0))
            return lower(history, state, z) + raised[history]

        low, _ = bellman_backup(model, (x0,), mu, 1.0, lower)
        high, _ = bellman_backup(model, (x0,), mu, 1.0, upper)
        assert low <= high + 1e-12


def test_value_is_positively_homogeneous(rng):
    for _ in range(50):
        model = random_model(rng)
        mu = random_state(model, rng)
        x0 = int(rng.integers(model.nx))
        kappa = float(rng.uniform(0.1, 10.0))
        assert_allclose(terminal_value(model.utility, mu.scale(kappa)),
                        kappa * terminal_value(model.utility, mu), rtol=1e-12)
        value, action = optimal_value(model, (x0,), mu, 1.0)
        scaled_value, scaled_action = optimal_value(model, (x0,), mu.scale(kappa), 1.0)
        assert_allclose(scaled_value, kappa * value, rtol=1e-10)
        assert scaled_action == action
