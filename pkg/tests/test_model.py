"""
Tests for the problem instance, its validation and scenario ingestion.
"""
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_model
from lib.errors import DomainError, ScenarioError
from lib.model.paths import expected_utility, iter_joint_paths, true_stage_law
from lib.model.pomdp import (UtilitySpec, certainty_equivalent, kernel_x_marginal, kernel_y_marginal,
                             uniform_action_grid, utility_eval, validate_model)
from lib.model.scenario_loader import ScenarioLoader, save_scenario
from lib.model.scenarios import build_discrete_example, build_gaslight, build_gaussian_example, resolve_scenario
from lib.solvers.dm_solver import Policy

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.mark.parametrize("builder", [build_discrete_example, build_gaslight])
def test_bundled_scenarios_validate(builder):
    report = validate_model(builder())
    assert report.ok, str(report)


def test_constant_cost_file_validates():
    model = ScenarioLoader(SCENARIO_DIR / "constant_cost.json").load()
    assert model.name == "constant-cost"
    assert (model.nx, model.ny, model.na, model.horizon) == (2, 2, 2, 3)
    assert model.c_bar == 1.0
    assert_allclose(model.initial_observable_law, [0.5, 0.5])


def test_corrupted_kernel_row_is_listed():
    model = build_gaslight()
    kernel = np.array(model.kernel)
    kernel[1, 0, 2, 0, 0] += 0.3
    report = validate_model(replace(model, kernel=kernel))
    assert not report.ok
    assert any("x=SC, y=C, a=attack" in v for v in report.violations)


def test_validation_lists_every_problem():
    model = build_gaslight()
    broken = replace(model, dm_discount=1.0, initial_hidden_law=np.array([0.7, 0.7]),
                     feasible_actions=((0,), (), (0, 1), (2,)))
    violations = validate_model(broken).violations
    assert len(violations) == 3
    assert any("dm_discount" in v for v in violations)
    assert any("initial_hidden_law" in v for v in violations)
    assert any("feasible_actions(SC)" in v for v in violations)


def test_negative_cost_is_a_violation():
    model = build_gaslight()
    cost = np.array(model.dm_cost)
    cost[0, 1, 0] = -0.5
    report = validate_model(replace(model, dm_cost=cost))
    assert any("dm_cost(x=WC, y=U, a=wait) is negative" in v for v in report.violations)


def test_kernel_marginals_sum_to_one(rng):
    model = random_model(rng, nx=3, ny=2, na=2)
    for x in range(model.nx):
        for y in range(model.ny):
            for a in model.feasible_actions[x]:
                assert_allclose(kernel_x_marginal(model, x, y, a).sum(), 1.0)
                assert_allclose(kernel_y_marginal(model, x, y, a).sum(), 1.0)


def test_infeasible_transition_raises():
    model = replace(build_gaslight(), feasible_actions=((0,), (0, 1, 2), (0, 1, 2), (0, 1, 2)))
    with pytest.raises(DomainError):
        model.transition(0, 0, 2)


@pytest.mark.parametrize("utility", [
    UtilitySpec(),
    UtilitySpec("exponential", curvature=0.7),
    UtilitySpec("exponential", curvature=-0.4),
    UtilitySpec("power", exponent=0.5),
    UtilitySpec("power", exponent=2.0),
])
def test_certainty_equivalent_inverts_utility(utility):
    for s in (0.0, 0.3, 1.0, 2.5):
        assert_allclose(certainty_equivalent(utility, utility_eval(utility, s)), s, atol=1e-12)


def test_utility_rejects_negative_argument():
    with pytest.raises(DomainError):
        utility_eval(UtilitySpec(), -1e-3)


@pytest.mark.parametrize("utility", [
    UtilitySpec(),
    UtilitySpec("exponential", curvature=1.0),
    UtilitySpec("exponential", curvature=-0.4),
    UtilitySpec("power", exponent=0.5),
    UtilitySpec("power", exponent=2.0),
])
def test_utility_is_strictly_increasing(rng, utility):
    pairs = np.sort(rng.uniform(0.0, 5.0, (1000, 2)), axis=1)
    pairs = pairs[pairs[:, 0] < pairs[:, 1]]
    assert len(pairs) > 990
    for s, t in pairs:
        assert utility_eval(utility, s) < utility_eval(utility, t)


def test_utility_worked_values():
    assert_allclose(utility_eval(UtilitySpec("exponential", curvature=1.0), 1.0), 1.718281828459045, rtol=1e-14)
    assert_allclose(utility_eval(UtilitySpec("power", exponent=2.0), 3.0), 9.0)
    assert utility_eval(UtilitySpec(), 0.0) == 0.0


def test_utility_spec_validation():
    with pytest.raises(DomainError):
        UtilitySpec("exponential")
    with pytest.raises(DomainError):
        UtilitySpec("power", exponent=0.0)
    with pytest.raises(DomainError):
        UtilitySpec("logarithmic")


def test_open_action_grid():
    grid = uniform_action_grid(0.0, 1.0, 19)
    assert len(grid) == 19
    assert_allclose([p.value for p in grid][:3], [0.05, 0.1, 0.15])
    assert grid[-1].value < 1.0


def test_discrete_example_layout():
    model = build_discrete_example(grid=4)
    assert [p.label for p in model.observable_states] == ["x11", "x12", "x21", "x22"]
    assert_allclose([p.value for p in model.observable_states], [-0.75, -1.25, 1.25, 0.75])
    assert_allclose(model.initial_observable_law, [0.25, 0.25, 0.25, 0.25])
    # x^{2,j} cannot follow y^1
    assert_allclose(model.kernel[0, 0, 0, 2:].sum(), 0.0)


def test_joint_paths_carry_all_mass(rng):
    for _ in range(20):
        model = random_model(rng)
        policy = Policy.from_rule(model, lambda h: model.feasible_actions[h[-1]][0])
        total = sum(p.probability for p in iter_joint_paths(model, policy, true_stage_law(model)))
        assert_allclose(total, 1.0, atol=1e-12)


def test_constant_cost_expected_utility():
    model = ScenarioLoader(SCENARIO_DIR / "constant_cost.json").load()
    policy = Policy.from_rule(model, lambda h: 0)
    expected = (1.0 - 0.5 ** 3) / (1.0 - 0.5)
    assert_allclose(expected_utility(model, policy, true_stage_law(model)), expected)


def test_scenario_file_roundtrip(tmp_path):
    model = build_gaslight(horizon=2)
    path = tmp_path / "gaslight.json"
    save_scenario(model, path)
    loaded = ScenarioLoader(path).load()
    assert loaded.name == model.name
    assert loaded.utility == model.utility
    assert_allclose(loaded.kernel, model.kernel)
    assert_allclose(loaded.initial_observable_law, model.initial_observable_law)
    assert loaded.feasible_actions == model.feasible_actions


def test_im_cost_weight_scales_manipulator_cost(tmp_path):
    document = json.loads((SCENARIO_DIR / "constant_cost.json").read_text())
    document['im_cost_weight'] = 2.0
    path = tmp_path / "weighted.json"
    path.write_text(json.dumps(document))
    model = ScenarioLoader(path).load()
    assert_allclose(model.im_cost, 2.0 * np.array(document['im_cost']))


def test_loader_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.json"):
        ScenarioLoader(tmp_path / "missing.json").load()

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        ScenarioLoader(bad).load()

    incomplete = tmp_path / "incomplete.json"
    incomplete.write_text(json.dumps({'kind': 'pomdp', 'horizon': 2}))
    with pytest.raises(ScenarioError, match="missing fields"):
        ScenarioLoader(incomplete).load()


def test_loader_attaches_validation_report(tmp_path):
    document = json.loads((SCENARIO_DIR / "constant_cost.json").read_text())
    document['initial_hidden_law'] = [0.9, 0.9]
    path = tmp_path / "invalid.json"
    path.write_text(json.dumps(document))
    with pytest.raises(ScenarioError) as excinfo:
        ScenarioLoader(path).load()
    assert excinfo.value.report is not None
    assert not excinfo.value.report.ok


def test_gaussian_scenario_file(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(build_gaussian_example().to_dict()))
    assert ScenarioLoader(path).load() == build_gaussian_example()


def test_resolve_bundled_names():
    assert resolve_scenario("discrete-example", grid=5).na == 5
    assert resolve_scenario("gaslight").name == "gaslight"
    assert resolve_scenario("gaussian-example") == build_gaussian_example()
    with pytest.raises(FileNotFoundError):
        resolve_scenario("no-such-scenario")
