"""
Tests for the manipulator's ex ante and interim designs.
"""
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_model
from lib.analysis.deviation import epsilon_profile, evaluate_dm_objective
from lib.errors import DomainError, ResourceCapError
from lib.model.paths import NEGLIGIBLE_MASS
from lib.model.scenarios import build_discrete_example, build_gaslight
from lib.solvers.dm_solver import solve
from lib.solvers.im_designer import (ManipulationPlan, check_consistency, design_histories, disintegrate,
                                     evaluate_im_objective, perturb_plan, reference_hidden,
                                     reference_observable, relation_residual, snap_conditional, snap_joint,
                                     solve_ex_ante, solve_interim)


def _designed(model):
    policy, _, _ = solve(model)
    plan, values, w_total = solve_ex_ante(model, policy)
    return policy, plan, values, w_total


def test_ex_ante_value_decomposes_over_hidden_states(rng):
    for _ in range(50):
        model = random_model(rng)
        policy, _, ex_ante_values, w_total = _designed(model)
        interim_plan, interim_values = solve_interim(model, policy)
        assert relation_residual(ex_ante_values, interim_values, model) < 1e-7
        assert_allclose(interim_values.aggregate(model, ()), w_total, atol=1e-7)
        assert_allclose(evaluate_im_objective(model, policy, interim_plan), w_total, atol=1e-7)


def test_disintegration_keeps_the_objective(rng):
    for _ in range(50):
        model = random_model(rng)
        policy, plan, _, w_total = _designed(model)
        assert_allclose(evaluate_im_objective(model, policy, plan), w_total, atol=1e-7)
        factored = disintegrate(plan, model)
        assert factored.scheme == "interim"
        assert check_consistency(factored, model).ok
        assert_allclose(evaluate_im_objective(model, policy, factored), w_total, atol=1e-7)


def test_designs_beat_their_perturbations(rng):
    for _ in range(20):
        model = random_model(rng)
        policy, plan, _, w_total = _designed(model)
        interim_plan, _ = solve_interim(model, policy)
        for _ in range(5):
            neighbour = perturb_plan(plan, model, rng, strength=float(rng.uniform(0.05, 1.0)))
            assert check_consistency(neighbour, model).ok
            assert w_total <= evaluate_im_objective(model, policy, neighbour) + 1e-7

            neighbour = perturb_plan(interim_plan, model, rng, strength=float(rng.uniform(0.05, 1.0)))
            assert w_total <= evaluate_im_objective(model, policy, neighbour) + 1e-7


def test_free_manipulation_is_truthful(rng):
    for _ in range(20):
        model = random_model(rng)
        model = replace(model, im_cost=np.zeros_like(model.im_cost))
        policy, plan, _, w_total = _designed(model)
        assert_allclose(w_total, 0.0, atol=1e-9)
        assert_allclose(plan.table(()), model.initial_joint_law(), atol=1e-9)
        truthful = ManipulationPlan.truthful(model, policy)
        assert_allclose(evaluate_im_objective(model, policy, truthful), 0.0, atol=1e-12)


def test_truthful_plan_costs_only_the_running_cost():
    model = build_gaslight(horizon=2)
    policy, _, _ = solve(model)
    for scheme in ("ex_ante", "interim"):
        truthful = ManipulationPlan.truthful(model, policy, scheme=scheme)
        assert check_consistency(truthful, model).ok
        expected = 0.0
        joint = model.initial_joint_law()
        for x, y in zip(*np.nonzero(joint)):
            a = policy.action((int(x),))
            expected += joint[x, y] * model.im_cost[x, y, a]
            child = model.transition(int(x), int(y), a)
            for x1, y1 in zip(*np.nonzero(child)):
                a1 = policy.action((int(x), a, int(x1)))
                expected += joint[x, y] * child[x1, y1] * model.im_discount * model.im_cost[x1, y1, a1]
        assert_allclose(evaluate_im_objective(model, policy, truthful), expected, atol=1e-12)


def test_truthful_plan_needs_initial_observable_law(rng):
    model = random_model(rng, with_initial_x=False)
    policy, _, _ = solve(model)
    with pytest.raises(DomainError):
        ManipulationPlan.truthful(model, policy)


def test_design_without_initial_observable_law(rng):
    # stage 0 then carries no manipulation cost, only the Y-marginal constraint
    model = random_model(rng, nx=2, ny=2, horizon=1, with_initial_x=False)
    policy, plan, _, w_total = _designed(model)
    costs = np.array([[model.im_cost[x, y, policy.action((x,))] for y in range(2)] for x in range(2)])
    expected = float(np.dot(costs.min(axis=0), model.initial_hidden_law))
    assert_allclose(w_total, expected, atol=1e-9)
    assert check_consistency(plan, model).ok


def test_interim_rows_without_hidden_mass_use_observation_law():
    model = build_discrete_example(grid=3, initial_hidden_law=(1.0, 0.0))
    policy, _, _ = solve(model)
    plan, values = solve_interim(model, policy)
    assert_allclose(plan.table(())[1], reference_observable(model, ()))
    assert ((), 0) in values.interim
    assert ((), 1) not in values.interim
    assert check_consistency(plan, model).ok


def test_design_histories_cover_every_observation(rng):
    model = random_model(rng, nx=3, ny=2, horizon=3)
    policy, plan, _, _ = _designed(model)
    histories = design_histories(model, policy)
    assert sorted(histories) == plan.histories()
    for history in plan.histories(stage=1):
        assert history[0][1] in np.nonzero(model.initial_hidden_law)[0]
    assert len(plan.histories(stage=0)) == 1


def test_design_cap():
    model = build_discrete_example(grid=3)
    policy, _, _ = solve(model)
    with pytest.raises(ResourceCapError):
        solve_ex_ante(model, policy, cap=2)
    with pytest.raises(ResourceCapError):
        solve_interim(model, policy, cap=2)


def test_plan_export_reloads(rng):
    model = random_model(rng, nx=2, ny=2, horizon=2)
    policy, plan, _, w_total = _designed(model)
    exported = plan.to_dict(model)
    assert exported['scheme'] == "ex_ante"
    assert all(entry['residual'] <= 1e-8 for entry in exported['entries'])
    reloaded = ManipulationPlan.from_dict(exported)
    assert reloaded.histories() == plan.histories()
    assert_allclose(evaluate_im_objective(model, policy, reloaded), w_total, atol=1e-9)


def test_plan_documents_are_checked():
    with pytest.raises(DomainError):
        ManipulationPlan.from_dict({'scheme': "ex_ante"})
    with pytest.raises(DomainError):
        ManipulationPlan("pooling", 1, {})


def test_only_consistent_ex_ante_plans_disintegrate(rng):
    model = random_model(rng, nx=2, ny=2, horizon=1)
    policy, plan, _, _ = _designed(model)
    interim_plan, _ = solve_interim(model, policy)
    with pytest.raises(DomainError):
        disintegrate(interim_plan, model)

    broken = ManipulationPlan("ex_ante", plan.horizon, {(): np.full((2, 2), 0.5)})
    report = check_consistency(broken, model)
    assert not report.ok
    assert report.worst_history == ()
    with pytest.raises(DomainError):
        disintegrate(broken, model)


def test_perturbation_strength_is_checked(rng):
    model = random_model(rng, nx=2, ny=2, horizon=1)
    _, plan, _, _ = _designed(model)
    with pytest.raises(DomainError):
        perturb_plan(plan, model, rng, strength=1.5)


def test_designs_carry_no_round_off_mass(rng):
    for _ in range(200):
        model = random_model(rng, horizon=3)
        policy, plan, _, w_total = _designed(model)
        for history in plan.histories():
            table = plan.table(history)
            assert not table[:, reference_hidden(model, history) <= 0.0].any()
            assert not ((table > 0.0) & (table <= NEGLIGIBLE_MASS)).any()
        assert np.isfinite(evaluate_dm_objective(model, policy, plan))
        assert_allclose(evaluate_im_objective(model, policy, plan), w_total, atol=1e-7)
        assert check_consistency(perturb_plan(plan, model, rng, strength=1.0), model).ok


def test_snapping_keeps_marginals():
    hidden = np.array([0.6, 0.0, 0.4])
    table = np.array([[0.6, 5.55e-17, 0.4 - 1e-14], [0.0, 0.0, 1e-14]])
    snapped = snap_joint(table, hidden)
    assert snapped[0, 1] == 0.0
    assert snapped[1, 2] == 0.0
    assert_allclose(snapped.sum(axis=0), hidden, atol=1e-15)
    assert_allclose(snap_conditional(np.array([0.5, 1e-15, 0.5])), [0.5, 0.0, 0.5])


def test_walkers_ignore_negligible_mass():
    model = build_discrete_example(grid=3, initial_hidden_law=(1.0, 0.0))
    policy, _, _ = solve(model)
    truthful = ManipulationPlan.truthful(model, policy)
    tables = {history: np.array(table) for history, table in truthful.tables.items()}
    tables[()][0, 1] = 5.55e-17
    leaked = ManipulationPlan("ex_ante", truthful.horizon, tables)

    expected = evaluate_dm_objective(model, policy)
    for route in ("paths", "information_state"):
        assert_allclose(evaluate_dm_objective(model, policy, leaked, route=route), expected, atol=1e-12)
    assert_allclose(evaluate_im_objective(model, policy, leaked),
                    evaluate_im_objective(model, policy, truthful), atol=1e-12)
    assert_allclose(epsilon_profile(model, leaked), 0.0, atol=1e-12)
