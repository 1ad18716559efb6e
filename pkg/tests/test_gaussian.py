"""
Tests for the linear-Gaussian closed forms against their numeric oracles.
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from lib.analysis.gaussian import (GaussianScenario, coefficient_of_variation, cv_monotonicity_experiment,
                                   design_objective, design_oracle, dm_stage1_policy, gaussian_record,
                                   im_stage1_design, iota, policy_oracle)
from lib.errors import DomainError
from lib.model.scenarios import build_gaussian_example


def test_unit_coefficients():
    scenario = build_gaussian_example()
    assert_allclose(iota(1.0, 1.0, 1.0), 0.25)
    design = im_stage1_design(scenario)
    assert design.has_leverage
    assert_allclose(design.std_dev, 2.0)
    assert design.correlation_sign == -1.0


def test_design_closed_form():
    scenario = GaussianScenario(h=2.0, b_tilde=0.5, b_hat=1.5, c_hat=1.2, r_hat=0.7, a0=0.4, y0=-0.3)
    k = 1.2 * 0.5 * 2.0 / (2.0 * 5.0)
    coupling = 1.2 * 1.5 * 0.4 - 0.7 * (0.5 * -0.3 + 1.5 * 0.4)
    design = im_stage1_design(scenario)
    assert_allclose(design.mean, -coupling / (2.0 * k))
    assert_allclose(design.objective, -(coupling ** 2 + 0.7 ** 2) / 4.0)
    assert_allclose(design_objective(scenario, design.mean, design.std_dev, design.correlation_sign),
                    design.objective)


def test_mirror_branch_flips_the_correlation():
    design = im_stage1_design(GaussianScenario(h=-1.0, b_tilde=1.0, b_hat=1.0, c_hat=1.0, r_hat=1.0))
    assert design.correlation_sign == 1.0
    assert design.std_dev > 0.0


@pytest.mark.parametrize("scenario", [
    build_gaussian_example(),
    GaussianScenario(h=0.5, b_tilde=1.5, b_hat=-0.8, c_hat=2.0, r_hat=0.3, a0=1.0, y0=0.5, x1=-0.7),
    GaussianScenario(h=2.0, b_tilde=0.7, b_hat=1.0, c_hat=0.4, r_hat=1.5, a0=-0.2, y0=0.0, x1=2.0),
])
def test_policy_matches_quadrature_oracle(scenario):
    assert abs(policy_oracle(scenario) - dm_stage1_policy(scenario)) <= 1e-4


@pytest.mark.parametrize("scenario", [
    build_gaussian_example(),
    GaussianScenario(h=0.5, b_tilde=1.5, b_hat=-0.8, c_hat=2.0, r_hat=0.3, a0=1.0, y0=0.5),
    GaussianScenario(h=-1.0, b_tilde=1.0, b_hat=1.0, c_hat=1.0, r_hat=1.0, a0=0.5),
])
def test_design_matches_grid_oracle(scenario):
    design = im_stage1_design(scenario)
    mean, std_dev, value = design_oracle(scenario)
    assert abs(mean - design.mean) <= 1e-4
    assert abs(std_dev - design.std_dev) <= 1e-4
    assert abs(value - design.objective) <= 1e-4


@pytest.mark.parametrize("changes", [{'h': 0.0}, {'b_tilde': 0.0}])
def test_no_leverage(changes):
    scenario = build_gaussian_example().with_values(**changes)
    design = im_stage1_design(scenario)
    assert design.status == "no_leverage"
    assert not design.has_leverage
    assert design.mean is None
    with pytest.raises(DomainError):
        design_oracle(scenario)
    assert 'mean' not in gaussian_record(scenario, verify=True)['oracle_gaps']


def test_cv_is_monotone_without_initial_hidden_offset():
    for c_hat, b_hat, a0 in ((1.0, 1.0, 0.5), (2.0, -0.5, 1.5), (0.3, 2.0, -1.0)):
        scenario = GaussianScenario(h=1.0, b_tilde=1.0, b_hat=b_hat, c_hat=c_hat, r_hat=1.0, a0=a0, y0=0.0)
        experiment = cv_monotonicity_experiment(scenario, np.linspace(0.0, 2.0 * c_hat, 41)[1:])
        assert experiment.monotone
        # r_hat = c_hat has an infinite CV and is skipped
        assert len(experiment.rows) == 39
        assert all(row[0] != pytest.approx(c_hat) for row in experiment.rows)


def test_cv_can_fail_to_be_monotone():
    scenario = GaussianScenario(h=1.0, b_tilde=1.0, b_hat=1.0, c_hat=1.0, r_hat=1.0, a0=1.0, y0=1.0)
    experiment = cv_monotonicity_experiment(scenario, np.linspace(0.0, 2.0, 41)[1:])
    assert not experiment.monotone
    assert experiment.to_dict()['monotone'] is False


def test_cv_closed_form_and_infinite_case():
    scenario = GaussianScenario(h=1.0, b_tilde=1.0, b_hat=1.0, c_hat=1.0, r_hat=2.0, a0=0.5, y0=0.0)
    assert_allclose(coefficient_of_variation(scenario), 2.0 / abs(2.0 * 0.5 - 0.5))
    with pytest.raises(DomainError):
        coefficient_of_variation(scenario.with_values(a0=0.0))


def test_scenario_checks_cost_coefficients():
    with pytest.raises(DomainError):
        GaussianScenario(h=1.0, b_tilde=1.0, b_hat=1.0, c_hat=0.0, r_hat=1.0)
    with pytest.raises(DomainError):
        build_gaussian_example().with_values(r_hat=-1.0)


def test_record_with_verification():
    record = gaussian_record(build_gaussian_example(), verify=True)
    assert_allclose(record['iota'], 0.25)
    assert record['design']['status'] == "optimal"
    assert all(gap <= 1e-4 for gap in record['oracle_gaps'].values())
    assert record['scenario']['kind'] == "gaussian"
