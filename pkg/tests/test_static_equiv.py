"""
Static reduction tests: Gauss-Hermite grids, reference-measure quadrature
against the dynamic form, stationarity and the Radner oracle
"""
import numpy as np
import pytest

from benchmarks.benchmark_library import build_benchmark
from benchmarks.oracles import gaussian_one_step, radner_coefficients
from information.info_structure import AgentInformation, InformationStructure, compile_information
from model.observations import PointwiseObservation
from model.problem_spec import DiscreteTeamSpec, InitialLaw
from static.static_team import (
    gauss_hermite_grid, quadrature_payoff, static_compare, static_payoff, static_stationarity, to_static,
    transition_quadrature_payoff,
)
from utils.exceptions import DimensionCapExceeded


def _one_step_spec(running=None, terminal=None, gain=1.0):
    """x(1) = gain * u + w from x(0) = 0"""
    zeros = lambda x: np.zeros(np.shape(x)[0])
    return DiscreteTeamSpec(
        horizon_steps=1,
        state_dim=1,
        action_dims=(1,),
        action_boxes=(np.array([[-5.0, 5.0]]),),
        drift_maps=lambda k, history, u: gain * u,
        noise_cov_factor=np.eye(1),
        observations=(PointwiseObservation((0,)),),
        initial_law=InitialLaw(np.zeros(1)),
        running_cost=running or (lambda k, x, u: zeros(x)),
        terminal_cost=terminal or zeros,
    )


def _two_step_policy(dspec, make_policy, init=-0.3):
    fm = compile_information(InformationStructure((AgentInformation(recall='perfect'),)), dspec.grid, dspec.obs_dims)
    return make_policy(dspec, fm, kind="affine", init=init, segments=2), fm


@pytest.mark.unit
def test_gauss_hermite_standard_normal_moments():
    """Weights sum to 1 and reproduce E x^2 = 1, E x^4 = 3"""
    grid = gauss_hermite_grid(10, 1)
    x = grid.nodes[:, 0]
    assert grid.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.dot(grid.weights, x ** 2) == pytest.approx(1.0, rel=1e-12)
    assert np.dot(grid.weights, x ** 4) == pytest.approx(3.0, rel=1e-12)


@pytest.mark.unit
def test_gauss_hermite_tensor_size():
    grid = gauss_hermite_grid(7, 2)
    assert grid.total_nodes == 49
    assert grid.nodes.shape == (49, 2)
    assert grid.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert gauss_hermite_grid(4, 0).total_nodes == 1
    with pytest.raises(ValueError):
        gauss_hermite_grid(0, 1)


@pytest.mark.unit
def test_static_form_matches_transition_quadrature(make_policy):
    """Two-step affine recursion: static and dynamic quadrature agree to 1e-8"""
    dspec = build_benchmark("affine-two-step")
    policy, _ = _two_step_policy(dspec, make_policy)
    sp = to_static(dspec)
    assert sp.quadrature_dimension == 3
    static = quadrature_payoff(sp, policy, order=40)
    dynamic = transition_quadrature_payoff(dspec, policy, order=40)
    assert static == pytest.approx(dynamic, rel=1e-8)


@pytest.mark.unit
def test_one_step_quadrature_closed_form(markov_map, make_policy):
    """Constant decision 0.5: E(0.5 + w)^2 = 1.25"""
    dspec = build_benchmark("gaussian-one-step")
    policy = make_policy(dspec, markov_map(dspec, dspec.grid), kind="constant", init=0.5)
    assert quadrature_payoff(to_static(dspec), policy, order=10) == pytest.approx(gaussian_one_step(0.5), rel=1e-10)


@pytest.mark.unit
def test_weight_functional_integrates_to_one(markov_map, make_policy):
    """phi = 3 costs 3 whatever the decision"""
    dspec = _one_step_spec(terminal=lambda x: np.full(np.shape(x)[0], 3.0))
    policy = make_policy(dspec, markov_map(dspec, dspec.grid), kind="constant", init=1.0)
    assert quadrature_payoff(to_static(dspec), policy, order=20) == pytest.approx(3.0, rel=1e-9)


@pytest.mark.unit
def test_zero_drift_static_form_is_plain_gaussian_moment(markov_map, make_policy):
    """f = 0, phi = x^2: order 2 is already exact"""
    dspec = build_benchmark("gaussian-one-step", {"B": 0.0})
    policy = make_policy(dspec, markov_map(dspec, dspec.grid), kind="constant", init=2.0)
    sp = to_static(dspec)
    assert quadrature_payoff(sp, policy, order=2) == pytest.approx(1.0, rel=1e-12)
    states = np.random.default_rng(0).normal(size=(30, 2, 1))
    np.testing.assert_array_equal(sp.weight_functional(states, np.full((30, 1, 1), 2.0)), 1.0)


@pytest.mark.statistical
def test_static_compare_against_direct_monte_carlo(markov_map, make_policy):
    dspec = build_benchmark("gaussian-one-step")
    fm = markov_map(dspec, dspec.grid)
    policy = make_policy(dspec, fm, kind="constant", init=0.5)
    comparison = static_compare(dspec, policy, fm, order=10, mc_paths=20000, seed=1, z_score=4.0)
    assert comparison.passed
    assert comparison.quadrature == pytest.approx(1.25, rel=1e-10)


@pytest.mark.unit
def test_stationarity_of_single_decision(markov_map, make_policy):
    """l = (u - 1)^2 is flat at u = 1 and has slope -2 at u = 0"""
    dspec = _one_step_spec(running=lambda k, x, u: (u[:, 0] - 1.0) ** 2, gain=0.0)
    fm = markov_map(dspec, dspec.grid)
    at_optimum = static_stationarity(to_static(dspec), make_policy(dspec, fm, kind="constant", init=1.0), order=4)
    assert at_optimum.stationary
    assert at_optimum.norms[0] < 1e-8
    at_zero = static_stationarity(to_static(dspec), make_policy(dspec, fm, kind="constant", init=0.0), order=4)
    assert not at_zero.stationary
    assert at_zero.gradients[0][0] == pytest.approx(-2.0, rel=1e-6)


@pytest.mark.unit
def test_symmetric_radner_gradients_coincide(markov_map, make_policy):
    """Swapping the agents leaves the problem unchanged, so both gradients agree"""
    dspec = build_benchmark("radner-quadratic", {"R": [[1.0, 0.25], [0.25, 1.0]]})
    policy = make_policy(dspec, markov_map(dspec, dspec.grid), kind="linear", init=0.2)
    report = static_stationarity(to_static(dspec), policy, order=6)
    np.testing.assert_allclose(report.gradients[0], report.gradients[1], rtol=1e-6)
    assert report.norms[0] > 1e-3


@pytest.mark.unit
def test_radner_oracle_coefficients():
    a = radner_coefficients([[1.0, 0.25], [0.25, 0.5]], [[-0.5, 0.0], [0.0, -0.5]], [[1.0, 0.6], [0.6, 1.0]])
    np.testing.assert_allclose(a, [0.366492, 0.890052], atol=1e-6)


@pytest.mark.unit
def test_radner_oracle_is_stationary(markov_map, make_policy):
    """The normal-equation rules zero the static gradient"""
    dspec = build_benchmark("radner-quadratic")
    a = radner_coefficients([[1.0, 0.25], [0.25, 0.5]], [[-0.5, 0.0], [0.0, -0.5]], [[1.0, 0.6], [0.6, 1.0]])
    policy = make_policy(dspec, markov_map(dspec, dspec.grid), kind="linear", init=[[a[0]], [a[1]]])
    report = static_stationarity(to_static(dspec), policy, order=6, tolerance=1e-4)
    assert report.stationary
    assert max(report.norms.values()) <= 1e-4
    assert set(report.to_dict()['norms']) == {'0', '1'}


@pytest.mark.unit
def test_dimension_cap(make_policy):
    dspec = build_benchmark("affine-two-step")
    policy, _ = _two_step_policy(dspec, make_policy)
    with pytest.raises(DimensionCapExceeded):
        quadrature_payoff(to_static(dspec), policy, order=5, dimension_cap=2)
    with pytest.raises(DimensionCapExceeded):
        transition_quadrature_payoff(dspec, policy, order=5, dimension_cap=2)


@pytest.mark.statistical
def test_static_payoff_falls_back_to_weighted_monte_carlo(markov_map, make_policy):
    """Above the cap the payoff comes from Lambda-weighted reference paths"""
    dspec = build_benchmark("gaussian-one-step")
    policy = make_policy(dspec, markov_map(dspec, dspec.grid), kind="constant", init=0.5)
    sp = to_static(dspec)
    exact = static_payoff(sp, policy, order=10)
    assert exact.method == 'quadrature'
    assert exact.value == pytest.approx(1.25, rel=1e-10)
    fallback = static_payoff(sp, policy, dimension_cap=0, mc_paths=20000, seed=4)
    assert fallback.method == 'weighted-monte-carlo'
    assert abs(fallback.value - 1.25) < 5 * fallback.standard_error
