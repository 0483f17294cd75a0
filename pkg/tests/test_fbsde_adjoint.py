"""
Adjoint tests: Hamiltonians and their action gradients, backward regression
of the payoff BSDE under both measures and the variational process
"""
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adjoint.fbsde import (
    hamiltonian, hamiltonian_augmented, hamiltonian_gradient, simulate_variational, solve_bsde,
    solve_bsde_reference,
)
from girsanov.likelihood import accumulate_likelihood
from model.families import linear_quadratic_spec
from model.problem_spec import TimeGrid
from simulation.path_simulator import ORIGINAL, simulate_controlled, simulate_reference
from utils.exceptions import NonConvergentFixedPoint

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)

SCALAR_LQ = linear_quadratic_spec({"A": [[0.0]], "B": 1.0, "Q": 1.0, "R": 1.0, "horizon": 1.0, "action_bound": 5.0})


def _ones(x):
    return np.ones(np.shape(x)[0])


def _lq_costs():
    return dict(running=lambda t, x, u: x[:, 0] ** 2 + u[:, 0] ** 2, terminal=lambda x: x[:, 0] ** 2)


@pytest.mark.unit
def test_hamiltonian_minimiser_is_clamped(toy1_spec):
    """H = u^2 + q u at x = 0 is minimised at clamp(-q/2, -5, 5)"""
    actions = np.linspace(-5.0, 5.0, 2001)
    x = np.zeros((actions.size, 1))
    for q, expected in [(1.0, -0.5), (-3.0, 1.5), (20.0, -5.0)]:
        values = hamiltonian(toy1_spec, 0.0, x, np.full((actions.size, 1), q), actions[:, None])
        assert actions[np.argmin(values)] == pytest.approx(expected, abs=1e-9)


@pytest.mark.unit
def test_hamiltonian_reduces_to_running_cost(toy1_spec, make_scalar_spec):
    """Q = 0, or f = 0, leaves only l"""
    assert hamiltonian(toy1_spec, 0.3, np.array([1.0]), np.array([0.0]), np.array([2.0])) == pytest.approx(5.0)
    driftless = make_scalar_spec(drift=lambda t, x, u: np.zeros_like(x), **_lq_costs())
    assert hamiltonian(driftless, 0.0, np.array([1.0]), np.array([7.0]), np.array([2.0])) == pytest.approx(5.0)


@settings(max_examples=50, deadline=None)
@given(x=finite, u=st.floats(-5, 5), q1=finite, q2=finite, weight=st.floats(0, 1))
def test_hamiltonian_is_affine_in_q(x, u, q1, q2, weight):
    mixed = hamiltonian(SCALAR_LQ, 0.0, np.array([x]), np.array([weight * q1 + (1 - weight) * q2]), np.array([u]))
    expected = (weight * hamiltonian(SCALAR_LQ, 0.0, np.array([x]), np.array([q1]), np.array([u]))
                + (1 - weight) * hamiltonian(SCALAR_LQ, 0.0, np.array([x]), np.array([q2]), np.array([u])))
    assert mixed == pytest.approx(expected, rel=1e-9, abs=1e-9)


@pytest.mark.unit
def test_augmented_hamiltonian_scales_with_likelihood(toy1_spec):
    x, q, u = np.array([[0.5], [-1.0]]), np.array([[1.0], [2.0]]), np.array([[0.3], [-0.2]])
    np.testing.assert_allclose(hamiltonian_augmented(toy1_spec, 0.0, x, 2.0, None, q, u),
                               2.0 * hamiltonian(toy1_spec, 0.0, x, q, u))
    np.testing.assert_allclose(hamiltonian_augmented(toy1_spec, 0.0, x, 2.0, np.array([7.0, -3.0]), q, u),
                               hamiltonian_augmented(toy1_spec, 0.0, x, 2.0, None, q, u))


@pytest.mark.unit
def test_hamiltonian_gradient_in_the_action(toy1_spec):
    """dH/du = 2u + q"""
    rng = np.random.default_rng(0)
    x, q, u = rng.normal(size=(10, 1)), rng.normal(size=(10, 1)), rng.uniform(-2, 2, size=(10, 1))
    np.testing.assert_allclose(hamiltonian_gradient(toy1_spec, 0.0, x, q, u), 2 * u + q, rtol=1e-6, atol=1e-8)


@pytest.mark.unit
def test_hamiltonian_gradient_without_analytic_jacobian(make_scalar_spec):
    """Central differences of f = 3u: dH/du = 2u + 3q"""
    spec = make_scalar_spec(drift=lambda t, x, u: 3.0 * u, **_lq_costs())
    x, q, u = np.zeros((3, 1)), np.array([[1.0], [0.0], [-2.0]]), np.array([[0.5], [1.0], [0.0]])
    np.testing.assert_allclose(hamiltonian_gradient(spec, 0.0, x, q, u), 2 * u + 3 * q, rtol=1e-6, atol=1e-8)


@pytest.mark.unit
def test_unit_running_cost_gives_remaining_time(make_scalar_spec, grid20, markov_map, make_policy):
    """l = 1, phi = 0: Psi(t_k) = (M - k) dt and Q = 0"""
    spec = make_scalar_spec(running=lambda t, x, u: _ones(x))
    fm = markov_map(spec, grid20)
    policy = make_policy(spec, fm, kind="affine", init=0.2)
    adjoint = solve_bsde(spec, simulate_controlled(spec, policy, fm, grid20, 500, seed=0), policy)
    expected = (20 - np.arange(21)) * grid20.step
    np.testing.assert_allclose(adjoint.psi, np.broadcast_to(expected, (500, 21)), atol=1e-10)
    np.testing.assert_allclose(adjoint.q, 0.0, atol=1e-10)
    assert adjoint.psi.shape == (500, 21)
    assert adjoint.q.shape == (500, 20, 1)
    assert adjoint.num_steps == 20


@pytest.mark.unit
def test_constant_terminal_cost_in_reference_form(make_scalar_spec, grid20, markov_map, make_policy):
    """phi = c and l = 0 give Psi = c on every path"""
    spec = make_scalar_spec(terminal=lambda x: np.full(np.shape(x)[0], 1.5))
    fm = markov_map(spec, grid20)
    policy = make_policy(spec, fm, kind="affine", init=0.5)
    adjoint = solve_bsde_reference(spec, simulate_reference(spec, grid20, 400, seed=1), policy)
    np.testing.assert_allclose(adjoint.psi, 1.5, atol=1e-9)
    assert adjoint.measure_tag == 'reference'


@pytest.mark.unit
def test_forms_coincide_without_drift(make_scalar_spec, grid20, markov_map, make_policy):
    """f = 0 removes the Q-dependent driver, so both sweeps agree"""
    spec = make_scalar_spec(drift=lambda t, x, u: np.zeros_like(x), **_lq_costs())
    fm = markov_map(spec, grid20)
    policy = make_policy(spec, fm, kind="linear", init=-0.5)
    reference = simulate_reference(spec, grid20, 1000, seed=2)
    via_reference = solve_bsde_reference(spec, reference, policy)
    via_original = solve_bsde(spec, replace(reference, measure_tag=ORIGINAL), policy)
    np.testing.assert_allclose(via_reference.psi, via_original.psi, atol=1e-12)
    np.testing.assert_allclose(via_reference.q, via_original.q, atol=1e-12)


@pytest.mark.unit
def test_reference_sweep_raises_on_non_finite_driver(make_scalar_spec, grid20, markov_map, make_policy):
    spec = make_scalar_spec(drift=lambda t, x, u: np.full_like(x, np.inf), **_lq_costs())
    fm = markov_map(spec, grid20)
    policy = make_policy(spec, fm)
    reference = simulate_reference(spec, grid20, 200, seed=5)
    with np.errstate(invalid="ignore", over="ignore"), pytest.raises(NonConvergentFixedPoint) as excinfo:
        solve_bsde_reference(spec, reference, policy)
    assert excinfo.value.step == grid20.num_steps - 1


@pytest.mark.statistical
def test_adjoint_recovers_lq_value(toy1_spec, grid20, markov_map, make_policy):
    """u = -x: Psi(0) = J* = 1 and Q(t, x) = 2x"""
    fm = markov_map(toy1_spec, grid20)
    policy = make_policy(toy1_spec, fm, kind="linear", init=-1.0)
    bundle = simulate_controlled(toy1_spec, policy, fm, grid20, 20000, seed=3)
    adjoint = solve_bsde(toy1_spec, bundle, policy)
    assert abs(np.mean(adjoint.psi[:, 0]) - 1.0) < 0.05
    slope = np.polyfit(bundle.states[:, 10, 0], adjoint.q[:, 10, 0], 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)
    assert np.all(np.isfinite(adjoint.residual_norms))
    assert adjoint.ridge_steps == ()


@pytest.mark.acceptance
@pytest.mark.slow
def test_adjoint_value_large_ensemble(toy1_spec, grid50, markov_map, make_policy):
    fm = markov_map(toy1_spec, grid50)
    policy = make_policy(toy1_spec, fm, kind="linear", init=-1.0)
    adjoint = solve_bsde(toy1_spec, simulate_controlled(toy1_spec, policy, fm, grid50, 100000, seed=13), policy)
    assert abs(np.mean(adjoint.psi[:, 0]) - 1.0) < 0.02


@pytest.mark.statistical
def test_reference_form_recovers_lq_value(toy1_spec, grid20, markov_map, make_policy):
    """Driftless paths with the Q sigma^-1 f driver give the same initial value"""
    fm = markov_map(toy1_spec, grid20)
    policy = make_policy(toy1_spec, fm, kind="linear", init=-1.0)
    adjoint = solve_bsde_reference(toy1_spec, simulate_reference(toy1_spec, grid20, 20000, seed=4), policy)
    assert abs(np.mean(adjoint.psi[:, 0]) - 1.0) < 0.1


@pytest.mark.unit
def test_variational_process_at_zero_control(toy1_spec, grid20, markov_map, make_policy):
    """u = 0 and du = 1 give Z(T) = sum dW"""
    fm = markov_map(toy1_spec, grid20)
    bundle = simulate_reference(toy1_spec, grid20, 200, seed=5)
    variational = simulate_variational(toy1_spec, bundle, make_policy(toy1_spec, fm),
                                       make_policy(toy1_spec, fm, kind="constant", init=1.0))
    np.testing.assert_allclose(variational.z[:, -1], bundle.noise_increments[:, :, 0].sum(axis=1), atol=1e-12)
    zero = simulate_variational(toy1_spec, bundle, make_policy(toy1_spec, fm), np.zeros((200, 20, 1)))
    np.testing.assert_array_equal(zero.z, 0.0)


@pytest.mark.unit
def test_variational_process_matches_finite_difference(toy1_spec, grid20, markov_map, make_policy):
    fm = markov_map(toy1_spec, grid20)
    bundle = simulate_reference(toy1_spec, grid20, 2000, seed=6)
    variational = simulate_variational(toy1_spec, bundle, make_policy(toy1_spec, fm, kind="tanh", init=0.3),
                                       np.full((2000, 20, 1), 0.5), epsilon=1e-3)
    assert variational.fd_correlation() >= 0.99
    assert variational.fd_rmse() <= 5e-3


@pytest.mark.unit
def test_measure_mismatch_is_refused(toy1_spec, markov_map, make_policy):
    grid = TimeGrid(5, 1.0)
    fm = markov_map(toy1_spec, grid)
    policy = make_policy(toy1_spec, fm)
    reference = simulate_reference(toy1_spec, grid, 10, seed=0)
    controlled = simulate_controlled(toy1_spec, policy, fm, grid, 10, seed=0)
    with pytest.raises(ValueError):
        solve_bsde(toy1_spec, reference, policy)
    with pytest.raises(ValueError):
        solve_bsde_reference(toy1_spec, controlled, policy)
    with pytest.raises(ValueError):
        simulate_variational(toy1_spec, controlled, policy, np.zeros((10, 5, 1)))
    assert accumulate_likelihood(reference, policy, fm, toy1_spec).controls.shape == (10, 5, 1)
