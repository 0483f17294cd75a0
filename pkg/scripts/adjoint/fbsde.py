"""
Adjoint FBSDE Module
====================

Hamiltonians and the backward equation of the team payoff:

    H(t, x, Q, u)      = l(t,x,u) + Q . sigma^-1 f(t,x,u)
    H_aug(t, x, L, Q, u) = L * H(t, x, Q, u)

    original measure:  dPsi = -l dt + Q dW^u,             Psi(T) = phi(x(T))
    reference measure: dPsi = -(l + Q . sigma^-1 f) dt + Q dW, Psi(T) = phi(x(T))

Backward steps regress on a polynomial basis of x(k):

    Psi_k = E[Psi_{k+1} | x_k] + driver * dt
    Q_k   = E[(Psi_{k+1} - E[Psi_{k+1} | x_k]) dW_k | x_k] / dt

plus the variational process Z, the derivative of the likelihood ratio in a
direction of the decisions.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from model.validation import SpecLike, sigma_inv_drift, solve_diffusion, unwrap_spec
from optimization.regression import PolynomialBasis, RegressionDesign
from simulation.path_simulator import ORIGINAL, REFERENCE, PathBundle, replay_controls
from girsanov.likelihood import log_likelihood_from_controls
from utils.exceptions import NonConvergentFixedPoint

logger = logging.getLogger(__name__)

DERIVATIVE_STEP = 1e-5


def _batch(values, width: int) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1, width)


def hamiltonian(spec: SpecLike, t: float, x: np.ndarray, q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """l + Q . sigma^-1 f, vectorised over paths (scalar for single points)"""
    spec = unwrap_spec(spec)
    single = np.ndim(x) == 1
    x = _batch(x, spec.state_dim)
    q = _batch(q, spec.state_dim)
    u = _batch(u, spec.total_action_dim)
    cost = np.asarray(spec.running_cost(t, x, u), dtype=float).reshape(-1)
    value = cost + np.sum(q * sigma_inv_drift(spec, t, x, u), axis=1)
    return float(value[0]) if single else value


def hamiltonian_augmented(spec: SpecLike, t: float, x: np.ndarray, likelihood, psi, q: np.ndarray,
                          u: np.ndarray) -> np.ndarray:
    """Lambda * H: the Hamiltonian of the (x, Lambda) system

    `psi` is accepted for the full (x, Lambda, Psi, Q, u) signature; the
    augmented Hamiltonian does not depend on it.
    """
    del psi
    return np.asarray(likelihood, dtype=float) * hamiltonian(spec, t, x, q, u)


def _difference_steps(u: np.ndarray, j: int) -> np.ndarray:
    return DERIVATIVE_STEP * (1.0 + np.abs(u[:, j]))


def drift_ratio_jacobian(spec: SpecLike, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(P, n, D) derivative of sigma^-1 f in u; analytic hook or central differences"""
    spec = unwrap_spec(spec)
    num_paths, n = x.shape
    if spec.drift_jacobian is not None:
        jac_f = np.asarray(spec.drift_jacobian(t, x, u), dtype=float).reshape(num_paths, n, -1)
    else:
        jac_f = np.empty((num_paths, n, u.shape[1]))
        for j in range(u.shape[1]):
            h = _difference_steps(u, j)
            up, down = u.copy(), u.copy()
            up[:, j] += h
            down[:, j] -= h
            diff = (np.asarray(spec.drift(t, x, up), dtype=float).reshape(num_paths, n)
                    - np.asarray(spec.drift(t, x, down), dtype=float).reshape(num_paths, n))
            jac_f[:, :, j] = diff / (2.0 * h[:, None])
    return np.stack([solve_diffusion(spec, t, x, jac_f[:, :, j]) for j in range(jac_f.shape[2])], axis=2)


def cost_action_gradient(spec: SpecLike, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(P, D) central-difference derivative of l in u"""
    spec = unwrap_spec(spec)
    gradient = np.empty(u.shape)
    for j in range(u.shape[1]):
        h = _difference_steps(u, j)
        up, down = u.copy(), u.copy()
        up[:, j] += h
        down[:, j] -= h
        diff = (np.asarray(spec.running_cost(t, x, up), dtype=float).reshape(-1)
                - np.asarray(spec.running_cost(t, x, down), dtype=float).reshape(-1))
        gradient[:, j] = diff / (2.0 * h)
    return gradient


def hamiltonian_gradient(spec: SpecLike, t: float, x: np.ndarray, q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(P, D) derivative of H in the joint action"""
    return cost_action_gradient(spec, t, x, u) + np.einsum('pn,pnd->pd', q, drift_ratio_jacobian(spec, t, x, u))


@dataclass(frozen=True, eq=False)
class AdjointPath:
    """Regression estimates of (Psi, Q) along an ensemble"""
    psi: np.ndarray
    q: np.ndarray
    regression_basis: dict
    residual_norms: np.ndarray
    ridge_steps: Tuple[int, ...]
    measure_tag: str

    @property
    def num_steps(self) -> int:
        return self.q.shape[1]


def _controls(bundle: PathBundle, policy) -> np.ndarray:
    return bundle.controls if bundle.controls is not None else replay_controls(policy, bundle)


def _backward_sweep(spec, bundle: PathBundle, controls: np.ndarray, basis: PolynomialBasis,
                    drift_in_driver: bool) -> AdjointPath:
    num_paths, num_steps, n = bundle.noise_increments.shape
    times, dt = bundle.grid.times, bundle.grid.step
    psi = np.empty((num_paths, num_steps + 1))
    q = np.empty((num_paths, num_steps, n))
    residual_norms = np.empty(num_steps)
    ridge_steps = []
    psi[:, -1] = np.asarray(spec.terminal_cost(bundle.states[:, -1]), dtype=float).reshape(-1)

    for k in reversed(range(num_steps)):
        x = bundle.states[:, k]
        dw = bundle.noise_increments[:, k]
        design = RegressionDesign(x, basis)
        following = psi[:, k + 1]
        mean_fit = design.fit(following)
        centred = following - mean_fit.fitted
        q_fit = design.fit(centred[:, None] * dw / dt)
        q[:, k] = q_fit.fitted
        driver = np.asarray(spec.running_cost(times[k], x, controls[:, k]), dtype=float).reshape(-1)
        if drift_in_driver:
            driver = driver + np.sum(q[:, k] * sigma_inv_drift(spec, times[k], x, controls[:, k]), axis=1)
        psi[:, k] = mean_fit.fitted + driver * dt
        if drift_in_driver and not (np.all(np.isfinite(psi[:, k])) and np.all(np.isfinite(q[:, k]))):
            raise NonConvergentFixedPoint(k)
        residual = centred - np.sum(q[:, k] * dw, axis=1)
        residual_norms[k] = float(np.sqrt(np.mean(residual ** 2)))
        if mean_fit.ridge_used or q_fit.ridge_used:
            ridge_steps.append(k)

    if ridge_steps:
        logger.warning("ridge regression used at %d of %d backward steps", len(ridge_steps), num_steps)
    return AdjointPath(psi, q, basis.describe(), residual_norms, tuple(sorted(ridge_steps)), bundle.measure_tag)


def solve_bsde(spec: SpecLike, bundle: PathBundle, policy=None,
               basis: PolynomialBasis = PolynomialBasis()) -> AdjointPath:
    """Backward regression of dPsi = -l dt + Q dW^u on a controlled ensemble"""
    if bundle.measure_tag != ORIGINAL:
        raise ValueError("solve_bsde needs an original-measure bundle")
    spec = unwrap_spec(spec)
    adjoint = _backward_sweep(spec, bundle, _controls(bundle, policy), basis, drift_in_driver=False)
    logger.info("adjoint solved: Psi(0) mean %.6g", float(np.mean(adjoint.psi[:, 0])))
    return adjoint


def solve_bsde_reference(spec: SpecLike, bundle: PathBundle, policy=None,
                         basis: PolynomialBasis = PolynomialBasis()) -> AdjointPath:
    """Backward regression of dPsi = -(l + Q sigma^-1 f) dt + Q dW on a reference ensemble

    The driver depends on Q but not on Psi, and Q at step k comes from the
    same step's regression, so one sweep closes the implicit step.
    """
    if bundle.measure_tag != REFERENCE:
        raise ValueError("solve_bsde_reference needs a reference-measure bundle")
    spec = unwrap_spec(spec)
    adjoint = _backward_sweep(spec, bundle, _controls(bundle, policy), basis, drift_in_driver=True)
    logger.info("reference adjoint solved: Psi(0) mean %.6g", float(np.mean(adjoint.psi[:, 0])))
    return adjoint


@dataclass(frozen=True, eq=False)
class VariationalPath:
    """Z paths with the likelihoods needed for the finite-difference check"""
    z: np.ndarray
    direction: np.ndarray
    epsilon_used: float
    log_likelihood: np.ndarray
    perturbed_log_likelihood: np.ndarray

    def finite_difference(self) -> np.ndarray:
        """(Lambda^eps(T) - Lambda(T)) / eps per path"""
        return (np.exp(self.perturbed_log_likelihood[:, -1]) - np.exp(self.log_likelihood[:, -1])) / self.epsilon_used

    def fd_correlation(self) -> float:
        return float(np.corrcoef(self.z[:, -1], self.finite_difference())[0, 1])

    def fd_rmse(self) -> float:
        return float(np.sqrt(np.mean((self.z[:, -1] - self.finite_difference()) ** 2)))


def simulate_variational(spec: SpecLike, bundle: PathBundle, policy, direction,
                         epsilon: float = 1e-3) -> VariationalPath:
    """Z(k+1) = L(k+1) [Z(k)/L(k) + (db/du . du(k)) . (dW(k) - b(k) dt)], Z(0) = 0

    `direction` is either another policy (du = u - u_o) or a (P, M, D) array du.
    """
    if bundle.measure_tag != REFERENCE:
        raise ValueError("the variational process runs on a reference-measure bundle")
    spec = unwrap_spec(spec)
    base = replay_controls(policy, bundle)
    if hasattr(direction, 'actions'):
        delta = replay_controls(direction, bundle) - base
    else:
        delta = np.broadcast_to(np.asarray(direction, dtype=float), base.shape).copy()

    times, dt = bundle.grid.times, bundle.grid.step
    log_lambda = log_likelihood_from_controls(spec, bundle, base)
    lam = np.exp(log_lambda)
    z = np.zeros((bundle.num_paths, bundle.num_steps + 1))
    for k in range(bundle.num_steps):
        x = bundle.states[:, k]
        b = sigma_inv_drift(spec, times[k], x, base[:, k])
        dw = solve_diffusion(spec, times[k], x, bundle.states[:, k + 1] - x)
        db = np.einsum('pnd,pd->pn', drift_ratio_jacobian(spec, times[k], x, base[:, k]), delta[:, k])
        z[:, k + 1] = lam[:, k + 1] * (z[:, k] / lam[:, k] + np.sum(db * (dw - b * dt), axis=1))

    perturbed = log_likelihood_from_controls(spec, bundle, base + epsilon * delta)
    return VariationalPath(z, delta, float(epsilon), log_lambda, perturbed)
