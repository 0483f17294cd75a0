"""
Static Team Reduction
=====================

Discrete-time team problems rewritten under the reference product measure:
x(1..T) are independent N(0, G G*) draws, the information of every agent is a
fixed function of them, and the decisions only enter the integrand

    L(gamma, x) = Lambda(0,T)(x, u) * (sum_k l(k, x(k), u(k)) + phi(x(T)))

Expectations of L are evaluated by tensor Gauss-Hermite quadrature on small
problems and by Lambda-weighted Monte Carlo otherwise.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss

from girsanov.likelihood import discrete_log_ratio_steps, discrete_likelihood
from girsanov.payoff import discrete_payoff_original, discrete_payoff_reference
from information.info_structure import FeatureMap
from model.problem_spec import DiscreteTeamSpec
from simulation.path_simulator import ORIGINAL, REFERENCE, observe_states, run_discrete, simulate_discrete
from utils.exceptions import DimensionCapExceeded
from utils.helpers import map_chunks

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION_CAP = 6
STATIONARITY_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor Gauss-Hermite nodes for a standard normal vector, weights summing to 1"""
    order: int
    dimension: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def total_nodes(self) -> int:
        return int(self.weights.shape[0])


def gauss_hermite_grid(order: int, dimension: int) -> QuadratureGrid:
    """Tensor grid for N(0, I_dimension): hermgauss nodes scaled by sqrt(2)"""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    points, weights = hermgauss(order)
    points = points * np.sqrt(2.0)
    weights = weights / np.sqrt(np.pi)
    if dimension == 0:
        return QuadratureGrid(order, 0, np.zeros((1, 0)), np.ones(1))
    nodes = np.stack([g.ravel() for g in np.meshgrid(*([points] * dimension), indexing="ij")], axis=1)
    tensor = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([weights] * dimension), indexing="ij")], axis=1), axis=1)
    return QuadratureGrid(order, dimension, nodes, tensor / tensor.sum())


@dataclass(frozen=True, eq=False)
class StaticTeamProblem:
    """Reference-measure (static) form of a DiscreteTeamSpec"""
    dspec: DiscreteTeamSpec
    reference_cholesky: Tuple[np.ndarray, ...]

    @property
    def horizon_steps(self) -> int:
        return self.dspec.horizon_steps

    @property
    def quadrature_dimension(self) -> int:
        """Integration dimension T*n plus n for a Gaussian x(0)"""
        n = self.dspec.state_dim
        extra = n if self.dspec.initial_law.is_gaussian else 0
        return self.horizon_steps * n + extra

    def reference_states(self, x0: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """x(0) followed by x(k+1) = L_k xi(k+1)"""
        states = np.empty((xi.shape[0], self.horizon_steps + 1, self.dspec.state_dim))
        states[:, 0] = x0
        for k, chol in enumerate(self.reference_cholesky):
            states[:, k + 1] = xi[:, k] @ chol.T
        return states

    def observations(self, states: np.ndarray) -> Tuple[np.ndarray, ...]:
        """Information on reference paths; no decision enters"""
        return observe_states(self.dspec, states, self.dspec.grid.times)

    def controls(self, policy, states: np.ndarray) -> np.ndarray:
        observations = self.observations(states)
        return np.stack([policy.actions(k, tuple(z[:, :k + 1] for z in observations))
                         for k in range(self.horizon_steps)], axis=1)

    def weight_functional(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        """Lambda(0,T): the common denominator turning the dynamic payoff static"""
        return np.exp(np.sum(discrete_log_ratio_steps(self.dspec, states, controls), axis=1))

    def costs(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        running = sum(np.asarray(self.dspec.running_cost(k, states[:, k], controls[:, k]), dtype=float).reshape(-1)
                      for k in range(self.horizon_steps))
        return running + np.asarray(self.dspec.terminal_cost(states[:, -1]), dtype=float).reshape(-1)

    def integrand(self, policy, states: np.ndarray) -> np.ndarray:
        controls = self.controls(policy, states)
        return self.weight_functional(states, controls) * self.costs(states, controls)


def to_static(dspec: DiscreteTeamSpec) -> StaticTeamProblem:
    """Package the reference densities and the common-denominator weight"""
    chol = tuple(dspec.noise_cholesky(k) for k in range(dspec.horizon_steps))
    return StaticTeamProblem(dspec, chol)


def _split_nodes(dspec: DiscreteTeamSpec, nodes: np.ndarray):
    n = dspec.state_dim
    law = dspec.initial_law
    if law.is_gaussian:
        x0 = law.from_standard(nodes[:, :n])
        nodes = nodes[:, n:]
    elif law.is_deterministic:
        x0 = np.broadcast_to(np.atleast_1d(np.asarray(law.mean, dtype=float)), (nodes.shape[0], n))
    else:
        raise ValueError("quadrature needs a deterministic or Gaussian initial law")
    return x0, nodes.reshape(nodes.shape[0], dspec.horizon_steps, n)


def _check_dimension(dimension: int, cap: int) -> None:
    if dimension > cap:
        raise DimensionCapExceeded(dimension, cap)


def quadrature_payoff(sp: StaticTeamProblem, policy, order: int = 10,
                      dimension_cap: int = DEFAULT_DIMENSION_CAP) -> float:
    """Deterministic tensor quadrature of the static integrand"""
    _check_dimension(sp.quadrature_dimension, dimension_cap)
    grid = gauss_hermite_grid(order, sp.quadrature_dimension)

    def evaluate(nodes: np.ndarray) -> np.ndarray:
        x0, xi = _split_nodes(sp.dspec, nodes)
        return sp.integrand(policy, sp.reference_states(x0, xi))

    values = map_chunks(evaluate, grid.nodes)
    return float(np.dot(grid.weights, values))


def transition_quadrature_payoff(dspec: DiscreteTeamSpec, policy, order: int = 10,
                                 dimension_cap: int = DEFAULT_DIMENSION_CAP) -> float:
    """Quadrature of the dynamic payoff through the original transitions

    Nodes are pushed forward by x(k+1) = f(k, ., u(k)) + L_k xi(k+1), so no
    likelihood weight appears.
    """
    sp = to_static(dspec)
    _check_dimension(sp.quadrature_dimension, dimension_cap)
    grid = gauss_hermite_grid(order, sp.quadrature_dimension)

    def evaluate(nodes: np.ndarray) -> np.ndarray:
        x0, xi = _split_nodes(dspec, nodes)
        states, _, _, controls = run_discrete(dspec, policy, x0, xi, ORIGINAL)
        return sp.costs(states, controls)

    values = map_chunks(evaluate, grid.nodes)
    return float(np.dot(grid.weights, values))


@dataclass(frozen=True)
class StaticPayoff:
    value: float
    standard_error: float
    method: str
    dimension: int

    def to_dict(self) -> dict:
        return asdict(self)


def static_payoff(sp: StaticTeamProblem, policy, order: int = 10, dimension_cap: int = DEFAULT_DIMENSION_CAP,
                  mc_paths: int = 100_000, seed: int = 0) -> StaticPayoff:
    """Quadrature when the dimension allows it, Lambda-weighted Monte Carlo otherwise"""
    dimension = sp.quadrature_dimension
    if dimension <= dimension_cap and (sp.dspec.initial_law.is_gaussian or sp.dspec.initial_law.is_deterministic):
        return StaticPayoff(quadrature_payoff(sp, policy, order, dimension_cap), 0.0, 'quadrature', dimension)
    logger.info("static payoff: dimension %d above cap %d, using weighted Monte Carlo", dimension, dimension_cap)
    bundle = simulate_discrete(sp.dspec, None, None, mc_paths, seed, measure=REFERENCE)
    bundle = discrete_likelihood(sp.dspec, bundle, policy, policy.feature_map)
    estimate = discrete_payoff_reference(sp.dspec, bundle)
    return StaticPayoff(estimate.value, estimate.standard_error, 'weighted-monte-carlo', dimension)


@dataclass(frozen=True)
class StationarityReport:
    gradients: Dict[int, np.ndarray]
    norms: Dict[int, float]
    tolerance: float

    @property
    def stationary(self) -> bool:
        return all(norm <= self.tolerance for norm in self.norms.values())

    def to_dict(self) -> dict:
        return {
            'gradients': {str(a): g.tolist() for a, g in self.gradients.items()},
            'norms': {str(a): n for a, n in self.norms.items()},
            'tolerance': self.tolerance,
            'stationary': self.stationary,
        }


def static_stationarity(sp: StaticTeamProblem, policy, agents: Optional[Sequence[int]] = None,
                        order: int = 10, dimension_cap: int = DEFAULT_DIMENSION_CAP,
                        tolerance: float = 1e-4, relative_step: float = STATIONARITY_STEP) -> StationarityReport:
    """Central-difference gradient of the quadrature payoff in each agent's parameters"""
    agents = range(policy.num_agents) if agents is None else agents
    gradients, norms = {}, {}
    for agent in agents:
        theta = policy.flat(agent)
        gradient = np.empty_like(theta)
        for j in range(theta.size):
            h = relative_step * (1.0 + abs(theta[j]))
            up, down = theta.copy(), theta.copy()
            up[j] += h
            down[j] -= h
            gradient[j] = (quadrature_payoff(sp, policy.with_flat(agent, up), order, dimension_cap)
                           - quadrature_payoff(sp, policy.with_flat(agent, down), order, dimension_cap)) / (2 * h)
        gradients[agent] = gradient
        norms[agent] = float(np.linalg.norm(gradient))
        logger.debug("agent %d static gradient norm %.3g", agent, norms[agent])
    return StationarityReport(gradients, norms, tolerance)


@dataclass(frozen=True)
class StaticComparison:
    quadrature: float
    mc_mean: float
    mc_se: float
    gap: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def static_compare(dspec: DiscreteTeamSpec, policy, info: FeatureMap, order: int, mc_paths: int, seed: int,
                   dimension_cap: int = DEFAULT_DIMENSION_CAP, z_score: float = 3.0) -> StaticComparison:
    """Quadrature of the static form against direct Monte Carlo of the dynamic form"""
    quadrature = quadrature_payoff(to_static(dspec), policy, order, dimension_cap)
    bundle = simulate_discrete(dspec, policy, info, mc_paths, seed, measure=ORIGINAL)
    estimate = discrete_payoff_original(dspec, bundle)
    gap = quadrature - estimate.value
    return StaticComparison(quadrature, estimate.value, estimate.standard_error, float(gap),
                            abs(gap) <= z_score * estimate.standard_error + 1e-12)
